#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qcurv/errors.hpp"

namespace qcurv {

struct TransportPlan {
  double cost = 0.0;
  struct Cell {
    int i, j;
    double flow;
  };
  std::vector<Cell> cells;  // basic cells, zero flows included
  int iterations = 0;
};

/// Exact balanced transportation problem by the MODI (u-v) simplex.
///
/// Supplies a and demands b must have equal totals; costs are m x n.
inline TransportPlan solve_transport(const Eigen::MatrixXd& cost, const std::vector<double>& a,
                                     const std::vector<double>& b) {
  const int m = static_cast<int>(a.size()), n = static_cast<int>(b.size());
  if (m == 0 || n == 0) throw ConfigError("transport: empty marginal");
  if (cost.rows() != m || cost.cols() != n) throw ConfigError("transport: cost matrix shape mismatch");
  double sa = 0.0, sb = 0.0;
  for (double x : a) {
    if (x < 0.0) throw ConfigError("transport: negative mass");
    sa += x;
  }
  for (double x : b) {
    if (x < 0.0) throw ConfigError("transport: negative mass");
    sb += x;
  }
  if (std::abs(sa - sb) > 1e-9) throw ConfigError("transport: total masses differ by " + std::to_string(sa - sb));

  // northwest corner start: exactly m + n - 1 basic cells
  std::vector<TransportPlan::Cell> basis;
  basis.reserve(m + n - 1);
  {
    std::vector<double> ra = a, rb = b;
    int i = 0, j = 0;
    while (true) {
      const double x = std::min(ra[i], rb[j]);
      basis.push_back({i, j, x});
      ra[i] -= x;
      rb[j] -= x;
      if (i == m - 1 && j == n - 1) break;
      if (j == n - 1 || (i < m - 1 && ra[i] <= rb[j])) ++i;
      else ++j;
    }
  }

  const double scale = std::max(cost.cwiseAbs().maxCoeff(), 1e-300);
  const double tol = 1e-12 * scale;
  const int nodes = m + n;
  std::vector<double> pot(nodes);
  std::vector<std::vector<int>> adj(nodes);
  std::vector<int> parent_edge(nodes), order;
  int iter = 0;
  const int max_iter = 50 * (m + n) * (m + n) + 1000;

  auto build_tree = [&](int root) {
    for (auto& l : adj) l.clear();
    for (int e = 0; e < static_cast<int>(basis.size()); ++e) {
      adj[basis[e].i].push_back(e);
      adj[m + basis[e].j].push_back(e);
    }
    std::fill(parent_edge.begin(), parent_edge.end(), -2);
    parent_edge[root] = -1;
    order.assign(1, root);
    for (std::size_t h = 0; h < order.size(); ++h) {
      const int v = order[h];
      for (int e : adj[v]) {
        const int w = v < m ? m + basis[e].j : basis[e].i;
        if (parent_edge[w] != -2) continue;
        parent_edge[w] = e;
        order.push_back(w);
      }
    }
    if (static_cast<int>(order.size()) != nodes) throw NumericError("transport: basis is not a spanning tree");
  };

  while (true) {
    build_tree(0);
    pot[0] = 0.0;
    for (std::size_t h = 1; h < order.size(); ++h) {
      const int w = order[h];
      const auto& c = basis[parent_edge[w]];
      const double cij = cost(c.i, c.j);
      if (w < m) pot[w] = cij - pot[m + c.j];
      else pot[w] = cij - pot[c.i];
    }
    double best = -tol;
    int bi = -1, bj = -1;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) {
        const double r = cost(i, j) - pot[i] - pot[m + j];
        if (r < best) {
          best = r;
          bi = i;
          bj = j;
        }
      }
    if (bi < 0) break;
    if (++iter > max_iter) throw NumericError("transport: simplex iteration limit reached");

    // cycle: entering cell plus the tree path from column bj back to row bi
    build_tree(bi);
    std::vector<int> path;
    for (int v = m + bj; v != bi;) {
      const int e = parent_edge[v];
      path.push_back(e);
      v = v < m ? m + basis[e].j : basis[e].i;
    }
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      if (basis[path[k]].flow < theta) {
        theta = basis[path[k]].flow;
        leave = path[k];
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) basis[path[k]].flow += (k % 2 == 0 ? -theta : theta);
    basis[leave] = {bi, bj, theta};
  }

  TransportPlan plan;
  plan.iterations = iter;
  for (auto& c : basis) {
    c.flow = std::max(c.flow, 0.0);
    plan.cost += c.flow * cost(c.i, c.j);
  }
  plan.cells = std::move(basis);
  return plan;
}

}  // namespace qcurv
