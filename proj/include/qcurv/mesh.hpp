#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "qcurv/errors.hpp"
#include "qcurv/factor.hpp"

namespace qcurv {

struct TriangleMesh {
  Eigen::MatrixXd vertices;                 // n x 3
  std::vector<std::array<int, 3>> triangles;
};

/// Reads an ASCII OFF file; polygons are fan-triangulated.
inline TriangleMesh read_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mesh file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  std::size_t pos = 0;
  auto next = [&]() -> const std::string& {
    if (pos >= tokens.size()) throw ConfigError("mesh '" + path + "': unexpected end of file");
    return tokens[pos++];
  };
  auto next_int = [&]() {
    const std::string& t = next();
    try {
      std::size_t used = 0;
      const int v = std::stoi(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("mesh '" + path + "': expected an integer, got '" + t + "'");
    }
  };
  auto next_double = [&]() {
    const std::string& t = next();
    try {
      return std::stod(t);
    } catch (const std::exception&) {
      throw ConfigError("mesh '" + path + "': expected a number, got '" + t + "'");
    }
  };
  if (next() != "OFF") throw ConfigError("mesh '" + path + "': missing OFF header");
  const int nv = next_int(), nf = next_int();
  next_int();  // edge count, unused
  if (nv < 4 || nf < 4) throw ConfigError("mesh '" + path + "': too few vertices or faces for a closed surface");
  TriangleMesh mesh;
  mesh.vertices.resize(nv, 3);
  for (int i = 0; i < nv; ++i)
    for (int c = 0; c < 3; ++c) mesh.vertices(i, c) = next_double();
  for (int f = 0; f < nf; ++f) {
    const int k = next_int();
    if (k < 3) throw ConfigError("mesh '" + path + "': face with fewer than 3 vertices");
    std::vector<int> idx(k);
    for (int& v : idx) {
      v = next_int();
      if (v < 0 || v >= nv) throw ConfigError("mesh '" + path + "': vertex index out of range");
    }
    for (int j = 1; j + 1 < k; ++j) mesh.triangles.push_back({idx[0], idx[j], idx[j + 1]});
  }
  return mesh;
}

/// Euler characteristic V - E + F after validating a closed, oriented 2-manifold.
///
/// Every undirected edge must bound exactly two triangles with opposite
/// orientations, the triangles around every vertex must form one cycle and
/// the surface must be connected.
inline int validate_closed_manifold(const TriangleMesh& mesh) {
  const int nv = static_cast<int>(mesh.vertices.rows());
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      if (a == b) throw ConfigError("mesh ingestion: degenerate triangle with repeated vertex");
      if (++directed[{a, b}] > 1) throw ConfigError("mesh ingestion: non-manifold or inconsistently oriented edge");
    }
  }
  for (const auto& [edge, count] : directed) {
    if (!directed.count({edge.second, edge.first}))
      throw ConfigError("mesh ingestion: open boundary edge (" + std::to_string(edge.first) + ", " +
                        std::to_string(edge.second) + ")");
  }
  // vertex links: successor map around each vertex must be a single cycle
  std::vector<std::map<int, int>> link(nv);
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) link[t[e]][t[(e + 1) % 3]] = t[(e + 2) % 3];
  for (int v = 0; v < nv; ++v) {
    if (link[v].empty()) throw ConfigError("mesh ingestion: unreferenced vertex " + std::to_string(v));
    const int start = link[v].begin()->first;
    int cur = start, steps = 0;
    do {
      auto it = link[v].find(cur);
      if (it == link[v].end()) throw ConfigError("mesh ingestion: non-manifold vertex " + std::to_string(v));
      cur = it->second;
      ++steps;
    } while (cur != start && steps <= static_cast<int>(link[v].size()));
    if (steps != static_cast<int>(link[v].size())) throw ConfigError("mesh ingestion: non-manifold vertex " + std::to_string(v));
  }
  // connectivity
  std::vector<std::vector<int>> adj(nv);
  for (const auto& [edge, count] : directed) adj[edge.first].push_back(edge.second);
  std::vector<char> seen(nv, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[v])
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
  }
  if (reached != nv) throw ConfigError("mesh ingestion: surface is not connected");
  const int edges = static_cast<int>(directed.size()) / 2;
  return nv - edges + static_cast<int>(mesh.triangles.size());
}

/// Factor built from a closed triangle mesh.
///
/// Cotangent stiffness with barycentric lumped masses; the lowest n_eig
/// eigenpairs of the generalized problem W phi = lambda M phi; Gauss
/// curvature from angle defects; distance along shortest edge paths.
inline SurfaceFactor make_mesh_factor(const TriangleMesh& mesh, int n_eig, const std::string& label = "mesh") {
  const int chi = validate_closed_manifold(mesh);
  const int n = static_cast<int>(mesh.vertices.rows());
  if (n_eig < 2 || n_eig > n)
    throw ConfigError("mesh factor: n_eig = " + std::to_string(n_eig) + " must lie in [2, vertex count = " + std::to_string(n) + "]");
  const int nt = static_cast<int>(mesh.triangles.size());
  const double pi = std::numbers::pi;

  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd angle_sum = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd stiff = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> tri_area(nt);
  std::vector<std::array<Eigen::Vector3d, 3>> basis_grad(nt);
  for (int t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    const Eigen::Vector3d p[3] = {mesh.vertices.row(tri[0]), mesh.vertices.row(tri[1]), mesh.vertices.row(tri[2])};
    const Eigen::Vector3d normal = (p[1] - p[0]).cross(p[2] - p[0]);
    const double area = 0.5 * normal.norm();
    if (!(area > 0.0)) throw ConfigError("mesh ingestion: zero-area triangle " + std::to_string(t));
    tri_area[t] = area;
    const Eigen::Vector3d unit_n = normal.normalized();
    for (int c = 0; c < 3; ++c) {
      const int i = tri[c], j = tri[(c + 1) % 3], k = tri[(c + 2) % 3];
      mass[i] += area / 3.0;
      const Eigen::Vector3d u = p[(c + 1) % 3] - p[c], v = p[(c + 2) % 3] - p[c];
      angle_sum[i] += std::atan2(u.cross(v).norm(), u.dot(v));
      // angle at vertex i is opposite edge (j, k)
      const double cot = u.dot(v) / u.cross(v).norm();
      stiff(j, k) -= 0.5 * cot;
      stiff(k, j) -= 0.5 * cot;
      stiff(j, j) += 0.5 * cot;
      stiff(k, k) += 0.5 * cot;
      // gradient of the hat function of vertex i: rotate opposite edge by 90 degrees
      const Eigen::Vector3d opp = p[(c + 2) % 3] - p[(c + 1) % 3];
      basis_grad[t][c] = unit_n.cross(opp) / (2.0 * area);
    }
  }

  const Eigen::VectorXd inv_sqrt_m = mass.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd sym = inv_sqrt_m.asDiagonal() * stiff * inv_sqrt_m.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("mesh factor: symmetric eigensolver did not converge");
  Eigen::VectorXd evals = solver.eigenvalues().head(n_eig);
  Eigen::MatrixXd evecs = inv_sqrt_m.asDiagonal() * solver.eigenvectors().leftCols(n_eig);

  const double area = mass.sum();
  const double scale = std::max(1.0, std::abs(solver.eigenvalues()[n - 1]));
  if (std::abs(evals[0]) > 1e-8 * scale) throw NumericError("mesh factor: lowest eigenvalue is not zero");
  if (evals[1] <= 1e-10 * scale) throw ConfigError("mesh factor: lambda_1 vanishes, mesh is not connected");
  evals[0] = 0.0;
  evecs.col(0).setConstant(1.0 / std::sqrt(area));
  for (int k = 0; k < n_eig; ++k) {
    const double resid = (stiff * evecs.col(k) - evals[k] * mass.cwiseProduct(evecs.col(k))).norm();
    if (resid > 1e-6 * scale * std::sqrt(area))
      throw NumericError("mesh factor: eigenpair " + std::to_string(k) + " residual " + std::to_string(resid));
  }

  SurfaceFactor f;
  f.kind = FactorKind::Mesh;
  f.label = label;
  f.area = area;
  f.euler_char = chi;
  f.eigenvalues = evals;
  f.eigenfunctions = evecs;
  f.spectrum_cutoff = n_eig < n ? solver.eigenvalues()[n_eig] : std::numeric_limits<double>::infinity();
  f.weights = mass;
  f.positions = mesh.vertices;
  Eigen::VectorXd defect = (2.0 * pi) * Eigen::VectorXd::Ones(n) - angle_sum;
  f.gauss_curvature = defect.cwiseQuotient(mass);
  f.curvature_laplacian = -(stiff * f.gauss_curvature).cwiseQuotient(mass);

  // gradient samples: one per triangle, ambient components
  f.gradients.weights = Eigen::Map<Eigen::VectorXd>(tri_area.data(), nt);
  std::vector<Eigen::Triplet<double>> trip;
  for (int t = 0; t < nt; ++t)
    for (int c = 0; c < 3; ++c) trip.emplace_back(t, mesh.triangles[t][c], 1.0 / 3.0);
  f.gradients.from_nodes.resize(nt, n);
  f.gradients.from_nodes.setFromTriplets(trip.begin(), trip.end());
  f.gradients.components.assign(3, Eigen::MatrixXd::Zero(nt, n_eig));
  for (int t = 0; t < nt; ++t)
    for (int c = 0; c < 3; ++c)
      for (int d = 0; d < 3; ++d) f.gradients.components[d].row(t) += basis_grad[t][c][d] * evecs.row(mesh.triangles[t][c]);

  // all-pairs shortest edge paths
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  double edge_sum = 0.0;
  int edge_count = 0;
  for (const auto& tri : mesh.triangles) {
    for (int c = 0; c < 3; ++c) {
      const int a = tri[c], b = tri[(c + 1) % 3];
      const double len = (mesh.vertices.row(a) - mesh.vertices.row(b)).norm();
      adj[a].push_back({b, len});
      edge_sum += len;
      ++edge_count;
    }
  }
  f.distances.resize(n, n);
  using Item = std::pair<double, int>;
  for (int s = 0; s < n; ++s) {
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    dist[s] = 0.0;
    heap.push({0.0, s});
    while (!heap.empty()) {
      const auto [d, v] = heap.top();
      heap.pop();
      if (d > dist[v]) continue;
      for (const auto& [w, len] : adj[v])
        if (d + len < dist[w]) {
          dist[w] = d + len;
          heap.push({dist[w], w});
        }
    }
    f.distances.row(s) = dist.transpose();
  }
  f.distances = 0.5 * (f.distances + f.distances.transpose()).eval();
  f.diameter = f.distances.maxCoeff();
  f.injectivity_radius = std::numeric_limits<double>::quiet_NaN();
  f.node_spacing = edge_sum / edge_count;
  return f;
}

inline SurfaceFactor load_mesh_factor(const std::string& path, int n_eig) {
  return make_mesh_factor(read_off(path), n_eig, path);
}

}  // namespace qcurv
