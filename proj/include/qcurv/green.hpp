#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "qcurv/errors.hpp"
#include "qcurv/paneitz.hpp"

namespace qcurv {

struct GreenOptions {
  int n_modes = 0;      // 0: the whole basis
  bool rescale = true;  // Q' = (8 pi^2 / k_P) Q
  int min_modes = 10;
};

/// Green's function of P with pole x and its regular part S = G + 2 log dist.
///
/// The symmetric normalization G(x,y) = 16 pi^2 K(x,y) - 2 H(x) - 2 H(y) uses
/// K = sum over non-constant modes of phi_m(x) phi_m(y) / mu_m and P H = Q' - mean Q'.
struct GreenData {
  ProductPoint pole;
  int n_modes = 0;
  double q_scale = 1.0;    // Q' = q_scale Q (0 when k_P = 0)
  Eigen::MatrixXd values;  // G(x, .) at nodes; the pole entry holds S(x, x)
  Eigen::MatrixXd regular;  // S(x, .) at nodes
  double s_diag = 0.0;      // S(x, x), Richardson-extrapolated
  std::array<double, 3> shell_radii{};
  std::array<double, 3> shell_means{};
  double laplacian = 0.0;     // (div grad_y S)(x, x) from the local fit
  double gradient_norm = 0.0;  // |grad_y S|(x, x)
  double scalar_curvature = 0.0;
  double quantity = 0.0;       // laplacian + 4 |grad|^2 - R / 8
  double weak_residual = 0.0;  // relative, over the truncated test space
  std::string fit;             // "normal-coordinates" or "isotropic-nodes"
};

namespace detail {

/// 32 unit directions of R^4: the 8 axis vectors and the 24 vertices (+-1,+-1,0,0)/sqrt 2.
inline std::vector<Eigen::Vector4d> stencil_directions() {
  std::vector<Eigen::Vector4d> dirs;
  for (int i = 0; i < 4; ++i)
    for (int s : {1, -1}) {
      Eigen::Vector4d v = Eigen::Vector4d::Zero();
      v[i] = s;
      dirs.push_back(v);
    }
  const double r = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          Eigen::Vector4d v = Eigen::Vector4d::Zero();
          v[i] = si * r;
          v[j] = sj * r;
          dirs.push_back(v);
        }
  return dirs;
}

}  // namespace detail

inline GreenData green_function(const ConformalProblem& prob, ProductPoint x, const GreenOptions& opts = {}) {
  const auto& m = *prob.manifold;
  m.require_nodes("Green's function");
  if (x.a < 0 || x.a >= m.nodes_a() || x.b < 0 || x.b >= m.nodes_b()) throw ConfigError("Green: pole is not a node");
  const int n = opts.n_modes > 0 ? opts.n_modes : m.mode_count();
  if (n > m.mode_count()) throw ConfigError("Green: n_modes exceeds the basis size");
  if (n < opts.min_modes)
    throw ConfigError("Green: " + std::to_string(n) + " modes are too few for the tolerance (need >= " +
                      std::to_string(opts.min_modes) + ")");
  const double pi = std::numbers::pi;
  const double eight_pi2 = 8.0 * pi * pi;

  GreenData out;
  out.pole = x;
  out.n_modes = n;
  if (std::abs(prob.k_p) < 1e-12 * eight_pi2) {
    out.q_scale = 0.0;
  } else if (opts.rescale) {
    out.q_scale = eight_pi2 / prob.k_p;
  } else if (std::abs(prob.k_p - eight_pi2) > 1e-8 * eight_pi2) {
    throw PreconditionError("Green: P G + 2 Q = 16 pi^2 delta is solvable only when k_P = 8 pi^2 (k_P = " +
                            std::to_string(prob.k_p) + "); enable the rescaled curvature Q' = (8 pi^2 / k_P) Q");
  } else {
    out.q_scale = 1.0;
  }

  const Eigen::MatrixXd a = prob.paneitz.matrix().topLeftCorner(n, n);
  const SpectrumSummary spec = summarize_spectrum(
      [&] {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
        return std::vector<double>(es.eigenvalues().data(), es.eigenvalues().data() + n);
      }(),
      1, 1e-8);
  if (spec.negative_count > 0 || spec.kernel_dim != 1)
    throw PreconditionError("Green: needs P >= 0 with kernel = constants (negative " +
                            std::to_string(spec.negative_count) + ", kernel " + std::to_string(spec.kernel_dim) + ")");
  const Eigen::MatrixXd a1 = a.bottomRightCorner(n - 1, n - 1);
  const Eigen::LLT<Eigen::MatrixXd> llt(a1);
  if (llt.info() != Eigen::Success) throw NumericError("Green: Cholesky factorization of P failed");

  const Eigen::VectorXd q_coef = m.analyze(prob.q.node_values()).head(n) * out.q_scale;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(n);
  h.tail(n - 1) = llt.solve(q_coef.tail(n - 1));
  const Eigen::VectorXd bx = m.modes_at(x).head(n);
  Eigen::VectorXd kx = Eigen::VectorXd::Zero(n);
  kx.tail(n - 1) = llt.solve(bx.tail(n - 1));
  const double hx = h.dot(bx);
  // coefficients of y -> G(x, y), constant mode carrying -2 H(x)
  Eigen::VectorXd gc = 16.0 * pi * pi * kx - 2.0 * h;
  Eigen::VectorXd full = Eigen::VectorXd::Zero(m.mode_count());
  full.head(n) = gc;
  full[0] += m.constant_coefficient(-2.0 * hx);

  // weak residual: <G, P phi> + 2 int Q' phi - 16 pi^2 phi(x) over basis test functions
  {
    const Eigen::VectorXd pg = a * full.head(n);
    Eigen::VectorXd r = pg + 2.0 * q_coef - 16.0 * pi * pi * bx;
    if (out.q_scale == 0.0) r[0] = pg[0];  // 16 pi^2 (delta_x - 1/V) has no constant component
    out.weak_residual = r.norm() / (16.0 * pi * pi * bx.norm());
  }

  out.values = m.synthesize(full);
  out.regular = out.values;
  const auto& fa = m.factor_a();
  const auto& fb = m.factor_b();
  for (int j = 0; j < m.nodes_b(); ++j)
    for (int i = 0; i < m.nodes_a(); ++i) {
      const double d = m.distance(x, {i, j});
      if (d > 0.0) out.regular(i, j) += 2.0 * std::log(d);
    }
  out.scalar_curvature = 2.0 * (fa.gauss_curvature[x.a] + fb.gauss_curvature[x.b]);
  const double hstep = std::max(fa.node_spacing, fb.node_spacing);
  out.shell_radii = {2.0 * hstep, 4.0 * hstep, 8.0 * hstep};

  if (fa.eval_at_offset && fb.eval_at_offset) {
    out.fit = "normal-coordinates";
    const auto dirs = detail::stencil_directions();
    const auto& modes = m.modes();
    auto s_at = [&](const Eigen::Vector4d& v) {
      const Eigen::VectorXd va = fa.eval_at_offset(x.a, v[0], v[1]);
      const Eigen::VectorXd vb = fb.eval_at_offset(x.b, v[2], v[3]);
      double g = 0.0;
      for (int k = 0; k < m.mode_count(); ++k) g += full[k] * va[modes[k].i] * vb[modes[k].j];
      return g + 2.0 * std::log(v.norm());
    };
    const int nd = static_cast<int>(dirs.size());
    Eigen::MatrixXd design(3 * nd, 15);
    Eigen::VectorXd rhs(3 * nd);
    for (int ri = 0; ri < 3; ++ri) {
      const double r = out.shell_radii[ri];
      double mean = 0.0;
      for (int di = 0; di < nd; ++di) {
        const Eigen::Vector4d v = r * dirs[di];
        const double s = s_at(v);
        mean += s / nd;
        const int row = ri * nd + di;
        int col = 0;
        design(row, col++) = 1.0;
        for (int p = 0; p < 4; ++p) design(row, col++) = v[p];
        for (int p = 0; p < 4; ++p)
          for (int q = p; q < 4; ++q) design(row, col++) = p == q ? 0.5 * v[p] * v[p] : v[p] * v[q];
        rhs[row] = s;
      }
      out.shell_means[ri] = mean;
    }
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
    out.gradient_norm = coef.segment(1, 4).norm();
    // diagonal second-derivative entries sit at columns 5, 9, 12, 14
    out.laplacian = coef[5] + coef[9] + coef[12] + coef[14];
  } else {
    // isotropic fit S ~ S0 + c d^2 over nodes in the shell band, Laplacian 8c, gradient 0
    out.fit = "isotropic-nodes";
    std::vector<double> ds, ss;
    std::array<double, 3> sums{}, counts{};
    for (int j = 0; j < m.nodes_b(); ++j)
      for (int i = 0; i < m.nodes_a(); ++i) {
        const double d = m.distance(x, {i, j});
        if (d < 1.5 * hstep || d > 8.0 * hstep) continue;
        ds.push_back(d * d);
        ss.push_back(out.regular(i, j));
        const int shell = d < 3.0 * hstep ? 0 : d < 6.0 * hstep ? 1 : 2;
        sums[shell] += out.regular(i, j);
        counts[shell] += 1.0;
      }
    if (ds.size() < 3) throw ConfigError("Green: too few nodes near the pole for the isotropic fit");
    for (int k = 0; k < 3; ++k) out.shell_means[k] = counts[k] > 0 ? sums[k] / counts[k] : NAN;
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      mx += ds[k];
      my += ss[k];
    }
    mx /= ds.size();
    my /= ds.size();
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      sxy += (ds[k] - mx) * (ss[k] - my);
      sxx += (ds[k] - mx) * (ds[k] - mx);
    }
    const double c = sxx > 0 ? sxy / sxx : 0.0;
    out.laplacian = 8.0 * c;
    out.gradient_norm = 0.0;
  }
  // Richardson on shell means, A(r) = S0 + c2 r^2 + c4 r^4 through the three radii
  {
    Eigen::Matrix3d vm;
    Eigen::Vector3d b;
    for (int k = 0; k < 3; ++k) {
      const double r2 = out.shell_radii[k] * out.shell_radii[k];
      vm(k, 0) = 1.0;
      vm(k, 1) = r2;
      vm(k, 2) = r2 * r2;
      b[k] = out.shell_means[k];
    }
    if (b.allFinite()) out.s_diag = vm.fullPivLu().solve(b)[0];
    else out.s_diag = NAN;
  }
  out.regular(x.a, x.b) = out.s_diag;
  out.values(x.a, x.b) = out.s_diag;
  out.quantity = out.laplacian + 4.0 * out.gradient_norm * out.gradient_norm - out.scalar_curvature / 8.0;
  return out;
}

/// |S(x, y) - S(y, x)| for two nodes, from two pole computations.
inline double green_symmetry_gap(const GreenData& gx, const GreenData& gy) {
  return std::abs(gx.regular(gy.pole.a, gy.pole.b) - gy.regular(gx.pole.a, gx.pole.b));
}

}  // namespace qcurv
