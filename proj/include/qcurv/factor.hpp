#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "qcurv/errors.hpp"
#include "qcurv/quadrature.hpp"
#include "qcurv/spherical_harmonics.hpp"

namespace qcurv {

enum class FactorKind { Sphere, FlatTorus, Mesh, Synthetic };

inline const char* to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::Sphere: return "sphere";
    case FactorKind::FlatTorus: return "flat-torus";
    case FactorKind::Mesh: return "mesh";
    case FactorKind::Synthetic: return "synthetic";
  }
  return "unknown";
}

/// Samples used to integrate products of eigenfunction gradients.
///
/// Closed-form factors sample at the nodes in an orthonormal tangent frame;
/// meshes sample once per triangle with ambient gradient components.
struct GradientSamples {
  Eigen::VectorXd weights;
  Eigen::SparseMatrix<double> from_nodes;   // samples x nodes
  std::vector<Eigen::MatrixXd> components;  // each samples x eigenpairs
};

/// A closed surface used as one factor of a product 4-manifold.
///
/// Spectral data refer to the non-negative operator -div grad. Synthetic
/// factors carry only a spectrum and a constant curvature; their nodes are
/// replaced by abstract anchors with a declared minimal separation.
struct SurfaceFactor {
  FactorKind kind = FactorKind::Synthetic;
  std::string label;
  double area = 0.0;
  int euler_char = 0;
  double kappa = std::numeric_limits<double>::quiet_NaN();

  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenfunctions;  // nodes x eigenpairs, orthonormal under `weights`
  /// Smallest eigenvalue not contained in `eigenvalues`.
  double spectrum_cutoff = std::numeric_limits<double>::infinity();

  Eigen::VectorXd weights;
  Eigen::MatrixXd positions;  // nodes x 3
  Eigen::VectorXd gauss_curvature;
  Eigen::VectorXd curvature_laplacian;  // div grad K at nodes
  Eigen::MatrixXd distances;
  GradientSamples gradients;

  double diameter = 0.0;
  double injectivity_radius = 0.0;
  double node_spacing = 0.0;

  int anchor_count = 0;
  double anchor_separation = 0.0;

  /// Eigenfunctions at exp_node(x e1 + y e2); empty for meshes and synthetic factors.
  std::function<Eigen::VectorXd(int node, double x, double y)> eval_at_offset;

  bool has_nodes() const { return weights.size() > 0; }
  int node_count() const { return static_cast<int>(weights.size()); }
  int eigen_count() const { return static_cast<int>(eigenvalues.size()); }
  bool constant_curvature() const { return std::isfinite(kappa); }

  void require_nodes(const std::string& op) const {
    if (!has_nodes()) throw SpectralOnlyError(op + " needs node values on factor '" + label + "'");
  }

  double distance(int i, int j) const {
    require_nodes("distance");
    return distances(i, j);
  }

  /// Lower bound on the distance between nodes (or anchors, for synthetic factors).
  double distance_lower_bound(int i, int j) const {
    if (has_nodes()) return distances(i, j);
    return i == j ? 0.0 : anchor_separation;
  }

  int point_count() const { return has_nodes() ? node_count() : anchor_count; }

  /// Matrix of integrals of f * phi_i * phi_k for a node field f.
  Eigen::MatrixXd weighted_mass(const Eigen::VectorXd& f) const {
    require_nodes("weighted mass matrix");
    return eigenfunctions.transpose() * (weights.cwiseProduct(f)).asDiagonal() * eigenfunctions;
  }

  /// Matrix of integrals of f * <grad phi_i, grad phi_k> for a node field f.
  Eigen::MatrixXd weighted_stiffness(const Eigen::VectorXd& f) const {
    require_nodes("weighted stiffness matrix");
    const Eigen::VectorXd sample_f = gradients.from_nodes * f;
    const Eigen::VectorXd scale = gradients.weights.cwiseProduct(sample_f);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(eigen_count(), eigen_count());
    for (const auto& comp : gradients.components) out += comp.transpose() * scale.asDiagonal() * comp;
    return out;
  }
};

struct FactorChecks {
  double area_error = 0.0;        // relative |sum w - area| / area
  double gram_residual = 0.0;     // max |Phi^T W Phi - I|
  double gauss_bonnet_error = 0.0;  // |int K - 2 pi chi|
  double min_weight = 0.0;
  double lambda0 = 0.0;
};

inline FactorChecks check_factor(const SurfaceFactor& f) {
  FactorChecks c;
  c.lambda0 = f.eigenvalues.size() ? f.eigenvalues[0] : 0.0;
  if (!f.has_nodes()) {
    c.gauss_bonnet_error = std::abs(f.kappa * f.area - 2.0 * std::numbers::pi * f.euler_char);
    c.min_weight = std::numeric_limits<double>::infinity();
    return c;
  }
  c.area_error = std::abs(f.weights.sum() - f.area) / f.area;
  const Eigen::MatrixXd gram = f.eigenfunctions.transpose() * f.weights.asDiagonal() * f.eigenfunctions;
  c.gram_residual = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  c.gauss_bonnet_error = std::abs(f.weights.dot(f.gauss_curvature) - 2.0 * std::numbers::pi * f.euler_char);
  c.min_weight = f.weights.minCoeff();
  return c;
}

namespace detail {

inline Eigen::Vector3d sphere_point(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

inline double sphere_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& q) {
  return std::atan2(p.cross(q).norm(), p.dot(q));
}

}  // namespace detail

/// Unit sphere with a Gauss-Legendre x uniform-longitude grid.
///
/// nTheta >= 2 lmax + 2 latitudes and as many longitudes; the rule
/// integrates products of two harmonics of degree <= lmax exactly.
inline SurfaceFactor make_sphere_factor(int lmax, int n_theta) {
  if (lmax < 2) throw ConfigError("sphere factor: lmax must be >= 2");
  if (n_theta < 2 * lmax + 2)
    throw ConfigError("sphere factor: n_theta = " + std::to_string(n_theta) + " is below the exactness bound 2*lmax+2 = " +
                      std::to_string(2 * lmax + 2));
  const double pi = std::numbers::pi;
  const int n_phi = n_theta;
  const int n = n_theta * n_phi;
  const int n_eig = (lmax + 1) * (lmax + 1);
  const QuadratureRule gl = gauss_legendre(n_theta);

  SurfaceFactor f;
  f.kind = FactorKind::Sphere;
  f.label = "S2(lmax=" + std::to_string(lmax) + ")";
  f.area = 4.0 * pi;
  f.euler_char = 2;
  f.kappa = 1.0;
  f.eigenvalues.resize(n_eig);
  for (int l = 0; l <= lmax; ++l)
    for (int m = -l; m <= l; ++m) f.eigenvalues[sh_index(l, m)] = double(l * (l + 1));
  f.spectrum_cutoff = double((lmax + 1) * (lmax + 2));

  f.weights.resize(n);
  f.positions.resize(n, 3);
  f.eigenfunctions.resize(n, n_eig);
  Eigen::MatrixXd g_theta(n, n_eig), g_phi(n, n_eig);
  std::vector<double> thetas(n), phis(n);
  for (int i = 0; i < n_theta; ++i) {
    // latitudes ordered north to south
    const double theta = std::acos(-gl.nodes[i]);
    for (int j = 0; j < n_phi; ++j) {
      const int k = i * n_phi + j;
      const double phi = 2.0 * pi * j / n_phi;
      thetas[k] = theta;
      phis[k] = phi;
      f.weights[k] = gl.weights[i] * 2.0 * pi / n_phi;
      f.positions.row(k) = detail::sphere_point(theta, phi);
      Eigen::VectorXd vals(n_eig), gt, gp;
      real_spherical_harmonics(lmax, theta, phi, vals, &gt, &gp);
      f.eigenfunctions.row(k) = vals;
      g_theta.row(k) = gt;
      g_phi.row(k) = gp;
    }
  }
  f.gauss_curvature = Eigen::VectorXd::Ones(n);
  f.curvature_laplacian = Eigen::VectorXd::Zero(n);
  f.distances.resize(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      f.distances(p, q) = p == q ? 0.0 : detail::sphere_distance(f.positions.row(p), f.positions.row(q));

  f.gradients.weights = f.weights;
  f.gradients.from_nodes.resize(n, n);
  f.gradients.from_nodes.setIdentity();
  f.gradients.components = {std::move(g_theta), std::move(g_phi)};

  f.diameter = pi;
  f.injectivity_radius = pi;
  f.node_spacing = pi / n_theta;

  f.eval_at_offset = [lmax, n_eig, thetas, phis](int node, double x, double y) {
    const double theta = thetas[node], phi = phis[node];
    const Eigen::Vector3d p = detail::sphere_point(theta, phi);
    const Eigen::Vector3d e_theta(std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta));
    const Eigen::Vector3d e_phi(-std::sin(phi), std::cos(phi), 0.0);
    const double r = std::hypot(x, y);
    Eigen::Vector3d q = p;
    if (r > 0.0) q = std::cos(r) * p + std::sin(r) * (x * e_theta + y * e_phi) / r;
    const double th = std::acos(std::clamp(q.z(), -1.0, 1.0));
    const double ph = std::atan2(q.y(), q.x());
    Eigen::VectorXd vals(n_eig);
    real_spherical_harmonics(lmax, th, ph, vals);
    return vals;
  };
  return f;
}

namespace detail {

struct TorusMode {
  int p, q;
  bool sine;
  double eigenvalue;
};

inline std::vector<TorusMode> torus_modes(double l1, double l2, int kmax) {
  const double c = 4.0 * std::numbers::pi * std::numbers::pi;
  std::vector<TorusMode> modes{{0, 0, false, 0.0}};
  for (int p = 0; p <= kmax; ++p) {
    for (int q = -kmax; q <= kmax; ++q) {
      if (p == 0 && q <= 0) continue;
      const double ev = c * (p * p / (l1 * l1) + q * q / (l2 * l2));
      modes.push_back({p, q, false, ev});
      modes.push_back({p, q, true, ev});
    }
  }
  std::stable_sort(modes.begin(), modes.end(),
                   [](const TorusMode& a, const TorusMode& b) { return a.eigenvalue < b.eigenvalue; });
  return modes;
}

inline double torus_eigenfunction(const TorusMode& m, double l1, double l2, double x, double y, double* dx = nullptr,
                                  double* dy = nullptr) {
  const double area = l1 * l2;
  if (m.p == 0 && m.q == 0) {
    if (dx) *dx = 0.0;
    if (dy) *dy = 0.0;
    return 1.0 / std::sqrt(area);
  }
  const double two_pi = 2.0 * std::numbers::pi;
  const double kx = two_pi * m.p / l1, ky = two_pi * m.q / l2;
  const double arg = kx * x + ky * y;
  const double amp = std::sqrt(2.0 / area);
  const double v = m.sine ? std::sin(arg) : std::cos(arg);
  const double dv = m.sine ? std::cos(arg) : -std::sin(arg);
  if (dx) *dx = amp * kx * dv;
  if (dy) *dy = amp * ky * dv;
  return amp * v;
}

}  // namespace detail

/// Flat torus R^2 / (L1 Z x L2 Z) with a uniform grid and its Fourier eigenbasis.
inline SurfaceFactor make_flat_torus_factor(double l1, double l2, int kmax) {
  if (!(l1 > 0.0) || !(l2 > 0.0)) throw ConfigError("flat torus: side lengths must be positive");
  if (kmax < 1) throw ConfigError("flat torus: kmax must be >= 1");
  const int n1 = 2 * kmax + 2, n2 = 2 * kmax + 2;
  const int n = n1 * n2;
  const auto modes = detail::torus_modes(l1, l2, kmax);
  const int n_eig = static_cast<int>(modes.size());

  SurfaceFactor f;
  f.kind = FactorKind::FlatTorus;
  f.label = "T2(" + std::to_string(l1) + "x" + std::to_string(l2) + ")";
  f.area = l1 * l2;
  f.euler_char = 0;
  f.kappa = 0.0;
  f.eigenvalues.resize(n_eig);
  for (int m = 0; m < n_eig; ++m) f.eigenvalues[m] = modes[m].eigenvalue;
  const double lmax_side = std::max(l1, l2);
  f.spectrum_cutoff = 4.0 * std::numbers::pi * std::numbers::pi * (kmax + 1) * (kmax + 1) / (lmax_side * lmax_side);

  f.weights = Eigen::VectorXd::Constant(n, f.area / n);
  f.positions = Eigen::MatrixXd::Zero(n, 3);
  f.eigenfunctions.resize(n, n_eig);
  Eigen::MatrixXd gx(n, n_eig), gy(n, n_eig);
  std::vector<double> xs(n), ys(n);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const int k = i * n2 + j;
      xs[k] = l1 * i / n1;
      ys[k] = l2 * j / n2;
      f.positions(k, 0) = xs[k];
      f.positions(k, 1) = ys[k];
      for (int m = 0; m < n_eig; ++m)
        f.eigenfunctions(k, m) = detail::torus_eigenfunction(modes[m], l1, l2, xs[k], ys[k], &gx(k, m), &gy(k, m));
    }
  }
  f.gauss_curvature = Eigen::VectorXd::Zero(n);
  f.curvature_laplacian = Eigen::VectorXd::Zero(n);
  f.distances.resize(n, n);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      double dx = std::abs(xs[p] - xs[q]), dy = std::abs(ys[p] - ys[q]);
      dx = std::min(dx, l1 - dx);
      dy = std::min(dy, l2 - dy);
      f.distances(p, q) = std::hypot(dx, dy);
    }
  }
  f.gradients.weights = f.weights;
  f.gradients.from_nodes.resize(n, n);
  f.gradients.from_nodes.setIdentity();
  f.gradients.components = {std::move(gx), std::move(gy)};

  f.diameter = 0.5 * std::hypot(l1, l2);
  f.injectivity_radius = 0.5 * std::min(l1, l2);
  f.node_spacing = std::max(l1 / n1, l2 / n2);
  f.eval_at_offset = [modes, l1, l2, xs, ys](int node, double x, double y) {
    Eigen::VectorXd vals(modes.size());
    for (std::size_t m = 0; m < modes.size(); ++m)
      vals[m] = detail::torus_eigenfunction(modes[m], l1, l2, xs[node] + x, ys[node] + y);
    return vals;
  };
  return f;
}

struct SyntheticOptions {
  /// Declared injectivity radius; defaults to pi/sqrt(kappa) for kappa > 0 and 1 otherwise.
  double injectivity_radius = 0.0;
  /// Declared diameter scale; defaults to twice the injectivity radius.
  double diameter = 0.0;
  int anchors = 4;
  /// Minimal pairwise distance between distinct anchors; defaults to the diameter scale.
  double anchor_separation = 0.0;
};

/// Spectral-only factor with constant curvature kappa and a prescribed spectrum.
inline SurfaceFactor make_synthetic_factor(double kappa, const std::vector<double>& eigenvalues, double area,
                                           SyntheticOptions opts = {}) {
  if (!(area > 0.0)) throw ConfigError("synthetic factor: area must be positive");
  if (eigenvalues.empty() || eigenvalues.front() != 0.0)
    throw ConfigError("synthetic factor: the eigenvalue list must start with 0");
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues[i] < 0.0) throw ConfigError("synthetic factor: negative eigenvalue " + std::to_string(eigenvalues[i]));
    if (i > 0 && eigenvalues[i] < eigenvalues[i - 1]) throw ConfigError("synthetic factor: eigenvalues must be sorted");
  }
  const double chi = kappa * area / (2.0 * std::numbers::pi);
  if (std::abs(chi - std::round(chi)) > 1e-8)
    throw ConfigError("synthetic factor: kappa * area / (2 pi) = " + std::to_string(chi) +
                      " is not an integer Euler characteristic");
  SurfaceFactor f;
  f.kind = FactorKind::Synthetic;
  f.label = "synthetic(kappa=" + std::to_string(kappa) + ")";
  f.area = area;
  f.euler_char = static_cast<int>(std::lround(chi));
  f.kappa = kappa;
  f.eigenvalues = Eigen::Map<const Eigen::VectorXd>(eigenvalues.data(), static_cast<Eigen::Index>(eigenvalues.size()));
  f.spectrum_cutoff = std::nextafter(eigenvalues.back(), std::numeric_limits<double>::infinity());
  f.injectivity_radius = opts.injectivity_radius > 0.0 ? opts.injectivity_radius
                         : kappa > 0.0                 ? std::numbers::pi / std::sqrt(kappa)
                                                       : 1.0;
  f.diameter = opts.diameter > 0.0 ? opts.diameter : 2.0 * f.injectivity_radius;
  f.anchor_count = opts.anchors;
  f.anchor_separation = opts.anchor_separation > 0.0 ? opts.anchor_separation : f.diameter;
  return f;
}

}  // namespace qcurv
