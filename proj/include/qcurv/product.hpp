#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qcurv/errors.hpp"
#include "qcurv/factor.hpp"

namespace qcurv {

/// A point of a product manifold: node (or anchor) indices in each factor.
struct ProductPoint {
  int a = 0;
  int b = 0;
  auto operator<=>(const ProductPoint&) const = default;
};

/// Tensor product of factor eigenfunctions phi_i(x_a) psi_j(x_b).
struct ProductMode {
  int i = 0;
  int j = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double s = 0.0;  // alpha + beta, the -div grad eigenvalue
};

/// Riemannian product of two surfaces with a truncated tensor eigenbasis.
///
/// Node fields are stored as (nodes of A) x (nodes of B) matrices. The basis
/// keeps every pair with s = alpha + beta <= s_max, ordered by s; mode 0 is
/// the constant 1/sqrt(volume). A product with a synthetic factor is
/// spectral-only.
class ProductManifold4D {
 public:
  ProductManifold4D(SurfaceFactor a, SurfaceFactor b, std::optional<double> s_max = std::nullopt)
      : a_(std::move(a)), b_(std::move(b)) {
    const double cutoff = std::min(a_.spectrum_cutoff, b_.spectrum_cutoff);
    if (s_max) {
      if (!(*s_max > 0.0)) throw ConfigError("product: s_max must be positive");
      if (*s_max >= cutoff)
        throw ConfigError("product: s_max = " + std::to_string(*s_max) +
                          " exceeds the range where both factor spectra are complete (< " + std::to_string(cutoff) + ")");
      s_max_ = *s_max;
    } else {
      // largest factor eigenvalue below the completeness cutoff
      for (const auto* f : {&a_, &b_})
        for (double ev : f->eigenvalues)
          if (ev < cutoff) s_max_ = std::max(s_max_, ev);
    }
    mode_index_ = Eigen::MatrixXi::Constant(a_.eigen_count(), b_.eigen_count(), -1);
    for (int i = 0; i < a_.eigen_count(); ++i)
      for (int j = 0; j < b_.eigen_count(); ++j) {
        const double s = a_.eigenvalues[i] + b_.eigenvalues[j];
        if (s <= s_max_ * (1.0 + 1e-12)) modes_.push_back({i, j, a_.eigenvalues[i], b_.eigenvalues[j], s});
      }
    std::stable_sort(modes_.begin(), modes_.end(), [](const ProductMode& x, const ProductMode& y) {
      if (x.s != y.s) return x.s < y.s;
      if (x.i != y.i) return x.i < y.i;
      return x.j < y.j;
    });
    if (modes_.size() < 2) throw ConfigError("product: basis truncation keeps fewer than two modes");
    for (std::size_t m = 0; m < modes_.size(); ++m) mode_index_(modes_[m].i, modes_[m].j) = static_cast<int>(m);
  }

  const SurfaceFactor& factor_a() const { return a_; }
  const SurfaceFactor& factor_b() const { return b_; }

  bool spectral_only() const { return !a_.has_nodes() || !b_.has_nodes(); }
  void require_nodes(const std::string& op) const {
    if (spectral_only()) throw SpectralOnlyError(op + " needs nodes on both factors");
  }

  bool constant_curvature() const { return a_.constant_curvature() && b_.constant_curvature(); }
  double volume() const { return a_.area * b_.area; }
  int euler_char() const { return a_.euler_char * b_.euler_char; }
  double s_max() const { return s_max_; }

  const std::vector<ProductMode>& modes() const { return modes_; }
  int mode_count() const { return static_cast<int>(modes_.size()); }
  int mode_of(int i, int j) const { return mode_index_(i, j); }

  int nodes_a() const { return a_.node_count(); }
  int nodes_b() const { return b_.node_count(); }
  long node_count() const { return long(nodes_a()) * nodes_b(); }

  /// Product quadrature weights, nodes_a x nodes_b.
  Eigen::MatrixXd weights() const {
    require_nodes("product weights");
    return a_.weights * b_.weights.transpose();
  }

  /// Curvature of factor A broadcast over product nodes (K_a(x_a)).
  Eigen::MatrixXd curvature_a() const {
    require_nodes("curvature field");
    return a_.gauss_curvature * Eigen::RowVectorXd::Ones(nodes_b());
  }
  Eigen::MatrixXd curvature_b() const {
    require_nodes("curvature field");
    return Eigen::VectorXd::Ones(nodes_a()) * b_.gauss_curvature.transpose();
  }

  /// R = 2 (K_a + K_b).
  Eigen::MatrixXd scalar_curvature() const { return 2.0 * (curvature_a() + curvature_b()); }
  /// |Ric|^2 = 2 K_a^2 + 2 K_b^2 (Ricci eigenvalues K_a, K_a, K_b, K_b).
  Eigen::MatrixXd ricci_norm_sq() const {
    return 2.0 * (curvature_a().array().square() + curvature_b().array().square()).matrix();
  }
  /// |W|^2 = (4/3) (K_a + K_b)^2.
  Eigen::MatrixXd weyl_norm_sq() const {
    return (4.0 / 3.0) * (curvature_a() + curvature_b()).array().square().matrix();
  }

  double distance(ProductPoint p, ProductPoint q) const {
    return std::hypot(a_.distance(p.a, q.a), b_.distance(p.b, q.b));
  }
  double distance_lower_bound(ProductPoint p, ProductPoint q) const {
    return std::hypot(a_.distance_lower_bound(p.a, q.a), b_.distance_lower_bound(p.b, q.b));
  }
  double diameter() const { return std::hypot(a_.diameter, b_.diameter); }
  double injectivity_radius() const { return std::min(a_.injectivity_radius, b_.injectivity_radius); }
  int point_count_a() const { return a_.point_count(); }
  int point_count_b() const { return b_.point_count(); }

  /// Node values of sum_m c_m phi_i(x_a) psi_j(x_b).
  Eigen::MatrixXd synthesize(const Eigen::VectorXd& coeffs) const {
    require_nodes("synthesis");
    return a_.eigenfunctions * scatter(coeffs) * b_.eigenfunctions.transpose();
  }

  /// Quadrature projection onto the truncated basis.
  Eigen::VectorXd analyze(const Eigen::MatrixXd& values) const {
    require_nodes("analysis");
    const Eigen::MatrixXd full =
        a_.eigenfunctions.transpose() * a_.weights.asDiagonal() * values * b_.weights.asDiagonal() * b_.eigenfunctions;
    return gather(full);
  }

  /// Coefficient vector laid out as an (eigen A) x (eigen B) matrix.
  Eigen::MatrixXd scatter(const Eigen::VectorXd& coeffs) const {
    if (coeffs.size() != mode_count()) throw ConfigError("coefficient vector does not match the product basis");
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(a_.eigen_count(), b_.eigen_count());
    for (int m = 0; m < mode_count(); ++m) c(modes_[m].i, modes_[m].j) = coeffs[m];
    return c;
  }
  Eigen::VectorXd gather(const Eigen::MatrixXd& full) const {
    Eigen::VectorXd out(mode_count());
    for (int m = 0; m < mode_count(); ++m) out[m] = full(modes_[m].i, modes_[m].j);
    return out;
  }

  /// Values of every basis function at a product node.
  Eigen::VectorXd modes_at(ProductPoint p) const {
    require_nodes("point evaluation");
    Eigen::VectorXd out(mode_count());
    for (int m = 0; m < mode_count(); ++m)
      out[m] = a_.eigenfunctions(p.a, modes_[m].i) * b_.eigenfunctions(p.b, modes_[m].j);
    return out;
  }

  /// Coefficient of the constant function c.
  double constant_coefficient(double c) const { return c * std::sqrt(volume()); }

 private:
  SurfaceFactor a_;
  SurfaceFactor b_;
  double s_max_ = 0.0;
  std::vector<ProductMode> modes_;
  Eigen::MatrixXi mode_index_;
};

using ManifoldPtr = std::shared_ptr<const ProductManifold4D>;

inline ManifoldPtr make_product(SurfaceFactor a, SurfaceFactor b, std::optional<double> s_max = std::nullopt) {
  return std::make_shared<const ProductManifold4D>(std::move(a), std::move(b), s_max);
}

/// Round S^4 of radius 1, represented by its spectrum only.
struct Sphere4Model {
  int lmax = 5;

  static constexpr double scalar_curvature = 12.0;
  static constexpr double ricci_constant = 3.0;  // Ric = 3 g
  static constexpr double q_curvature = 3.0;
  static constexpr int euler_char = 2;

  double volume() const { return 8.0 * std::numbers::pi * std::numbers::pi / 3.0; }
  static double laplace_eigenvalue(int l) { return double(l) * (l + 3); }
  static long multiplicity(int l) { return long(l + 1) * (l + 2) * (2 * l + 3) / 6; }
};

}  // namespace qcurv
