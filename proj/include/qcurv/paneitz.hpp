#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "qcurv/errors.hpp"
#include "qcurv/field.hpp"
#include "qcurv/product.hpp"

namespace qcurv {

// Sign convention: alpha, beta, s are eigenvalues of -div grad. The
// quadratic form
//   <P u, v> = int ( Lap u Lap v + (2/3) R <grad u, grad v> - 2 Ric(grad u, grad v) )
// defines P; on S^4 it reproduces l(l+1)(l+2)(l+3).

/// Paneitz eigenvalue of the product mode (alpha, beta) for constant curvatures.
inline double mode_eigenvalue(double alpha, double beta, double kappa_a, double kappa_b) {
  const double s = alpha + beta;
  return s * s + (4.0 / 3.0) * (kappa_a + kappa_b) * s - 2.0 * (kappa_a * alpha + kappa_b * beta);
}

/// Paneitz eigenvalue of degree-l harmonics on the unit S^4.
inline double sphere4_paneitz_eigenvalue(int l) {
  const double s = Sphere4Model::laplace_eigenvalue(l);
  return s * s + (2.0 / 3.0) * Sphere4Model::scalar_curvature * s - 2.0 * Sphere4Model::ricci_constant * s;
}

/// Paneitz operator in the truncated product basis.
class PaneitzOperator {
 public:
  enum class Representation { Diagonal, Dense };

  static PaneitzOperator diagonal(ManifoldPtr m, Eigen::VectorXd mu) {
    if (mu.size() != m->mode_count()) throw ConfigError("Paneitz: diagonal size does not match the basis");
    PaneitzOperator p(std::move(m), Representation::Diagonal);
    p.diag_ = std::move(mu);
    return p;
  }

  static PaneitzOperator dense(ManifoldPtr m, Eigen::MatrixXd a) {
    if (a.rows() != m->mode_count() || a.cols() != m->mode_count())
      throw ConfigError("Paneitz: matrix size does not match the basis");
    PaneitzOperator p(std::move(m), Representation::Dense);
    p.dense_ = std::move(a);
    return p;
  }

  const ManifoldPtr& manifold() const { return m_; }
  Representation representation() const { return rep_; }
  int dimension() const { return m_->mode_count(); }

  Eigen::VectorXd apply(const Eigen::VectorXd& c) const {
    if (c.size() != dimension()) throw ConfigError("Paneitz: coefficient vector does not match the basis");
    if (rep_ == Representation::Diagonal) return diag_.cwiseProduct(c);
    return dense_ * c;
  }

  double form(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const { return u.dot(apply(v)); }

  Eigen::MatrixXd matrix() const {
    if (rep_ == Representation::Diagonal) return diag_.asDiagonal();
    return dense_;
  }

  /// Diagonal restricted to the basis (for preconditioning and dense matrices alike).
  Eigen::VectorXd diagonal_values() const {
    return rep_ == Representation::Diagonal ? diag_ : Eigen::VectorXd(dense_.diagonal());
  }

  double scale() const {
    const double mx = rep_ == Representation::Diagonal ? diag_.cwiseAbs().maxCoeff() : dense_.cwiseAbs().maxCoeff();
    return std::max(mx, 1.0);
  }

 private:
  PaneitzOperator(ManifoldPtr m, Representation rep) : m_(std::move(m)), rep_(rep) {}

  ManifoldPtr m_;
  Representation rep_;
  Eigen::VectorXd diag_;
  Eigen::MatrixXd dense_;
};

enum class PaneitzRoute { Auto, ClosedForm, Quadrature };

/// Closed-form diagonal on constant-curvature products; otherwise the form is
/// assembled by quadrature from factor mass and stiffness matrices weighted
/// by the Gauss curvatures.
inline PaneitzOperator assemble_paneitz(const ManifoldPtr& m, PaneitzRoute route = PaneitzRoute::Auto) {
  if (route == PaneitzRoute::Auto) route = m->constant_curvature() ? PaneitzRoute::ClosedForm : PaneitzRoute::Quadrature;
  const auto& modes = m->modes();
  const int n = m->mode_count();
  if (route == PaneitzRoute::ClosedForm) {
    if (!m->constant_curvature()) throw ConfigError("Paneitz: closed form needs constant-curvature factors");
    Eigen::VectorXd mu(n);
    for (int k = 0; k < n; ++k)
      mu[k] = mode_eigenvalue(modes[k].alpha, modes[k].beta, m->factor_a().kappa, m->factor_b().kappa);
    mu[0] = 0.0;
    return PaneitzOperator::diagonal(m, std::move(mu));
  }
  m->require_nodes("Paneitz assembly by quadrature");
  const SurfaceFactor& fa = m->factor_a();
  const SurfaceFactor& fb = m->factor_b();
  const Eigen::VectorXd ones_a = Eigen::VectorXd::Ones(fa.node_count());
  const Eigen::VectorXd ones_b = Eigen::VectorXd::Ones(fb.node_count());
  const Eigen::MatrixXd ma = fa.weighted_mass(ones_a), mb = fb.weighted_mass(ones_b);
  const Eigen::MatrixXd ga = fa.weighted_stiffness(ones_a), gb = fb.weighted_stiffness(ones_b);
  const Eigen::MatrixXd ma_k = fa.weighted_mass(fa.gauss_curvature), mb_k = fb.weighted_mass(fb.gauss_curvature);
  const Eigen::MatrixXd ga_k = fa.weighted_stiffness(fa.gauss_curvature), gb_k = fb.weighted_stiffness(fb.gauss_curvature);
  Eigen::MatrixXd a(n, n);
  for (int p = 0; p < n; ++p) {
    const auto& u = modes[p];
    for (int q = p; q < n; ++q) {
      const auto& v = modes[q];
      double val = u.s * v.s * ma(u.i, v.i) * mb(u.j, v.j);
      // grad_a terms: ((4/3) K_b - (2/3) K_a) |grad_a|^2
      val += (4.0 / 3.0) * ga(u.i, v.i) * mb_k(u.j, v.j) - (2.0 / 3.0) * ga_k(u.i, v.i) * mb(u.j, v.j);
      // grad_b terms: ((4/3) K_a - (2/3) K_b) |grad_b|^2
      val += (4.0 / 3.0) * ma_k(u.i, v.i) * gb(u.j, v.j) - (2.0 / 3.0) * ma(u.i, v.i) * gb_k(u.j, v.j);
      a(p, q) = val;
      a(q, p) = val;
    }
  }
  return PaneitzOperator::dense(m, std::move(a));
}

/// Q = -(1/12) (Lap R - R^2 + 3 |Ric|^2) with Lap = div grad, at product nodes.
///
/// Spectral-only constant-curvature models return the constant field.
inline ScalarField q_curvature(const ManifoldPtr& m) {
  if (m->spectral_only()) {
    if (!m->constant_curvature()) throw SpectralOnlyError("Q-curvature of a variable-curvature factor");
    const double ka = m->factor_a().kappa, kb = m->factor_b().kappa;
    const double r = 2.0 * (ka + kb), ric = 2.0 * ka * ka + 2.0 * kb * kb;
    return ScalarField::constant(m, -(1.0 / 12.0) * (-r * r + 3.0 * ric));
  }
  const Eigen::MatrixXd r = m->scalar_curvature();
  const Eigen::MatrixXd lap_r = 2.0 * (m->factor_a().curvature_laplacian * Eigen::RowVectorXd::Ones(m->nodes_b()) +
                                       Eigen::VectorXd::Ones(m->nodes_a()) * m->factor_b().curvature_laplacian.transpose());
  const Eigen::MatrixXd q =
      -(1.0 / 12.0) * (lap_r.array() - r.array().square() + 3.0 * m->ricci_norm_sq().array()).matrix();
  if (m->constant_curvature()) {
    // exact constant, no quadrature round-off in the coefficients
    return ScalarField::constant(m, q(0, 0));
  }
  return ScalarField::from_node_values(m, q);
}

inline double q_curvature(const Sphere4Model&) { return Sphere4Model::q_curvature; }

/// k_P = int Q dV (quadrature on full models, closed form otherwise).
inline double total_q(const ScalarField& q) {
  const auto& m = q.manifold();
  if (q.has_node_values()) return m->weights().cwiseProduct(q.node_values()).sum();
  if (q.is_constant()) return q.mean_from_coefficients() * m->volume();
  throw SpectralOnlyError("integral of a non-constant field");
}
inline double total_q(const ManifoldPtr& m) { return total_q(q_curvature(m)); }
inline double total_q(const Sphere4Model& s) { return Sphere4Model::q_curvature * s.volume(); }

inline double paneitz_form(const PaneitzOperator& p, const ScalarField& u, const ScalarField& v) {
  if (u.manifold() != p.manifold() || v.manifold() != p.manifold())
    throw ConfigError("Paneitz form: fields live on a different manifold");
  return p.form(u.coefficients(), v.coefficients());
}

inline ScalarField paneitz_apply(const PaneitzOperator& p, const ScalarField& u) {
  if (u.manifold() != p.manifold()) throw ConfigError("Paneitz apply: field lives on a different manifold");
  return ScalarField::from_coefficients(p.manifold(), p.apply(u.coefficients()));
}

struct SpectrumSummary {
  int negative_count = 0;  // k-bar
  int kernel_dim = 0;
  double tol_zero = 0.0;
  std::vector<double> lowest;
};

inline SpectrumSummary summarize_spectrum(std::vector<double> eigs, int n_low, double tol_rel) {
  std::sort(eigs.begin(), eigs.end());
  SpectrumSummary s;
  double mx = 0.0;
  for (double e : eigs) mx = std::max(mx, std::abs(e));
  s.tol_zero = tol_rel * mx;
  for (double e : eigs) {
    if (e < -s.tol_zero) ++s.negative_count;
    else if (e <= s.tol_zero) ++s.kernel_dim;
  }
  const int k = std::min<int>(n_low, static_cast<int>(eigs.size()));
  s.lowest.assign(eigs.begin(), eigs.begin() + k);
  return s;
}

inline std::vector<double> paneitz_eigenvalues(const PaneitzOperator& p) {
  if (p.representation() == PaneitzOperator::Representation::Diagonal) {
    const Eigen::VectorXd d = p.diagonal_values();
    return {d.data(), d.data() + d.size()};
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("Paneitz spectrum: eigensolver failed");
  return {es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size()};
}

inline SpectrumSummary spectrum(const PaneitzOperator& p, int n_low, double tol_rel = 1e-8) {
  return summarize_spectrum(paneitz_eigenvalues(p), n_low, tol_rel);
}

/// Spectrum of the round S^4 up to degree lmax, eigenvalues repeated by multiplicity.
inline SpectrumSummary spectrum(const Sphere4Model& s4, int n_low, double tol_rel = 1e-8) {
  std::vector<double> eigs;
  for (int l = 0; l <= s4.lmax; ++l)
    for (long k = 0; k < Sphere4Model::multiplicity(l); ++k) eigs.push_back(sphere4_paneitz_eigenvalue(l));
  return summarize_spectrum(std::move(eigs), n_low, tol_rel);
}

/// int (Q + |W|^2 / 8) dV - 4 pi^2 chi.
inline double gauss_bonnet_defect(const ManifoldPtr& m) {
  const double target = 4.0 * std::numbers::pi * std::numbers::pi * m->euler_char();
  const ScalarField q = q_curvature(m);
  if (m->spectral_only()) {
    const double ka = m->factor_a().kappa, kb = m->factor_b().kappa;
    const double weyl = (4.0 / 3.0) * (ka + kb) * (ka + kb);
    return (q.mean_from_coefficients() + weyl / 8.0) * m->volume() - target;
  }
  const Eigen::MatrixXd w = m->weights();
  const Eigen::MatrixXd qv = q.has_node_values() ? q.node_values() : m->synthesize(q.coefficients());
  return w.cwiseProduct(qv + m->weyl_norm_sq() / 8.0).sum() - target;
}

inline double gauss_bonnet_defect(const Sphere4Model& s4) {
  return total_q(s4) - 4.0 * std::numbers::pi * std::numbers::pi * Sphere4Model::euler_char;
}

/// A model bundled with its Paneitz operator and Q-curvature.
struct ConformalProblem {
  ManifoldPtr manifold;
  PaneitzOperator paneitz;
  ScalarField q;
  double k_p = 0.0;
};

inline ConformalProblem make_problem(const ManifoldPtr& m, PaneitzRoute route = PaneitzRoute::Auto) {
  ScalarField q = q_curvature(m);
  const double kp = total_q(q);
  return {m, assemble_paneitz(m, route), std::move(q), kp};
}

/// A conformal metric e^{2w} g described through the base model and w.
struct ConformalData {
  ScalarField w;
  Eigen::MatrixXd q_tilde;         // e^{-4w} (P w / 2 + Q) at nodes
  Eigen::MatrixXd volume_weights;  // e^{4w} dV at nodes
  double total_q = 0.0;            // int Q~ dV~
  double base_total_q = 0.0;
};

/// Transformed Q-curvature from P w + 2 Q = 2 Q~ e^{4w}.
inline ConformalData conformal_q(const ConformalProblem& prob, const ScalarField& w, double sup_bound = 20.0) {
  const auto& m = prob.manifold;
  m->require_nodes("conformal Q-curvature");
  if (!w.band_limited()) throw ConfigError("conformal_q: w must be band-limited");
  const Eigen::MatrixXd& wv = w.node_values();
  const double sup = wv.cwiseAbs().maxCoeff();
  if (sup > sup_bound)
    throw ConfigError("conformal_q: |w|_inf = " + std::to_string(sup) + " exceeds the overflow bound " +
                      std::to_string(sup_bound));
  const Eigen::MatrixXd pw = m->synthesize(prob.paneitz.apply(w.coefficients()));
  const Eigen::MatrixXd qv = prob.q.has_node_values() ? prob.q.node_values() : m->synthesize(prob.q.coefficients());
  ConformalData out{w, {}, {}, 0.0, prob.k_p};
  const Eigen::ArrayXXd e4w = (4.0 * wv.array()).exp();
  out.q_tilde = ((0.5 * pw + qv).array() / e4w).matrix();
  out.volume_weights = (m->weights().array() * e4w).matrix();
  out.total_q = out.q_tilde.cwiseProduct(out.volume_weights).sum();
  return out;
}

}  // namespace qcurv
