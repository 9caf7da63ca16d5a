#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "qcurv/bubbles.hpp"
#include "qcurv/errors.hpp"
#include "qcurv/functional.hpp"
#include "qcurv/paneitz.hpp"
#include "qcurv/random.hpp"

namespace qcurv {

enum class InitKind { Zero, Random, Bubble, Supplied };

struct SolveOptions {
  int max_iters = 500;
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 60;
  double grad_tol = 1e-9;
  double residual_tol = 1e-8;
  double rho = 1.0;
  std::vector<double> rho_schedule{0.9, 0.925, 0.95, 0.975, 1.0};
  InitKind init = InitKind::Zero;
  double init_amplitude = 0.5;
  std::optional<BubbleTerm> init_bubble;
  std::optional<Eigen::VectorXd> init_coefficients;
  std::uint64_t seed = 0;
  double basin_factor = 1e-2;
  double rho_floor = 1e-3;
  int newton_max_iters = 30;

  void validate() const {
    if (max_iters < 1 || newton_max_iters < 1) throw ConfigError("solver: iteration limits must be positive");
    if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("solver: armijo parameter must lie in (0, 1)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("solver: shrink factor must lie in (0, 1)");
    if (!(grad_tol > 0.0) || !(residual_tol > 0.0)) throw ConfigError("solver: tolerances must be positive");
    if (!(basin_factor > 0.0) || !(rho_floor > 0.0)) throw ConfigError("solver: basin factor and rho floor must be positive");
    if (!(rho >= 0.5 && rho <= 1.5)) throw ConfigError("solver: rho must lie in [0.5, 1.5]");
    for (double r : rho_schedule)
      if (!(r >= 0.5 && r <= 1.5)) throw ConfigError("solver: rho schedule must lie in [0.5, 1.5]");
    if (init == InitKind::Bubble && !init_bubble) throw ConfigError("solver: bubble initializer without bubble data");
    if (init == InitKind::Supplied && !init_coefficients)
      throw ConfigError("solver: supplied initializer without coefficients");
  }
};

struct IterateRecord {
  std::string phase;  // "gradient" or "newton"
  double energy = 0.0;
  double grad_norm = 0.0;
  double residual_norm = 0.0;
  double sup_norm = 0.0;
  double step = 0.0;
};

struct Regime {
  std::string tag;  // "subcritical", "supercritical", "negative-eigenvalue"
  int k = 0;        // k_P in (8 k pi^2, 8 (k+1) pi^2)
  int negative_count = 0;
};

/// Throws for k_P = 8 k pi^2 (k >= 1), where compactness of solutions fails.
inline void require_nondegenerate_kp(double k_p) {
  const double unit = 8.0 * std::numbers::pi * std::numbers::pi;
  const double k = std::round(k_p / unit);
  if (k >= 1.0 && std::abs(k_p - k * unit) <= 1e-9 * unit)
    throw PreconditionError("k_P = " + std::to_string(k_p) + " equals 8 k pi^2 with k = " + std::to_string(int(k)) +
                            "; the existence theory needs k_P != 8 k pi^2 (blow-up cannot be excluded)");
}

inline Regime classify_regime(double k_p, int negative_count) {
  require_nondegenerate_kp(k_p);
  Regime r;
  r.negative_count = negative_count;
  r.k = k_p > 0.0 ? static_cast<int>(std::floor(k_p / (8.0 * std::numbers::pi * std::numbers::pi))) : 0;
  if (negative_count > 0) r.tag = "negative-eigenvalue";
  else if (r.k == 0) r.tag = "subcritical";
  else r.tag = "supercritical";
  return r;
}

struct SolveReport {
  std::string status;  // "converged", "max-iters", "stalled"
  Regime regime;
  double rho = 1.0;
  std::vector<IterateRecord> history;
  Eigen::VectorXd coefficients;             // mean-zero gauge
  Eigen::VectorXd normalized_coefficients;  // shifted so that int e^{4u} = 1
  double normalized_log_integral = 0.0;
  double q_bar = 0.0;  // rho k_P / int e^{4u}, mean-zero gauge
  double residual = 0.0;
  double grad_norm = 0.0;
  double sup_norm = 0.0;
  double q_tilde_mean = 0.0;
  double q_tilde_deviation = 0.0;  // max |Q~ - mean| / max(|mean|, 1e-300), absolute when mean = 0
  double solved_k_p = 0.0;
  double k_p_drift = 0.0;
};

namespace detail {

struct Evaluation {
  Eigen::MatrixXd values;
  double energy = 0.0;
  Eigen::VectorXd grad;
};

inline Evaluation evaluate(const ConformalProblem& prob, const Eigen::VectorXd& c, double rho,
                           const Eigen::MatrixXd& w) {
  Evaluation ev;
  ev.values = prob.manifold->synthesize(c);
  const double quad = prob.paneitz.form(c, c);
  const double lin = 4.0 * rho * w.cwiseProduct(prob.q.node_values()).cwiseProduct(ev.values).sum();
  ev.energy = quad + lin - rho * prob.k_p * log_exp_integral(w, ev.values);
  ev.grad = ii_gradient_coefficients(prob, c, ev.values, rho);
  ev.grad[0] = 0.0;
  return ev;
}

/// Jacobian of F(u) = P u + 2 rho Q - 2 rho k_P e^{4u} / int e^{4u} in the basis.
inline Eigen::MatrixXd residual_jacobian(const ConformalProblem& prob, const Eigen::MatrixXd& values, double rho) {
  const auto& m = *prob.manifold;
  const Eigen::MatrixXd& pa = m.factor_a().eigenfunctions;
  const Eigen::MatrixXd& pb = m.factor_b().eigenfunctions;
  const int na = m.nodes_a(), nb = m.nodes_b();
  int ea = 0, eb = 0;
  for (const auto& md : m.modes()) {
    ea = std::max(ea, md.i + 1);
    eb = std::max(eb, md.j + 1);
  }
  const double top = values.maxCoeff();
  const Eigen::MatrixXd d = (m.weights().array() * (4.0 * (values.array() - top)).exp()).matrix();
  const double z = d.sum();
  // sum over nodes of phi_i phi_k psi_j psi_l D through the tensor structure
  Eigen::MatrixXd x(na, ea * ea), y(na, eb * eb);
  for (int a = 0; a < na; ++a)
    for (int i = 0; i < ea; ++i)
      for (int k = 0; k < ea; ++k) x(a, i * ea + k) = pa(a, i) * pa(a, k);
  const Eigen::MatrixXd pbl = pb.leftCols(eb);
  for (int a = 0; a < na; ++a) {
    const Eigen::MatrixXd t = pbl.transpose() * d.row(a).transpose().asDiagonal() * pbl;
    y.row(a) = Eigen::Map<const Eigen::RowVectorXd>(t.data(), eb * eb);
  }
  const Eigen::MatrixXd kk = x.transpose() * y;
  const int n = m.mode_count();
  const auto& modes = m.modes();
  const Eigen::VectorXd g = m.analyze(d.cwiseQuotient(m.weights()));
  Eigen::MatrixXd j = prob.paneitz.matrix();
  const double c = 8.0 * rho * prob.k_p;
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) {
      const double h = kk(modes[p].i * ea + modes[q].i, modes[p].j + modes[q].j * eb);
      j(p, q) -= c * (h / z - g[p] * g[q] / (z * z));
    }
  return 0.5 * (j + j.transpose());
}

inline double sup_norm(const Eigen::MatrixXd& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace detail

/// Newton refinement: linear solves with the Jacobian restricted to the non-constant modes.
///
/// Appends to `history`; returns the final coefficient vector (mean-zero).
inline Eigen::VectorXd newton_iterations(const ConformalProblem& prob, Eigen::VectorXd c, double rho,
                                         const SolveOptions& opts, std::vector<IterateRecord>& history,
                                         bool& converged) {
  const auto& m = *prob.manifold;
  const Eigen::MatrixXd w = m.weights();
  const int n = m.mode_count();
  converged = false;
  double prev = INFINITY;
  for (int it = 0; it <= opts.newton_max_iters; ++it) {
    detail::Evaluation ev = detail::evaluate(prob, c, rho, w);
    const double res = 0.5 * ev.grad.norm();
    history.push_back({"newton", ev.energy, ev.grad.norm(), res, detail::sup_norm(ev.values), 0.0});
    if (res <= opts.residual_tol) {
      converged = true;
      break;
    }
    if (it == opts.newton_max_iters || !(res < prev)) break;
    prev = res;
    const Eigen::MatrixXd jac = detail::residual_jacobian(prob, ev.values, rho).bottomRightCorner(n - 1, n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    if (es.info() != Eigen::Success) throw NumericError("Newton: eigensolver failed on the linearization");
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double smallest = lam.cwiseAbs().minCoeff();
    if (smallest <= 1e-12 * std::max(lam.cwiseAbs().maxCoeff(), 1.0))
      throw NumericError("Newton: singular linearization, smallest singular value " + std::to_string(smallest));
    const Eigen::VectorXd rhs = -0.5 * ev.grad.tail(n - 1);
    const Eigen::VectorXd step = es.eigenvectors() * ((es.eigenvectors().transpose() * rhs).cwiseQuotient(lam));
    c.tail(n - 1) += step;
    history.back().step = step.norm();
  }
  c[0] = 0.0;
  return c;
}

namespace detail {

inline void finish_report(const ConformalProblem& prob, SolveReport& rep, double rho) {
  const auto& m = *prob.manifold;
  const Eigen::MatrixXd w = m.weights();
  const Eigen::MatrixXd values = m.synthesize(rep.coefficients);
  const double log_z = log_exp_integral(w, values);
  rep.rho = rho;
  rep.q_bar = rho * prob.k_p * std::exp(-log_z);
  rep.sup_norm = sup_norm(values);
  rep.normalized_coefficients = rep.coefficients;
  rep.normalized_coefficients[0] = m.constant_coefficient(-0.25 * log_z);
  rep.normalized_log_integral = log_exp_integral(w, m.synthesize(rep.normalized_coefficients));
  if (!rep.history.empty()) {
    rep.residual = rep.history.back().residual_norm;
    rep.grad_norm = rep.history.back().grad_norm;
  }
  const ConformalData cd = conformal_q(prob, ScalarField::from_coefficients(prob.manifold, rep.coefficients), 50.0);
  const double vol = cd.volume_weights.sum();
  rep.q_tilde_mean = cd.q_tilde.cwiseProduct(cd.volume_weights).sum() / vol;
  const double dev = (cd.q_tilde.array() - rep.q_tilde_mean).abs().maxCoeff();
  rep.q_tilde_deviation = std::abs(rep.q_tilde_mean) > 1e-12 ? dev / std::abs(rep.q_tilde_mean) : dev;
  rep.solved_k_p = cd.total_q;
  rep.k_p_drift = std::abs(cd.total_q - prob.k_p);
}

inline Eigen::VectorXd initial_coefficients(const ConformalProblem& prob, const SolveOptions& opts) {
  const auto& m = prob.manifold;
  switch (opts.init) {
    case InitKind::Zero: return Eigen::VectorXd::Zero(m->mode_count());
    case InitKind::Random: {
      Rng rng(opts.seed);
      return random_band_limited(m, rng, opts.init_amplitude).coefficients();
    }
    case InitKind::Bubble: {
      const auto& b = *opts.init_bubble;
      return bubble_field(m, b.sigma, b.lambda, b.cutoff).coefficients();
    }
    case InitKind::Supplied:
      if (opts.init_coefficients->size() != m->mode_count())
        throw ConfigError("solver: supplied coefficients do not match the basis");
      return *opts.init_coefficients;
  }
  return Eigen::VectorXd::Zero(m->mode_count());
}

}  // namespace detail

/// Preconditioned backtracking gradient descent on II_rho in mean-zero coefficients.
///
/// The preconditioner is 2 |diag P| + 16 rho |k_P| / V. When the energy
/// decrease drops below round-off the run switches to Newton refinement,
/// whose records are tagged "newton".
inline SolveReport minimize_ii(const ConformalProblem& prob, const SolveOptions& opts) {
  opts.validate();
  const auto& m = *prob.manifold;
  m.require_nodes("minimization of II");
  SolveReport rep;
  rep.regime = classify_regime(prob.k_p, spectrum(prob.paneitz, 1).negative_count);
  const double rho = opts.rho;
  const Eigen::MatrixXd w = m.weights();
  Eigen::VectorXd c = detail::initial_coefficients(prob, opts);
  c[0] = 0.0;
  const Eigen::VectorXd precond =
      (2.0 * prob.paneitz.diagonal_values().cwiseAbs()).array() + 16.0 * rho * std::abs(prob.k_p) / m.volume() + 1e-12;

  detail::Evaluation ev = detail::evaluate(prob, c, rho, w);
  rep.status = "max-iters";
  const double basin = opts.basin_factor * std::max(std::abs(prob.k_p) / m.volume(), 1.0);
  for (int it = 0; it < opts.max_iters; ++it) {
    const double gn = ev.grad.norm();
    rep.history.push_back({"gradient", ev.energy, gn, 0.5 * gn, detail::sup_norm(ev.values), 0.0});
    if (0.5 * gn <= opts.residual_tol || gn <= opts.grad_tol) {
      rep.status = "converged";
      break;
    }
    const Eigen::VectorXd dir = -ev.grad.cwiseQuotient(precond);
    const double slope = ev.grad.dot(dir);
    // predicted decrease below energy round-off: the line search cannot resolve it
    if (-slope < 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(ev.energy), 1.0)) {
      rep.status = "roundoff-limited";
      break;
    }
    double step = 1.0;
    bool accepted = false;
    for (int b = 0; b < opts.max_backtracks; ++b, step *= opts.shrink) {
      const Eigen::VectorXd trial = c + step * dir;
      const Eigen::MatrixXd tv = m.synthesize(trial);
      const double e = prob.paneitz.form(trial, trial) +
                       4.0 * rho * w.cwiseProduct(prob.q.node_values()).cwiseProduct(tv).sum() -
                       rho * prob.k_p * detail::log_exp_integral(w, tv);
      if (e <= ev.energy + opts.armijo * step * slope) {
        c = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rep.status = "stalled";
      break;
    }
    rep.history.back().step = step;
    ev = detail::evaluate(prob, c, rho, w);
  }
  if (rep.status != "converged" && 0.5 * ev.grad.norm() <= basin) {
    bool ok = false;
    c = newton_iterations(prob, c, rho, opts, rep.history, ok);
    if (ok) rep.status = "converged";
  }
  rep.coefficients = c;
  rep.coefficients[0] = 0.0;
  detail::finish_report(prob, rep, rho);
  return rep;
}

/// Newton's method on P u + 2 rho Q = 2 rho k_P e^{4u} / int e^{4u} from a nearby u0.
inline SolveReport newton_refine(const ConformalProblem& prob, const ScalarField& u0, double rho,
                                 const SolveOptions& opts) {
  opts.validate();
  const auto& m = *prob.manifold;
  m.require_nodes("Newton refinement");
  if (u0.manifold() != prob.manifold) throw ConfigError("Newton: field lives on a different manifold");
  SolveReport rep;
  rep.regime = classify_regime(prob.k_p, spectrum(prob.paneitz, 1).negative_count);
  Eigen::VectorXd c = u0.coefficients();
  c[0] = 0.0;
  const Eigen::MatrixXd w = m.weights();
  const double res0 = 0.5 * detail::evaluate(prob, c, rho, w).grad.norm();
  const double basin = opts.basin_factor * std::max(std::abs(prob.k_p) / m.volume(), 1.0);
  if (res0 > basin)
    throw PreconditionError("Newton: initial residual " + std::to_string(res0) + " is outside the basin threshold " +
                            std::to_string(basin));
  bool ok = false;
  rep.coefficients = newton_iterations(prob, c, rho, opts, rep.history, ok);
  rep.status = ok ? "converged" : "stalled";
  detail::finish_report(prob, rep, rho);
  return rep;
}

struct ContinuationReport {
  std::vector<SolveReport> steps;
  std::vector<double> rhos;
  std::vector<double> sup_norms;
  bool completed = false;
  std::string message;
};

/// Tracks solutions of the rho-equation along the schedule, each Newton solve
/// seeded by the previous one; failed steps are bisected down to the floor.
inline ContinuationReport continuation_rho(const ConformalProblem& prob, const SolveOptions& opts) {
  opts.validate();
  if (opts.rho_schedule.empty()) throw ConfigError("continuation: empty rho schedule");
  for (std::size_t i = 1; i < opts.rho_schedule.size(); ++i)
    if (!(opts.rho_schedule[i] > opts.rho_schedule[i - 1]))
      throw ConfigError("continuation: rho schedule must be increasing");
  const int kbar = spectrum(prob.paneitz, 1).negative_count;
  if (kbar > 0) throw PreconditionError("continuation needs P >= 0 (found negative eigenvalues)");
  ContinuationReport out;
  SolveOptions first = opts;
  first.rho = opts.rho_schedule.front();
  SolveReport start = minimize_ii(prob, first);
  if (start.status != "converged") {
    out.message = "initial solve at rho = " + std::to_string(first.rho) + " did not converge";
    out.steps.push_back(std::move(start));
    return out;
  }
  out.rhos.push_back(first.rho);
  out.sup_norms.push_back(start.sup_norm);
  out.steps.push_back(std::move(start));
  double current = opts.rho_schedule.front();
  for (std::size_t i = 1; i < opts.rho_schedule.size(); ++i) {
    const double target = opts.rho_schedule[i];
    while (current < target) {
      double step = target - current;
      bool done = false;
      while (!done) {
        const double r = current + step;
        try {
          SolveReport s = newton_refine(
              prob, ScalarField::from_coefficients(prob.manifold, out.steps.back().coefficients), r, opts);
          if (s.status == "converged") {
            current = r;
            if (std::abs(current - target) < 1e-15) current = target;
            out.rhos.push_back(current);
            out.sup_norms.push_back(s.sup_norm);
            out.steps.push_back(std::move(s));
            done = true;
            continue;
          }
        } catch (const Error&) {
        }
        step *= 0.5;
        if (step < opts.rho_floor) {
          out.message = "step from rho = " + std::to_string(current) + " failed above the bisection floor";
          return out;
        }
      }
    }
  }
  out.completed = true;
  return out;
}

struct WitnessSample {
  Barycenter sigma;
  std::vector<double> t_values;
  std::vector<EnergyParts> parts;
  std::vector<double> profile;  // II(t phi) at rho = 1
};

struct WitnessReport {
  int k = 0;
  double lambda_bar = 0.0;
  std::vector<double> rhos;
  std::vector<double> witness;           // sup II_rho over the samples
  std::vector<double> witness_over_rho;  // sup II_rho / rho
  bool monotone = false;                 // witness_over_rho non-increasing
  std::vector<WitnessSample> samples;
  Regime regime;
};

/// Atoms spread greedily: each next point maximizes its distance to those chosen.
inline Barycenter spread_barycenter(const ProductManifold4D& m, int k) {
  Barycenter s;
  s.atoms.push_back({1.0 / k, {0, 0}});
  while (static_cast<int>(s.atoms.size()) < k) {
    ProductPoint best{0, 0};
    double best_d = -1.0;
    for (int a = 0; a < m.point_count_a(); ++a)
      for (int b = 0; b < m.point_count_b(); ++b) {
        double d = INFINITY;
        for (const auto& at : s.atoms) d = std::min(d, m.distance_lower_bound(at.x, {a, b}));
        if (d > best_d) {
          best_d = d;
          best = {a, b};
        }
      }
    s.atoms.push_back({1.0 / k, best});
  }
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < s.atoms.size(); ++i) acc += s.atoms[i].t;
  s.atoms.back().t = 1.0 - acc;
  return s;
}

/// Upper estimate of the min-max level from the cone map pi(t, sigma) = t phi_{lambda_bar, sigma}.
inline WitnessReport minmax_witness(const ConformalProblem& prob, int k, double lambda_bar, int n_sigma, int n_t,
                                    const std::vector<double>& rhos, const CutoffSpec& cutoff, std::uint64_t seed,
                                    const std::vector<Barycenter>& extra = {}) {
  if (k < 1) throw ConfigError("witness: k must be >= 1");
  if (n_sigma < 1 || n_t < 2) throw ConfigError("witness: need at least one sigma and two t values");
  if (rhos.empty()) throw ConfigError("witness: empty rho list");
  const auto& m = *prob.manifold;
  WitnessReport rep;
  rep.k = k;
  rep.lambda_bar = lambda_bar;
  rep.rhos = rhos;
  rep.regime = classify_regime(prob.k_p, spectrum(prob.paneitz, 1).negative_count);
  std::vector<Barycenter> sigmas = extra;
  sigmas.push_back(spread_barycenter(m, k));
  Rng rng(seed);
  while (static_cast<int>(sigmas.size()) < n_sigma + static_cast<int>(extra.size()))
    sigmas.push_back(random_barycenter(m, rng, k, 4.0 * cutoff.delta));
  for (const auto& sigma : sigmas) {
    WitnessSample ws;
    ws.sigma = sigma;
    const ScalarField phi = bubble_field(prob.manifold, sigma, lambda_bar, cutoff);
    for (int i = 0; i < n_t; ++i) {
      const double t = double(i) / (n_t - 1);
      const EnergyParts p = energy_parts(prob, phi.scaled(t));
      ws.t_values.push_back(t);
      ws.parts.push_back(p);
      ws.profile.push_back(assemble_energy(p, prob.k_p, 1.0).total);
    }
    rep.samples.push_back(std::move(ws));
  }
  for (double rho : rhos) {
    double sup = -INFINITY, sup_over = -INFINITY;
    for (const auto& ws : rep.samples)
      for (const auto& p : ws.parts) {
        sup = std::max(sup, assemble_energy(p, prob.k_p, rho).total);
        // II_rho / rho = <Pu,u> / rho + 4 int Q u - k_P log int e^{4u}
        sup_over = std::max(sup_over, p.quadratic / rho + (4.0 * p.q_integral - prob.k_p * p.log_integral));
      }
    rep.witness.push_back(sup);
    rep.witness_over_rho.push_back(sup_over);
  }
  rep.monotone = true;
  for (std::size_t i = 1; i < rhos.size(); ++i)
    if (rhos[i] > rhos[i - 1] && rep.witness_over_rho[i] > rep.witness_over_rho[i - 1]) rep.monotone = false;
  return rep;
}

}  // namespace qcurv
