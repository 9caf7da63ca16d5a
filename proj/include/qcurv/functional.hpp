#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qcurv/bubbles.hpp"
#include "qcurv/errors.hpp"
#include "qcurv/field.hpp"
#include "qcurv/paneitz.hpp"

namespace qcurv {

/// II_rho(u) = <P u, u> + 4 rho int Q u - rho k_P log int e^{4u}.
struct EnergyBreakdown {
  double quadratic = 0.0;
  double linear = 0.0;
  double log_term = 0.0;
  double total = 0.0;
  double rho = 1.0;
  double log_integral = 0.0;  // log int e^{4u}
  double integral = 0.0;      // int u
  std::string route;          // "radial", "quadrature"
};

namespace detail {

inline const Eigen::MatrixXd& q_nodes(const ConformalProblem& prob) { return prob.q.node_values(); }

/// log sum_n w_n e^{4 v_n}, max-shifted.
inline double log_exp_integral(const Eigen::MatrixXd& w, const Eigen::MatrixXd& v) {
  const double top = v.maxCoeff();
  return 4.0 * top + std::log((w.array() * (4.0 * (v.array() - top)).exp()).sum());
}

}  // namespace detail

/// Pieces of II shared by every rho: <Pu,u>, int u, int Q u, log int e^{4u}.
struct EnergyParts {
  double quadratic = 0.0;
  double integral = 0.0;
  double q_integral = 0.0;
  double log_integral = 0.0;
  std::string route;
};

inline EnergyParts energy_parts(const ConformalProblem& prob, const ScalarField& u) {
  const auto& m = prob.manifold;
  if (u.manifold() != m) throw ConfigError("energy: field lives on a different manifold");
  EnergyParts p;
  const auto& bub = u.bubble();
  if (bub && !radial_route_obstruction(*m, *bub)) {
    const BubbleIntegrals bi = bubble_integrals(*m, *bub);
    p.quadratic = bi.quadratic;
    p.integral = bi.integral;
    p.q_integral = prob.k_p / m->volume() * bi.integral;  // Q is constant here
    p.log_integral = bi.log_exp_integral;
    p.route = "radial";
    return p;
  }
  m->require_nodes("energy of a field without a radial description");
  if (bub) require_resolved_bubble(*m, *bub, *radial_route_obstruction(*m, *bub));
  const Eigen::MatrixXd w = m->weights();
  const Eigen::MatrixXd& v = u.node_values();
  p.quadratic = prob.paneitz.form(u.coefficients(), u.coefficients());
  p.integral = w.cwiseProduct(v).sum();
  p.q_integral = w.cwiseProduct(detail::q_nodes(prob)).cwiseProduct(v).sum();
  p.log_integral = detail::log_exp_integral(w, v);
  p.route = "quadrature";
  return p;
}

inline EnergyBreakdown assemble_energy(const EnergyParts& p, double k_p, double rho) {
  EnergyBreakdown e;
  e.quadratic = p.quadratic;
  e.linear = 4.0 * rho * p.q_integral;
  e.log_term = rho * k_p * p.log_integral;
  e.total = e.quadratic + e.linear - e.log_term;
  e.rho = rho;
  e.log_integral = p.log_integral;
  e.integral = p.integral;
  e.route = p.route;
  return e;
}

inline EnergyBreakdown ii_value(const ConformalProblem& prob, const ScalarField& u, double rho = 1.0) {
  return assemble_energy(energy_parts(prob, u), prob.k_p, rho);
}

/// Coefficients of 2 P u + 4 rho Q - 4 rho k_P e^{4u} / int e^{4u}, projected on the basis.
inline Eigen::VectorXd ii_gradient_coefficients(const ConformalProblem& prob, const Eigen::VectorXd& c,
                                                const Eigen::MatrixXd& values, double rho) {
  const auto& m = prob.manifold;
  const Eigen::MatrixXd w = m->weights();
  const double top = values.maxCoeff();
  const Eigen::MatrixXd e = (4.0 * (values.array() - top)).exp().matrix();
  const double z = w.cwiseProduct(e).sum();
  return 2.0 * prob.paneitz.apply(c) + 4.0 * rho * m->analyze(detail::q_nodes(prob)) -
         (4.0 * rho * prob.k_p / z) * m->analyze(e);
}

inline ScalarField ii_gradient(const ConformalProblem& prob, const ScalarField& u, double rho = 1.0) {
  const auto& m = prob.manifold;
  if (u.manifold() != m) throw ConfigError("gradient: field lives on a different manifold");
  m->require_nodes("gradient of II");
  return ScalarField::from_coefficients(m, ii_gradient_coefficients(prob, u.coefficients(), u.node_values(), rho));
}

struct KernelRaySlope {
  double formula = 0.0;    // 4 (int Q v - k_P max v)
  double empirical = 0.0;  // least-squares slope of t -> II(t v)
  double form_value = 0.0;  // <P v, v>
  std::vector<double> t_values;
  std::vector<double> energies;
};

/// Slope of II along the ray t v for v in the kernel of P.
inline KernelRaySlope kernel_ray_slope(const ConformalProblem& prob, const ScalarField& v, double t_min = 20.0,
                                       double t_max = 40.0, int n_t = 11, double tol = 1e-10) {
  const auto& m = prob.manifold;
  m->require_nodes("kernel ray slope");
  if (!v.band_limited()) throw ConfigError("kernel ray: v must be band-limited");
  KernelRaySlope out;
  const Eigen::VectorXd& c = v.coefficients();
  out.form_value = prob.paneitz.form(c, c);
  if (std::abs(out.form_value) > tol * prob.paneitz.scale() * std::max(c.squaredNorm(), 1.0))
    throw ConfigError("kernel ray: v is not in the kernel of P (<Pv,v> = " + std::to_string(out.form_value) + ")");
  const Eigen::MatrixXd w = m->weights();
  const Eigen::MatrixXd& vals = v.node_values();
  out.formula = 4.0 * (w.cwiseProduct(detail::q_nodes(prob)).cwiseProduct(vals).sum() - prob.k_p * vals.maxCoeff());
  double st = 0, se = 0, stt = 0, ste = 0;
  for (int k = 0; k < n_t; ++k) {
    const double t = t_min + (t_max - t_min) * k / (n_t - 1);
    const double e = ii_value(prob, v.scaled(t)).total;
    out.t_values.push_back(t);
    out.energies.push_back(e);
    st += t;
    se += e;
    stt += t * t;
    ste += t * e;
  }
  out.empirical = (n_t * ste - st * se) / (n_t * stt - st * st);
  return out;
}

}  // namespace qcurv
