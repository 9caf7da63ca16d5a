#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "qcurv/bubbles.hpp"
#include "qcurv/errors.hpp"
#include "qcurv/functional.hpp"
#include "qcurv/paneitz.hpp"

namespace qcurv {

struct InequalitySample {
  double quadratic = 0.0;  // <P u, u>
  double log_term = 0.0;   // log int e^{4(u - mean u)}
  double residual = 0.0;   // log_term - coefficient * quadratic
  bool included = true;    // passed the mass-spreading filter
  std::vector<double> region_fractions;
};

struct InequalityReport {
  std::string family;
  int ell = 0;
  double coefficient = 0.0;  // 1 / (8 (ell + 1) pi^2)
  std::vector<InequalitySample> samples;
  int tail_count = 0;
  double tail_slope = 0.0;      // least squares over the top quartile of included samples
  double tail_ratio_sup = 0.0;  // max log_term / quadratic over the same tail
  double calibrated_c = 0.0;    // max residual over included samples
  double s_max = 0.0;
  int mode_count = 0;
  bool slope_within_coefficient = false;  // tail_slope <= coefficient
};

inline InequalitySample adams_sample(const ConformalProblem& prob, const ScalarField& u) {
  const EnergyParts p = energy_parts(prob, u);
  InequalitySample s;
  s.quadratic = p.quadratic;
  s.log_term = p.log_integral - 4.0 * p.integral / prob.manifold->volume();
  return s;
}

/// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) throw ConfigError("slope fit needs at least two samples");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) throw ConfigError("slope fit: quadratic values do not vary");
  return sxy / sxx;
}

/// Tail statistics restricted to included samples whose quadratic lies in [lo, hi].
inline void fill_tail(InequalityReport& rep, double lo = -INFINITY, double hi = INFINITY) {
  std::vector<const InequalitySample*> inc;
  for (const auto& s : rep.samples)
    if (s.included && s.quadratic >= lo && s.quadratic <= hi) inc.push_back(&s);
  rep.calibrated_c = -INFINITY;
  for (const auto& s : rep.samples)
    if (s.included) rep.calibrated_c = std::max(rep.calibrated_c, s.residual);
  if (inc.size() < 2) {
    rep.tail_count = static_cast<int>(inc.size());
    rep.tail_slope = NAN;
    rep.tail_ratio_sup = NAN;
    rep.slope_within_coefficient = false;
    return;
  }
  std::stable_sort(inc.begin(), inc.end(),
                   [](const InequalitySample* a, const InequalitySample* b) { return a->quadratic > b->quadratic; });
  const std::size_t k = std::max<std::size_t>(2, (inc.size() + 3) / 4);
  std::vector<double> x, y;
  rep.tail_ratio_sup = -INFINITY;
  for (std::size_t i = 0; i < k; ++i) {
    x.push_back(inc[i]->quadratic);
    y.push_back(inc[i]->log_term);
    if (inc[i]->quadratic > 0.0) rep.tail_ratio_sup = std::max(rep.tail_ratio_sup, inc[i]->log_term / inc[i]->quadratic);
  }
  rep.tail_count = static_cast<int>(k);
  rep.tail_slope = ls_slope(x, y);
  rep.slope_within_coefficient = rep.tail_slope <= rep.coefficient;
}

inline void require_nonnegative_paneitz(const ConformalProblem& prob) {
  const SpectrumSummary s = spectrum(prob.paneitz, 1);
  if (s.negative_count > 0)
    throw PreconditionError("the Adams inequality needs P >= 0, but P has " + std::to_string(s.negative_count) +
                            " negative eigenvalue(s)");
}

/// Both sides of log int e^{4(u - mean u)} <= <P u, u> / (8 pi^2) + C for each member.
inline InequalityReport adams_report(const ConformalProblem& prob, const std::vector<ScalarField>& family,
                                     const std::string& label = "family") {
  require_nonnegative_paneitz(prob);
  InequalityReport rep;
  rep.family = label;
  rep.ell = 0;
  rep.coefficient = 1.0 / (8.0 * std::numbers::pi * std::numbers::pi);
  rep.s_max = prob.manifold->s_max();
  rep.mode_count = prob.manifold->mode_count();
  for (const auto& u : family) {
    InequalitySample s = adams_sample(prob, u);
    s.residual = s.log_term - rep.coefficient * s.quadratic;
    rep.samples.push_back(s);
  }
  fill_tail(rep);
  return rep;
}

/// Whether the sample satisfies the inequality with the report's calibrated constant.
inline bool adams_bound_holds(const InequalityReport& rep, const InequalitySample& s, double slack = 1e-12) {
  return s.log_term <= rep.coefficient * s.quadratic + rep.calibrated_c + slack;
}

struct SpreadRegions {
  std::vector<ProductPoint> centers;
  double radius = 0.0;
  double gamma0 = 0.0;
  double delta0 = 0.0;
};

/// Mass fractions of the normalized conformal volume in each region.
inline std::vector<double> region_fractions(const ScalarField& u, const SpreadRegions& reg) {
  const auto& m = *u.manifold();
  const ConformalMeasure cm = conformal_measure(u);
  std::vector<double> out(reg.centers.size(), 0.0);
  for (int p = 0; p < cm.measure.size(); ++p)
    for (std::size_t i = 0; i < reg.centers.size(); ++i)
      if (m.distance(cm.measure.points[p], reg.centers[i]) < reg.radius) out[i] += cm.measure.masses[p];
  return out;
}

/// Adams report restricted to members that spread at least gamma0 of their
/// conformal volume into each of ell + 1 separated regions.
inline InequalityReport improved_adams_report(const ConformalProblem& prob, int ell, const SpreadRegions& reg,
                                              const std::vector<ScalarField>& family,
                                              const std::string& label = "family") {
  if (ell < 0) throw ConfigError("improved Adams: ell must be >= 0");
  InequalityReport rep = adams_report(prob, family, label);
  rep.ell = ell;
  rep.coefficient = 1.0 / (8.0 * (ell + 1) * std::numbers::pi * std::numbers::pi);
  if (ell >= 1) {
    if (static_cast<int>(reg.centers.size()) != ell + 1)
      throw ConfigError("improved Adams: expected " + std::to_string(ell + 1) + " region centers");
    if (!(reg.radius > 0.0)) throw ConfigError("improved Adams: region radius must be positive");
    if (!(reg.gamma0 > 0.0 && reg.gamma0 <= 1.0)) throw ConfigError("improved Adams: gamma0 must lie in (0, 1]");
    for (std::size_t i = 0; i < reg.centers.size(); ++i)
      for (std::size_t j = i + 1; j < reg.centers.size(); ++j) {
        const double d = prob.manifold->distance(reg.centers[i], reg.centers[j]);
        if (d < reg.delta0)
          throw ConfigError("improved Adams: region centers " + std::to_string(i) + " and " + std::to_string(j) +
                            " are " + std::to_string(d) + " apart, below delta0 = " + std::to_string(reg.delta0));
      }
    for (std::size_t k = 0; k < family.size(); ++k) {
      auto& s = rep.samples[k];
      s.region_fractions = region_fractions(family[k], reg);
      s.included = std::all_of(s.region_fractions.begin(), s.region_fractions.end(),
                               [&](double f) { return f >= reg.gamma0; });
    }
  }
  for (auto& s : rep.samples) s.residual = s.log_term - rep.coefficient * s.quadratic;
  fill_tail(rep);
  return rep;
}

}  // namespace qcurv
