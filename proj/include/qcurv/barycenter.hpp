#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qcurv/errors.hpp"
#include "qcurv/product.hpp"

namespace qcurv {

struct BarycenterAtom {
  double t = 1.0;
  ProductPoint x;
};

/// Formal barycenter sum_i t_i delta_{x_i}, an element of M_k for k >= size().
struct Barycenter {
  std::vector<BarycenterAtom> atoms;

  int size() const { return static_cast<int>(atoms.size()); }

  /// Throws unless t_i in [0,1], sum t_i = 1 and the points exist on M.
  void validate(const ProductManifold4D& m) const {
    if (atoms.empty()) throw ConfigError("barycenter: at least one atom is required");
    double sum = 0.0;
    for (const auto& at : atoms) {
      if (at.t < 0.0 || at.t > 1.0) throw ConfigError("barycenter: weight outside [0, 1]");
      if (at.x.a < 0 || at.x.a >= m.point_count_a() || at.x.b < 0 || at.x.b >= m.point_count_b())
        throw ConfigError("barycenter: point is not a node of the model");
      sum += at.t;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("barycenter: weights sum to " + std::to_string(sum) + ", not 1");
  }
};

/// Smooth non-decreasing cutoff: chi(t) = t on [0, delta], 2 delta beyond 2 delta.
///
/// The join on [delta, 2 delta] is the cubic Hermite segment with end slopes
/// 1 and 0, chi = delta (1 + s + s^2 - s^3), s = (t - delta) / delta.
struct CutoffSpec {
  double delta = 0.1;

  void validate() const {
    if (!(delta > 0.0)) throw ConfigError("cutoff: delta must be positive");
  }

  /// Value and first two derivatives at t >= 0.
  void eval(double t, double& value, double& d1, double& d2) const {
    if (t <= delta) {
      value = t;
      d1 = 1.0;
      d2 = 0.0;
    } else if (t < 2.0 * delta) {
      const double s = (t - delta) / delta;
      value = delta * (1.0 + s + s * s - s * s * s);
      d1 = 1.0 + 2.0 * s - 3.0 * s * s;
      d2 = (2.0 - 6.0 * s) / delta;
    } else {
      value = 2.0 * delta;
      d1 = 0.0;
      d2 = 0.0;
    }
  }
  double operator()(double t) const {
    double v, d1, d2;
    eval(t, v, d1, d2);
    return v;
  }
};

inline double cutoff_chi(const CutoffSpec& spec, double t) {
  if (t < 0.0) throw ConfigError("cutoff: argument must be non-negative");
  return spec(t);
}

/// Analytic description of tau * phi_{lambda, sigma} + shift.
struct BubbleTerm {
  Barycenter sigma;
  double lambda = 1.0;
  CutoffSpec cutoff;
  double scale = 1.0;
  double shift = 0.0;
};

}  // namespace qcurv
