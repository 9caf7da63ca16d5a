#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "qcurv/qcurv.hpp"

namespace qtest {

using namespace qcurv;

inline constexpr double pi = std::numbers::pi;
inline constexpr double pi2 = pi * pi;

inline const ManifoldPtr& s2xs2() {
  static const ManifoldPtr m = make_product(make_sphere_factor(6, 14), make_sphere_factor(6, 14));
  return m;
}
inline const ConformalProblem& s2xs2_problem() {
  static const ConformalProblem p = make_problem(s2xs2());
  return p;
}

inline const ManifoldPtr& t4() {
  static const ManifoldPtr m =
      make_product(make_flat_torus_factor(2 * pi, 2 * pi, 3), make_flat_torus_factor(2 * pi, 2 * pi, 3));
  return m;
}
inline const ConformalProblem& t4_problem() {
  static const ConformalProblem p = make_problem(t4());
  return p;
}

inline SurfaceFactor genus3_factor() {
  return make_synthetic_factor(-1.0, {0, 0.8, 0.8, 0.8, 1.5, 1.5, 2, 2, 2.5, 3}, 8 * pi);
}
inline const ManifoldPtr& genus3_sq() {
  static const ManifoldPtr m = make_product(genus3_factor(), genus3_factor());
  return m;
}
inline const ConformalProblem& genus3_problem() {
  static const ConformalProblem p = make_problem(genus3_sq());
  return p;
}

inline const ManifoldPtr& s2_hyperbolic() {
  static const ManifoldPtr m =
      make_product(make_sphere_factor(4, 10), make_synthetic_factor(-3.0, {0, 2, 2, 2}, 4 * pi / 3));
  return m;
}

inline double delta_default(const ProductManifold4D& m) {
  return 0.2 * std::min(m.factor_a().diameter, m.factor_b().diameter);
}

inline double max_abs(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace qtest
