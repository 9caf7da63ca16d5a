#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "qcurv/barycenter.hpp"
#include "qcurv/errors.hpp"
#include "qcurv/field.hpp"

namespace qcurv {

/// Seeded generator with platform-independent real conversions.
///
/// std::uniform_real_distribution and std::normal_distribution are
/// implementation-defined, so reals are derived from raw mt19937_64 output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [0, n).
  int index(int n) { return static_cast<int>(uniform() * n); }

  /// Standard normal (Box-Muller, both variates used).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Random mean-zero band-limited field with coefficients decaying like 1/(1+s).
///
/// The result is scaled to sup-norm `amplitude` over the nodes (or to
/// coefficient norm `amplitude` on spectral-only models). Modes with
/// s > s_cap are left out.
inline ScalarField random_band_limited(const ManifoldPtr& m, Rng& rng, double amplitude,
                                       double s_cap = INFINITY) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(m->mode_count());
  for (int k = 1; k < m->mode_count(); ++k) {
    const double g = rng.normal();
    if (m->modes()[k].s <= s_cap) c[k] = g / (1.0 + m->modes()[k].s);
  }
  double norm = c.norm();
  if (!m->spectral_only()) norm = m->synthesize(c).cwiseAbs().maxCoeff();
  if (!(norm > 0.0)) throw ConfigError("random field: no modes below the cap");
  return ScalarField::from_coefficients(m, c * (amplitude / norm));
}

/// Random element of M_k with k atoms pairwise at least `separation` apart
/// and Dirichlet(1, ..., 1) weights.
inline Barycenter random_barycenter(const ProductManifold4D& m, Rng& rng, int k, double separation,
                                    int max_tries = 100000) {
  if (k < 1) throw ConfigError("random barycenter: k must be >= 1");
  Barycenter out;
  for (int tries = 0; static_cast<int>(out.atoms.size()) < k; ++tries) {
    if (tries > max_tries) throw ConfigError("random barycenter: cannot place atoms with the requested separation");
    const ProductPoint p{rng.index(m.point_count_a()), rng.index(m.point_count_b())};
    bool ok = true;
    for (const auto& at : out.atoms)
      if (m.distance_lower_bound(at.x, p) < separation) ok = false;
    if (ok) out.atoms.push_back({0.0, p});
  }
  double s = 0.0;
  for (auto& at : out.atoms) {
    double u = 0.0;
    while (u <= 0.0) u = rng.uniform();
    at.t = -std::log(u);
    s += at.t;
  }
  for (auto& at : out.atoms) at.t /= s;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < out.atoms.size(); ++i) acc += out.atoms[i].t;
  out.atoms.back().t = 1.0 - acc;
  return out;
}

}  // namespace qcurv
