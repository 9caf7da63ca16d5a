#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "qcurv/barycenter.hpp"
#include "qcurv/errors.hpp"
#include "qcurv/field.hpp"
#include "qcurv/product.hpp"
#include "qcurv/quadrature.hpp"
#include "qcurv/transport.hpp"

namespace qcurv {

namespace detail {

/// Polar Jacobian factor J(x) of a surface of curvature kappa and J'(x)/J(x).
inline void polar_jacobian(double kappa, double x, double& j, double& ratio) {
  if (kappa > 0.0) {
    const double s = std::sqrt(kappa);
    j = std::sin(s * x) / s;
    ratio = s / std::tan(s * x);
  } else if (kappa < 0.0) {
    const double s = std::sqrt(-kappa);
    j = std::sinh(s * x) / s;
    ratio = s / std::tanh(s * x);
  } else {
    j = x;
    ratio = 1.0 / x;
  }
}

}  // namespace detail

/// Integrals over one ball B_{2 delta}(x_i) of a single bubble atom, relative
/// to the constant value log c the field takes outside all balls.
struct BallIntegrals {
  double quadratic = 0.0;    // <P phi, phi> restricted to the ball
  double mean_excess = 0.0;  // int (phi - log c)
  double exp_excess = 0.0;   // int (e^{4 tau phi} - e^{4 tau log c})
  double exp_moment = 0.0;   // int (e^{4 tau phi} - e^{4 tau log c}) dist(x_i, .)
  double ball_volume = 0.0;
};

/// Radial quadrature of a bubble atom with weight t on a product of constant
/// curvatures (kappa_a, kappa_b).
///
/// Inside the ball phi = h + log(t + (1 - t) q) / 4 with h = log(2 lambda) -
/// log(1 + lambda^2 chi^2), q = (c / e^h)^4. Polar coordinates (r, psi) with
/// d_a = r cos psi, d_b = r sin psi; the r-panels refine geometrically towards
/// the atom down to 1e-4 / lambda.
inline BallIntegrals bubble_ball_integrals(double lambda, const CutoffSpec& cut, double t, double kappa_a,
                                           double kappa_b, double tau = 1.0) {
  BallIntegrals out;
  if (t <= 0.0) return out;
  const double pi = std::numbers::pi;
  const double delta = cut.delta;
  const double log_c = std::log(2.0 * lambda) - std::log1p(4.0 * lambda * lambda * delta * delta);
  const double bg = std::exp(4.0 * tau * log_c);

  std::vector<double> breaks{delta, 2.0 * delta};
  for (double r = delta; r > 1e-4 / lambda;) {
    r *= 0.5;
    breaks.insert(breaks.begin(), r);
  }
  breaks.insert(breaks.begin(), 0.0);

  static const QuadratureRule rule_r = gauss_legendre(16);
  static const QuadratureRule rule_psi = map_rule(gauss_legendre(32), 0.0, pi / 2.0);
  const double ca = (4.0 / 3.0) * kappa_b - (2.0 / 3.0) * kappa_a;
  const double cb = (4.0 / 3.0) * kappa_a - (2.0 / 3.0) * kappa_b;

  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const QuadratureRule pr = map_rule(rule_r, breaks[p], breaks[p + 1]);
    for (int ir = 0; ir < static_cast<int>(pr.nodes.size()); ++ir) {
      const double r = pr.nodes[ir];
      double ch, ch1, ch2;
      cut.eval(r, ch, ch1, ch2);
      const double l2 = lambda * lambda;
      const double den = 1.0 + l2 * ch * ch;
      const double h = std::log(2.0 * lambda) - std::log1p(l2 * ch * ch);
      const double hc = -2.0 * l2 * ch / den;
      const double hcc = -2.0 * l2 * (1.0 - l2 * ch * ch) / (den * den);
      const double h1 = hc * ch1;
      const double h2 = hcc * ch1 * ch1 + hc * ch2;
      const double a = 4.0 * (h - log_c);  // >= 0
      const double q = std::exp(-a);
      const double big_l = t + (1.0 - t) * q;
      const double f = log_c + 0.25 * std::log(t * std::exp(a) + (1.0 - t));
      const double f1 = t * h1 / big_l;
      const double f2 = t * h2 / big_l + 4.0 * t * (1.0 - t) * h1 * h1 * q / (big_l * big_l);
      const double excess = std::exp(4.0 * tau * f) - bg;
      for (int ip = 0; ip < static_cast<int>(rule_psi.nodes.size()); ++ip) {
        const double psi = rule_psi.nodes[ip];
        const double cp = std::cos(psi), sp = std::sin(psi);
        double ja, ra, jb, rb;
        detail::polar_jacobian(kappa_a, r * cp, ja, ra);
        detail::polar_jacobian(kappa_b, r * sp, jb, rb);
        const double dv = 4.0 * pi * pi * ja * jb * r * pr.weights[ir] * rule_psi.weights[ip];
        const double lap = f2 + f1 / r + f1 * (cp * ra + sp * rb);
        out.quadratic += dv * (lap * lap + ca * f1 * f1 * cp * cp + cb * f1 * f1 * sp * sp);
        out.mean_excess += dv * (f - log_c);
        out.exp_excess += dv * excess;
        out.exp_moment += dv * excess * r;
        out.ball_volume += dv;
      }
    }
  }
  return out;
}

/// Why the radial route cannot evaluate this bubble, or nullopt when it can.
///
/// Requires constant-curvature factors, 2 delta below the injectivity radius
/// and atoms pairwise at least 4 delta apart, so that the supports of the
/// non-constant parts are disjoint geodesic balls.
inline std::optional<std::string> radial_route_obstruction(const ProductManifold4D& m, const BubbleTerm& term) {
  if (!m.constant_curvature()) return "factors have variable curvature";
  const double delta = term.cutoff.delta;
  if (!(2.0 * delta < m.injectivity_radius())) return "2 delta is not below the injectivity radius";
  const auto& atoms = term.sigma.atoms;
  for (std::size_t i = 0; i < atoms.size(); ++i)
    for (std::size_t j = i + 1; j < atoms.size(); ++j)
      if (m.distance_lower_bound(atoms[i].x, atoms[j].x) < 4.0 * delta) return "atoms closer than 4 delta";
  return std::nullopt;
}

/// Throws unless the bubble scale 1 / lambda is at least the node spacing, the
/// condition for nodal quadrature of a bubble when the radial route is unavailable.
inline void require_resolved_bubble(const ProductManifold4D& m, const BubbleTerm& term, const std::string& reason) {
  const double h = std::max(m.factor_a().node_spacing, m.factor_b().node_spacing);
  if (term.scale > 0.0 && term.lambda * h > 1.0)
    throw NumericError("bubble with lambda = " + std::to_string(term.lambda) + " is not resolved by node spacing " +
                       std::to_string(h) + " (lambda * h must be <= 1); radial route unavailable: " + reason);
}

/// Exact integrals of u = scale * phi_{lambda, sigma} + shift by the radial route.
struct BubbleIntegrals {
  double quadratic = 0.0;      // <P u, u>
  double integral = 0.0;       // int u
  double log_exp_integral = 0.0;  // log int e^{4u}
  double log_background = 0.0;    // value of u outside the balls
  std::vector<double> atom_mass;  // share of int e^{4u} carried by each ball above background
  std::vector<double> atom_moment;  // normalized first moment of that excess about the atom
  double background_mass = 0.0;     // normalized mass of the background density e^{4 log_background}
};

inline BubbleIntegrals bubble_integrals(const ProductManifold4D& m, const BubbleTerm& term) {
  if (auto why = radial_route_obstruction(m, term)) throw ConfigError("bubble radial route unavailable: " + *why);
  const double ka = m.factor_a().kappa, kb = m.factor_b().kappa;
  const double lambda = term.lambda, tau = term.scale, shift = term.shift;
  const double delta = term.cutoff.delta;
  const double log_c = std::log(2.0 * lambda) - std::log1p(4.0 * lambda * lambda * delta * delta);
  const double vol = m.volume();
  BubbleIntegrals out;
  double q = 0.0, i1 = 0.0, ie = 0.0;
  std::vector<double> excess, moment;
  for (const auto& at : term.sigma.atoms) {
    const BallIntegrals b = bubble_ball_integrals(lambda, term.cutoff, at.t, ka, kb, tau);
    q += b.quadratic;
    i1 += b.mean_excess;
    ie += b.exp_excess;
    excess.push_back(b.exp_excess);
    moment.push_back(b.exp_moment);
  }
  const double bg = std::exp(4.0 * tau * log_c);
  const double z = vol * bg + ie;  // int e^{4 tau phi}
  out.quadratic = tau * tau * q;
  out.integral = tau * (vol * log_c + i1) + shift * vol;
  out.log_exp_integral = 4.0 * shift + std::log(z);
  out.log_background = tau * log_c + shift;
  for (std::size_t i = 0; i < excess.size(); ++i) {
    out.atom_mass.push_back(excess[i] / z);
    out.atom_moment.push_back(moment[i] / z);
  }
  out.background_mass = vol * bg / z;
  return out;
}

/// The test function phi_{lambda, sigma}(y) = log(sum_i t_i (2 lambda / (1 + lambda^2 chi(d_i)^2))^4) / 4.
///
/// On spectral-only models the field carries only the analytic descriptor.
inline ScalarField bubble_field(const ManifoldPtr& m, const Barycenter& sigma, double lambda, const CutoffSpec& spec) {
  if (!(lambda > 0.0)) throw ConfigError("bubble: lambda must be positive");
  spec.validate();
  sigma.validate(*m);
  if (!(2.0 * spec.delta < m->injectivity_radius()))
    throw ConfigError("bubble: delta = " + std::to_string(spec.delta) + " must be below half the injectivity radius " +
                      std::to_string(m->injectivity_radius()));
  // canonical atom order makes every evaluation independent of how sigma is listed
  Barycenter canon = sigma;
  std::stable_sort(canon.atoms.begin(), canon.atoms.end(), [](const BarycenterAtom& x, const BarycenterAtom& y) {
    if (x.x != y.x) return x.x < y.x;
    return x.t < y.t;
  });
  BubbleTerm term{canon, lambda, spec, 1.0, 0.0};
  if (m->spectral_only()) return ScalarField::from_bubble(m, std::move(term), std::nullopt);

  const auto& fa = m->factor_a();
  const auto& fb = m->factor_b();
  const int na = m->nodes_a(), nb = m->nodes_b();
  const double l2 = lambda * lambda;
  // log-sum-exp over atoms of log t_i - 4 log(1 + lambda^2 chi^2)
  Eigen::MatrixXd top = Eigen::MatrixXd::Constant(na, nb, -std::numeric_limits<double>::infinity());
  std::vector<Eigen::MatrixXd> terms;
  for (const auto& at : canon.atoms) {
    if (at.t <= 0.0) continue;
    const double lt = std::log(at.t);
    Eigen::MatrixXd e(na, nb);
    for (int j = 0; j < nb; ++j) {
      const double db = fb.distances(j, at.x.b);
      for (int i = 0; i < na; ++i) {
        const double ch = spec(std::hypot(fa.distances(i, at.x.a), db));
        e(i, j) = lt - 4.0 * std::log1p(l2 * ch * ch);
      }
    }
    top = top.cwiseMax(e);
    terms.push_back(std::move(e));
  }
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(na, nb);
  for (const auto& e : terms) sum.array() += (e - top).array().exp();
  const Eigen::MatrixXd values = (std::log(2.0 * lambda) + 0.25 * (top.array() + sum.array().log())).matrix();
  return ScalarField::from_bubble(m, std::move(term), values);
}

/// Finite measure sum_k mass_k delta_{point_k} on nodes (or anchors).
struct DiscreteMeasure {
  std::vector<ProductPoint> points;
  std::vector<double> masses;

  double total() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }
  int size() const { return static_cast<int>(points.size()); }
};

inline DiscreteMeasure to_measure(const Barycenter& sigma) {
  DiscreteMeasure d;
  for (const auto& at : sigma.atoms) {
    d.points.push_back(at.x);
    d.masses.push_back(at.t);
  }
  return d;
}

/// Normalized e^{4u} dV as a node measure.
struct ConformalMeasure {
  DiscreteMeasure measure;
  /// W1 distance bound between this node measure and the true normalized measure
  /// (nonzero when ball excess masses are lumped onto their atoms).
  double lumping_bound = 0.0;
};

/// Radial-route bubbles lump each ball's excess mass onto its atom and spread the
/// background density over the nodes; other fields use nodal quadrature.
inline ConformalMeasure conformal_measure(const ScalarField& u) {
  const auto& m = u.manifold();
  m->require_nodes("conformal measure");
  const Eigen::MatrixXd w = m->weights();
  ConformalMeasure out;
  const int na = m->nodes_a(), nb = m->nodes_b();
  out.measure.points.reserve(std::size_t(na) * nb);
  out.measure.masses.reserve(std::size_t(na) * nb);
  const auto& bub = u.bubble();
  if (bub && bub->scale > 0.0 && !radial_route_obstruction(*m, *bub)) {
    const BubbleIntegrals bi = bubble_integrals(*m, *bub);
    const double density = bi.background_mass / m->volume();
    Eigen::MatrixXd mass = density * w;
    for (std::size_t k = 0; k < bub->sigma.atoms.size(); ++k) {
      const auto& x = bub->sigma.atoms[k].x;
      mass(x.a, x.b) += bi.atom_mass[k];
      out.lumping_bound += bi.atom_moment[k];
    }
    const double s = mass.sum();
    for (int j = 0; j < nb; ++j)
      for (int i = 0; i < na; ++i) {
        out.measure.points.push_back({i, j});
        out.measure.masses.push_back(mass(i, j) / s);
      }
    return out;
  }
  if (bub && bub->scale > 0.0) require_resolved_bubble(*m, *bub, *radial_route_obstruction(*m, *bub));
  const Eigen::MatrixXd& v = u.node_values();
  const double top = v.maxCoeff();
  const Eigen::MatrixXd mass = (w.array() * (4.0 * (v.array() - top)).exp()).matrix();
  const double s = mass.sum();
  for (int j = 0; j < nb; ++j)
    for (int i = 0; i < na; ++i) {
      out.measure.points.push_back({i, j});
      out.measure.masses.push_back(mass(i, j) / s);
    }
  return out;
}

struct ConcentrationReport {
  std::vector<ProductPoint> points;
  std::vector<double> captured;  // mass captured by each ball at pick time
  double residual = 1.0;         // mass outside the union of balls
  double eps = 0.0;
  double r = 0.0;
  bool concentrated = false;  // residual < eps
};

/// Greedy ball picking: repeatedly the candidate whose r-ball holds the most remaining mass,
/// reported at the heaviest point inside that ball.
///
/// Candidate centers are the `candidates` heaviest support points.
inline ConcentrationReport concentration_points(const ProductManifold4D& m, const DiscreteMeasure& mu, int k,
                                                double eps, double r, int candidates = 64) {
  if (k < 1) throw ConfigError("concentration: k must be >= 1");
  if (!(r > 0.0)) throw ConfigError("concentration: radius must be positive");
  if (!(eps > 0.0)) throw ConfigError("concentration: eps must be positive");
  const int n = mu.size();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const int nc = std::min(candidates, n);
  std::partial_sort(idx.begin(), idx.begin() + nc, idx.end(), [&](int x, int y) {
    if (mu.masses[x] != mu.masses[y]) return mu.masses[x] > mu.masses[y];
    return x < y;
  });
  idx.resize(nc);

  std::vector<std::vector<int>> ball(nc);
  for (int c = 0; c < nc; ++c)
    for (int p = 0; p < n; ++p)
      if (m.distance_lower_bound(mu.points[idx[c]], mu.points[p]) < r) ball[c].push_back(p);

  std::vector<char> taken(n, 0);
  ConcentrationReport rep;
  rep.eps = eps;
  rep.r = r;
  const double total = mu.total();
  double captured_total = 0.0;
  for (int pick = 0; pick < k; ++pick) {
    int best = -1;
    double best_mass = -1.0;
    for (int c = 0; c < nc; ++c) {
      double s = 0.0;
      for (int p : ball[c])
        if (!taken[p]) s += mu.masses[p];
      if (s > best_mass) {
        best_mass = s;
        best = c;
      }
    }
    // report the heaviest untaken point of the winning ball as its center
    int center = idx[best];
    for (int p : ball[best])
      if (!taken[p] && (mu.masses[p] > mu.masses[center] || taken[center])) center = p;
    for (int p : ball[best]) taken[p] = 1;
    rep.points.push_back(mu.points[center]);
    rep.captured.push_back(best_mass / total);
    captured_total += best_mass;
  }
  rep.residual = std::max(0.0, (total - captured_total) / total);
  rep.concentrated = rep.residual < eps;
  return rep;
}

inline ConcentrationReport concentration_points(const ScalarField& u, int k, double eps, double r,
                                                int candidates = 64) {
  return concentration_points(*u.manifold(), conformal_measure(u).measure, k, eps, r, candidates);
}

/// Surrogate projection onto M_k: greedy capture masses renormalized to sum 1.
inline Barycenter project_psi(const ScalarField& u, int k, double r, int candidates = 64) {
  const ConcentrationReport rep = concentration_points(u, k, 1.0, r, candidates);
  double s = 0.0;
  for (double c : rep.captured) s += c;
  if (!(s > 0.0)) throw NumericError("projection: no mass captured");
  Barycenter out;
  for (std::size_t i = 0; i < rep.points.size(); ++i) out.atoms.push_back({rep.captured[i] / s, rep.points[i]});
  // make the weights sum to 1 to the last bit
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < out.atoms.size(); ++i) acc += out.atoms[i].t;
  out.atoms.back().t = std::max(0.0, 1.0 - acc);
  return out;
}

struct MeasureDistance {
  double value = 0.0;
  /// Upper bound on |value - W1(m1, m2)| from compressing dense measures.
  double compression_bound = 0.0;
};

/// Keeps the `max_atoms` heaviest atoms, renormalized; reports the dropped mass.
inline DiscreteMeasure compress_measure(const DiscreteMeasure& mu, int max_atoms, double& dropped) {
  dropped = 0.0;
  std::vector<int> idx;
  for (int i = 0; i < mu.size(); ++i)
    if (mu.masses[i] > 0.0) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) { return mu.masses[x] > mu.masses[y]; });
  const double total = mu.total();
  if (static_cast<int>(idx.size()) > max_atoms) {
    for (std::size_t k = max_atoms; k < idx.size(); ++k) dropped += mu.masses[idx[k]];
    idx.resize(max_atoms);
  }
  double kept = 0.0;
  for (int i : idx) kept += mu.masses[i];
  DiscreteMeasure out;
  for (int i : idx) {
    out.points.push_back(mu.points[i]);
    out.masses.push_back(mu.masses[i] * total / kept);
  }
  dropped /= total;
  return out;
}

/// Kantorovich W1 with product geodesic costs, exact on the (compressed) supports.
inline MeasureDistance measure_distance(const ProductManifold4D& m, const DiscreteMeasure& m1,
                                        const DiscreteMeasure& m2, int max_atoms = 200) {
  const double t1 = m1.total(), t2 = m2.total();
  if (std::abs(t1 - t2) > 1e-9) throw ConfigError("measure distance: total masses differ by " + std::to_string(t1 - t2));
  double d1 = 0.0, d2 = 0.0;
  const DiscreteMeasure c1 = compress_measure(m1, max_atoms, d1);
  const DiscreteMeasure c2 = compress_measure(m2, max_atoms, d2);
  Eigen::MatrixXd cost(c1.size(), c2.size());
  for (int i = 0; i < c1.size(); ++i)
    for (int j = 0; j < c2.size(); ++j) cost(i, j) = m.distance_lower_bound(c1.points[i], c2.points[j]);
  std::vector<double> b = c2.masses;
  // exact balance for the simplex
  const double s1 = c1.total(), s2 = c2.total();
  for (double& x : b) x *= s1 / s2;
  const TransportPlan plan = solve_transport(cost, c1.masses, b);
  MeasureDistance out;
  out.value = plan.cost;
  out.compression_bound = (d1 + d2) * t1 * m.diameter();
  return out;
}

/// Barycenter distance: W1 between the associated atomic measures.
inline double barycenter_distance(const ProductManifold4D& m, const Barycenter& s1, const Barycenter& s2) {
  return measure_distance(m, to_measure(s1), to_measure(s2)).value;
}

}  // namespace qcurv
