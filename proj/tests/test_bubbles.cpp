#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"

using namespace qtest;

namespace {

// Adaptive Cartesian quadrature with symbolic derivatives (tests/oracles/bubble_ball.py).
struct BallOracle {
  double lambda, delta, t, ka, kb;
  double quadratic, mean_excess, exp_excess;
};
const BallOracle kBall[] = {
    {10.0, 0.2 * pi, 1.0, 1.0, 1.0, 1065.67665102383, 4.341631398819716, 26.220117393525886},
    {20.0, 0.2 * pi, 0.6, 1.0, 1.0, 1159.5929152541134, 3.7247921144574274, 15.77778279115021},
    {10.0, 0.3, 1.0, -1.0, -1.0, 930.2399185780168, 0.24501163187487313, 26.14679352758524},
    {15.0, 0.3, 0.4, 1.0, -3.0, 827.0221102939386, 0.18382215830446313, 10.520417792428626},
};

// scipy HiGHS linear program on a fixed 4 x 5 instance (tests/oracles/transport.py)
const double kLpCost[4][5] = {{3.959, 2.904, 2.074, 4.735, 0.714},
                              {2.321, 2.994, 2.703, 3.955, 3.66},
                              {1.805, 0.741, 3.741, 4.868, 4.768},
                              {3.961, 0.238, 0.947, 2.989, 0.04}};
const double kLpValue = 1.8820499999999998;

double ball_mass(const ProductManifold4D& m, const DiscreteMeasure& mu, ProductPoint x, double r) {
  double s = 0.0;
  for (int p = 0; p < mu.size(); ++p)
    if (m.distance(mu.points[p], x) < r) s += mu.masses[p];
  return s;
}

CutoffSpec default_cut() { return CutoffSpec{delta_default(*s2xs2())}; }

}  // namespace

TEST(BubbleIntegrals, RadialQuadratureMatchesCartesianOracle) {
  for (const auto& o : kBall) {
    const BallIntegrals b = bubble_ball_integrals(o.lambda, CutoffSpec{o.delta}, o.t, o.ka, o.kb);
    EXPECT_NEAR(b.quadratic, o.quadratic, 1e-8 * o.quadratic) << "lambda " << o.lambda;
    EXPECT_NEAR(b.mean_excess, o.mean_excess, 1e-8 * std::abs(o.mean_excess)) << "lambda " << o.lambda;
    EXPECT_NEAR(b.exp_excess, o.exp_excess, 1e-8 * o.exp_excess) << "lambda " << o.lambda;
  }
}

TEST(BubbleField, SingleAtomReducesToSimpleBubble) {
  const auto& m = s2xs2();
  const CutoffSpec cut = default_cut();
  const ProductPoint x{40, 77};
  const double lambda = 12.0;
  const ScalarField phi = bubble_field(m, Barycenter{{{1.0, x}}}, lambda, cut);
  const Eigen::MatrixXd& v = phi.node_values();
  int checked = 0;
  for (int a = 0; a < m->nodes_a(); ++a)
    for (int b = 0; b < m->nodes_b(); ++b) {
      const double d = m->distance(x, {a, b});
      if (d >= cut.delta) continue;
      const double simple = 0.25 * std::log(std::pow(2 * lambda / (1 + lambda * lambda * d * d), 4));
      EXPECT_NEAR(v(a, b), simple, 1e-12);
      ++checked;
    }
  EXPECT_GT(checked, 10);
  // outside all balls the field is the constant log c
  const double log_c = std::log(2 * lambda / (1 + 4 * lambda * lambda * cut.delta * cut.delta));
  for (int a = 0; a < m->nodes_a(); ++a)
    for (int b = 0; b < m->nodes_b(); ++b)
      if (m->distance(x, {a, b}) > 2 * cut.delta) EXPECT_NEAR(v(a, b), log_c, 1e-12);
}

TEST(BubbleField, PermutingAtomsChangesNothing) {
  const auto& p = s2xs2_problem();
  const Barycenter s1{{{0.3, {10, 20}}, {0.7, {150, 100}}}};
  const Barycenter s2{{{0.7, {150, 100}}, {0.3, {10, 20}}}};
  const ScalarField a = bubble_field(p.manifold, s1, 25.0, default_cut());
  const ScalarField b = bubble_field(p.manifold, s2, 25.0, default_cut());
  EXPECT_EQ(a.node_values(), b.node_values());
  EXPECT_EQ(ii_value(p, a).total, ii_value(p, b).total);
}

TEST(BubbleField, ConformalMassConcentratesOnAtoms) {
  const auto& m = s2xs2();
  const Barycenter sigma{{{0.35, {20, 30}}, {0.65, {120, 170}}}};
  const double r = 0.5;
  double prev_err = INFINITY;
  for (double lambda : {20.0, 80.0, 320.0, 1280.0}) {
    const ConformalMeasure cm = conformal_measure(bubble_field(m, sigma, lambda, default_cut()));
    double err = 0.0;
    for (const auto& at : sigma.atoms) err = std::max(err, std::abs(ball_mass(*m, cm.measure, at.x, r) - at.t));
    EXPECT_LT(err, prev_err) << "lambda " << lambda;
    prev_err = err;
  }
  EXPECT_LT(prev_err, 0.01);
}

TEST(BubbleField, SpectralOnlyModelsCarryTheDescriptor) {
  const auto& m = genus3_sq();
  const ScalarField phi = bubble_field(m, Barycenter{{{0.5, {0, 0}}, {0.5, {1, 2}}}}, 20.0, CutoffSpec{0.4});
  EXPECT_FALSE(phi.has_node_values());
  ASSERT_TRUE(phi.bubble().has_value());
  EXPECT_EQ(ii_value(genus3_problem(), phi).route, "radial");
}

TEST(BubbleField, RejectsCutoffBeyondInjectivityRadius) {
  EXPECT_THROW(bubble_field(s2xs2(), Barycenter{{{1.0, {0, 0}}}}, 10.0, CutoffSpec{2.0}), ConfigError);
  EXPECT_THROW(bubble_field(s2xs2(), Barycenter{{{0.5, {0, 0}}, {0.6, {50, 50}}}}, 10.0, default_cut()),
               ConfigError);
}

TEST(BubbleField, RadialRouteNeedsSeparatedAtoms) {
  const auto& m = *s2xs2();
  BubbleTerm term{Barycenter{{{0.5, {0, 0}}, {0.5, {0, 1}}}}, 10.0, default_cut(), 1.0, 0.0};
  const auto why = radial_route_obstruction(m, term);
  ASSERT_TRUE(why.has_value());
  EXPECT_NE(why->find("4 delta"), std::string::npos);
}

TEST(Concentration, SingleBubbleIsRecovered) {
  const auto& m = s2xs2();
  const ProductPoint x{77, 33};
  const double r = 0.4;
  const ScalarField phi = bubble_field(m, Barycenter{{{1.0, x}}}, 40.0, default_cut());
  const ConcentrationReport rep = concentration_points(phi, 1, 0.05, r);
  ASSERT_EQ(rep.points.size(), 1u);
  EXPECT_LT(m->distance(rep.points[0], x), 2 * r);
  EXPECT_LT(rep.residual, 0.05);
  EXPECT_TRUE(rep.concentrated);
}

TEST(Concentration, UniformMeasureLeavesTheComplement) {
  const auto& m = s2xs2();
  const double r = 0.6;
  const ScalarField zero = ScalarField::constant(m, 0.0);
  const ConcentrationReport rep = concentration_points(zero, 1, 0.05, r);
  const Eigen::MatrixXd w = m->weights();
  double inside = 0.0;
  for (int a = 0; a < m->nodes_a(); ++a)
    for (int b = 0; b < m->nodes_b(); ++b)
      if (m->distance(rep.points[0], {a, b}) < r) inside += w(a, b);
  EXPECT_NEAR(rep.residual, 1.0 - inside / m->volume(), 1e-12);
  EXPECT_FALSE(rep.concentrated);
}

TEST(Concentration, TwoEqualBubblesAreBothRecovered) {
  const auto& m = s2xs2();
  const Barycenter sigma{{{0.5, {25, 60}}, {0.5, {160, 140}}}};
  const ScalarField phi = bubble_field(m, sigma, 60.0, default_cut());
  const ConcentrationReport rep = concentration_points(phi, 2, 0.05, 0.4);
  ASSERT_EQ(rep.points.size(), 2u);
  for (const auto& at : sigma.atoms) {
    const double d = std::min(m->distance(rep.points[0], at.x), m->distance(rep.points[1], at.x));
    EXPECT_LT(d, 0.8);
  }
  EXPECT_LT(rep.residual, 0.05);
}

TEST(ProjectPsi, SingleBubbleProjectsToItsCenter) {
  const auto& m = s2xs2();
  const ProductPoint x{101, 7};
  const Barycenter psi = project_psi(bubble_field(m, Barycenter{{{1.0, x}}}, 50.0, default_cut()), 1, 0.4);
  ASSERT_EQ(psi.size(), 1);
  EXPECT_DOUBLE_EQ(psi.atoms[0].t, 1.0);
  EXPECT_LT(m->distance(psi.atoms[0].x, x), 0.05 * m->diameter());
}

TEST(ProjectPsi, ConvergesToSigmaAsLambdaGrows) {
  const auto& m = s2xs2();
  const Barycenter sigma{{{0.3, {30, 40}}, {0.7, {150, 180}}}};
  ASSERT_FALSE(radial_route_obstruction(*m, BubbleTerm{sigma, 10.0, default_cut(), 1.0, 0.0}));
  double prev = INFINITY;
  for (double lambda : {10.0, 40.0, 160.0, 640.0}) {
    const Barycenter psi = project_psi(bubble_field(m, sigma, lambda, default_cut()), 2, 0.4);
    const double d = barycenter_distance(*m, psi, sigma);
    EXPECT_LE(d, prev + 1e-12) << "lambda " << lambda;
    prev = d;
  }
  EXPECT_LT(prev, 1e-3 * m->diameter());
}

TEST(ProjectPsi, RelabelingTheInputPermutesTheOutput) {
  const auto& m = s2xs2();
  const Barycenter s1{{{0.45, {12, 180}}, {0.55, {99, 3}}}};
  const Barycenter s2{{{0.55, {99, 3}}, {0.45, {12, 180}}}};
  const Barycenter p1 = project_psi(bubble_field(m, s1, 80.0, default_cut()), 2, 0.4);
  const Barycenter p2 = project_psi(bubble_field(m, s2, 80.0, default_cut()), 2, 0.4);
  EXPECT_NEAR(barycenter_distance(*m, p1, p2), 0.0, 1e-14);
}

TEST(MeasureDistance, ElementaryCases) {
  const auto& m = *s2xs2();
  const ProductPoint x{3, 4}, y{120, 60};
  const DiscreteMeasure dx{{x}, {1.0}}, dy{{y}, {1.0}};
  EXPECT_NEAR(measure_distance(m, dx, dx).value, 0.0, 1e-15);
  EXPECT_NEAR(measure_distance(m, dx, dy).value, m.distance(x, y), 1e-14);
  const DiscreteMeasure half{{x, y}, {0.5, 0.5}};
  EXPECT_NEAR(measure_distance(m, half, dx).value, 0.5 * m.distance(x, y), 1e-14);
  const DiscreteMeasure other{{x}, {0.9}};
  EXPECT_THROW(measure_distance(m, dx, other), ConfigError);
}

TEST(Transport, SimplexMatchesLinearProgramOracle) {
  Eigen::MatrixXd cost(4, 5);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) cost(i, j) = kLpCost[i][j];
  const TransportPlan plan = solve_transport(cost, {0.1, 0.4, 0.3, 0.2}, {0.25, 0.05, 0.3, 0.15, 0.25});
  EXPECT_NEAR(plan.cost, kLpValue, 1e-12);
  // the plan has the right marginals
  std::vector<double> row(4, 0.0), col(5, 0.0);
  for (const auto& c : plan.cells) {
    row[c.i] += c.flow;
    col[c.j] += c.flow;
    EXPECT_GE(c.flow, -1e-15);
  }
  EXPECT_NEAR(row[1], 0.4, 1e-14);
  EXPECT_NEAR(col[3], 0.15, 1e-14);
}

TEST(Transport, CostIsSymmetricUnderSwappingMarginals) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + rng.index(5), k = 3 + rng.index(5);
    Eigen::MatrixXd pts_a(n, 2), pts_b(k, 2);
    for (int i = 0; i < n; ++i) pts_a.row(i) << rng.uniform(), rng.uniform();
    for (int j = 0; j < k; ++j) pts_b.row(j) << rng.uniform(), rng.uniform();
    Eigen::MatrixXd cost(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) cost(i, j) = (pts_a.row(i) - pts_b.row(j)).norm();
    std::vector<double> a(n), b(k);
    double sa = 0, sb = 0;
    for (auto& v : a) sa += (v = rng.uniform() + 0.1);
    for (auto& v : b) sb += (v = rng.uniform() + 0.1);
    for (auto& v : a) v /= sa;
    for (auto& v : b) v /= sb;
    const double ab = solve_transport(cost, a, b).cost;
    const double ba = solve_transport(cost.transpose(), b, a).cost;
    EXPECT_NEAR(ab, ba, 1e-12);
    // never worse than the independent coupling
    double indep = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) indep += a[i] * b[j] * cost(i, j);
    EXPECT_LE(ab, indep + 1e-12);
  }
}

TEST(BubbleField, UnresolvedNodalQuadratureIsRefused) {
  const auto& m = s2xs2();
  // closer than 4 delta: no radial route, and 1/lambda is far below the node spacing
  const Barycenter sigma{{{0.3, {30, 40}}, {0.7, {140, 110}}}};
  ASSERT_TRUE(radial_route_obstruction(*m, BubbleTerm{sigma, 640.0, default_cut(), 1.0, 0.0}));
  const ScalarField phi = bubble_field(m, sigma, 640.0, default_cut());
  EXPECT_THROW(conformal_measure(phi), NumericError);
  EXPECT_THROW(ii_value(s2xs2_problem(), phi), NumericError);
  EXPECT_NO_THROW(conformal_measure(bubble_field(m, sigma, 3.0, default_cut())));
}
