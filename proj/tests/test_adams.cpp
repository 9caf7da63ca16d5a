#include <gtest/gtest.h>

#include <cmath>

#include "qcurv/app.hpp"
#include "support.hpp"

using namespace qtest;

namespace {

std::vector<double> lambdas() {
  std::vector<double> v;
  for (int j = 0; j <= 20; ++j) v.push_back(5.0 * std::pow(2.0, j / 4.0));
  return v;
}

SpreadRegions two_regions(const ConformalProblem& p) {
  const double delta = delta_default(*p.manifold);
  SpreadRegions reg;
  for (const auto& at : spread_barycenter(*p.manifold, 2).atoms) reg.centers.push_back(at.x);
  reg.radius = 2.0 * delta;
  reg.gamma0 = 0.4;
  reg.delta0 = 4.0 * delta;
  return reg;
}

}  // namespace

TEST(Adams, ConstantFieldHasNoExcess) {
  const auto& p = s2xs2_problem();
  const InequalitySample s = adams_sample(p, ScalarField::constant(p.manifold, 1.3));
  EXPECT_NEAR(s.quadratic, 0.0, 1e-12);
  EXPECT_NEAR(s.log_term, std::log(p.manifold->volume()), 1e-10);
}

TEST(Adams, LeastSquaresSlope) {
  EXPECT_NEAR(ls_slope({1, 2, 3, 4}, {3, 5, 7, 9}), 2.0, 1e-14);
  EXPECT_THROW(ls_slope({1}, {1}), ConfigError);
  EXPECT_THROW(ls_slope({2, 2}, {1, 3}), ConfigError);
}

TEST(Adams, SingleBubbleSlopeIsSharp) {
  const auto& p = s2xs2_problem();
  const auto fam = app::single_bubble_family(p.manifold, {0, 0}, lambdas(), delta_default(*p.manifold));
  const InequalityReport rep = adams_report(p, fam, "single");
  const double ratio = rep.tail_slope / rep.coefficient;
  EXPECT_GE(ratio, 0.90);
  EXPECT_LE(ratio, 1.00);
  EXPECT_TRUE(rep.slope_within_coefficient);
  // quadratic energy grows along the family
  for (std::size_t i = 1; i < rep.samples.size(); ++i) EXPECT_GT(rep.samples[i].quadratic, rep.samples[i - 1].quadratic);
}

TEST(Adams, RandomSamplesRespectCalibratedConstant) {
  const auto& p = s2xs2_problem();
  const auto fam = app::single_bubble_family(p.manifold, {0, 0}, lambdas(), delta_default(*p.manifold));
  InequalityReport rep = adams_report(p, fam, "single");
  InequalitySample base = adams_sample(p, ScalarField::constant(p.manifold, 0.0));
  rep.calibrated_c = std::max(rep.calibrated_c, base.log_term - rep.coefficient * base.quadratic);
  Rng rng(7);
  const double amps[] = {0.25, 0.5, 1.0, 2.0, 3.0};
  for (int i = 0; i < 100; ++i) {
    const InequalitySample s = adams_sample(p, random_band_limited(p.manifold, rng, amps[i % 5]));
    EXPECT_TRUE(adams_bound_holds(rep, s)) << "sample " << i;
  }
}

TEST(Adams, RefusesNegativeOperators) {
  const ConformalProblem p = make_problem(s2_hyperbolic());
  EXPECT_THROW(adams_report(p, {}), PreconditionError);
}

TEST(ImprovedAdams, EllZeroReducesToAdams) {
  const auto& p = s2xs2_problem();
  const auto fam = app::single_bubble_family(p.manifold, {0, 0}, {10, 20, 40, 80}, delta_default(*p.manifold));
  const InequalityReport a = adams_report(p, fam);
  const InequalityReport b = improved_adams_report(p, 0, SpreadRegions{}, fam);
  EXPECT_DOUBLE_EQ(a.coefficient, b.coefficient);
  EXPECT_DOUBLE_EQ(a.tail_slope, b.tail_slope);
  EXPECT_DOUBLE_EQ(a.calibrated_c, b.calibrated_c);
}

TEST(ImprovedAdams, TwoBubbleSlopeHalvesTheSingleSlope) {
  const auto& p = s2xs2_problem();
  const SpreadRegions reg = two_regions(p);
  const app::ImprovedAdamsOutcome o =
      app::improved_adams_comparison(p, 1, reg, lambdas(), delta_default(*p.manifold));
  const double coef = 1.0 / (16 * pi2);
  EXPECT_DOUBLE_EQ(o.two.coefficient, coef);
  EXPECT_LE(o.two.tail_slope, 1.10 * coef);
  EXPECT_LE(o.two.tail_slope, 0.55 * o.matched_single_slope);
  int included = 0;
  for (const auto& s : o.two.samples) included += s.included;
  EXPECT_GE(included, 8);
}

TEST(ImprovedAdams, SingleBubbleFailsTheSpreadingFilter) {
  const auto& p = s2xs2_problem();
  const SpreadRegions reg = two_regions(p);
  const ScalarField lone =
      bubble_field(p.manifold, Barycenter{{{1.0, reg.centers[0]}}}, 80.0, CutoffSpec{delta_default(*p.manifold)});
  const InequalityReport rep = improved_adams_report(p, 1, reg, {lone});
  ASSERT_EQ(rep.samples[0].region_fractions.size(), 2u);
  EXPECT_GT(rep.samples[0].region_fractions[0], 0.9);
  EXPECT_LT(rep.samples[0].region_fractions[1], 0.4);
  EXPECT_FALSE(rep.samples[0].included);
}

TEST(ImprovedAdams, RejectsCentersCloserThanDeltaZero) {
  const auto& p = s2xs2_problem();
  SpreadRegions reg = two_regions(p);
  reg.delta0 = 10.0;
  EXPECT_THROW(improved_adams_report(p, 1, reg, {}), ConfigError);
  reg = two_regions(p);
  reg.centers.pop_back();
  EXPECT_THROW(improved_adams_report(p, 1, reg, {}), ConfigError);
  EXPECT_THROW(improved_adams_report(p, -1, reg, {}), ConfigError);
}
