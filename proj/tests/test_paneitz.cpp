#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace qtest;

namespace {

// l(l+1)(l+2)(l+3) for l = 0..5
const double kSphere4Eigen[] = {0.0, 24.0, 120.0, 360.0, 840.0, 1680.0};

const std::string kData = QCURV_DATA_DIR;

}  // namespace

TEST(PaneitzSphere4, EigenvaluesAndTotalQ) {
  for (int l = 0; l <= 5; ++l) EXPECT_NEAR(sphere4_paneitz_eigenvalue(l), kSphere4Eigen[l], 1e-12);
  const Sphere4Model s4{5};
  EXPECT_NEAR(total_q(s4), 8 * pi2, 1e-12);
  EXPECT_DOUBLE_EQ(q_curvature(s4), 3.0);
  EXPECT_NEAR(gauss_bonnet_defect(s4), 0.0, 1e-12);
  const SpectrumSummary sp = spectrum(s4, 40);
  EXPECT_EQ(sp.negative_count, 0);
  EXPECT_EQ(sp.kernel_dim, 1);
  // multiplicity of degree 1 is 5
  for (int i = 1; i <= 5; ++i) EXPECT_NEAR(sp.lowest[i], 24.0, 1e-12);
}

TEST(PaneitzModes, ClosedFormMatchesQuadratureAssembly) {
  const auto& m = s2xs2();
  const PaneitzOperator closed = assemble_paneitz(m, PaneitzRoute::ClosedForm);
  const PaneitzOperator dense = assemble_paneitz(m, PaneitzRoute::Quadrature);
  EXPECT_EQ(closed.representation(), PaneitzOperator::Representation::Diagonal);
  EXPECT_EQ(dense.representation(), PaneitzOperator::Representation::Dense);
  EXPECT_LT(max_abs(closed.matrix() - dense.matrix()), 1e-9 * closed.scale());
}

TEST(PaneitzModes, MixedCurvatureProductMatchesQuadrature) {
  const auto m = make_product(make_sphere_factor(4, 10), make_flat_torus_factor(2 * pi, 2 * pi, 2));
  const Eigen::MatrixXd a = assemble_paneitz(m, PaneitzRoute::ClosedForm).matrix();
  const Eigen::MatrixXd b = assemble_paneitz(m, PaneitzRoute::Quadrature).matrix();
  EXPECT_LT(max_abs(a - b), 1e-9 * std::max(1.0, max_abs(a)));
  // alpha = 2 on the sphere, beta = 0: s^2 + (4/3) s - 4
  EXPECT_NEAR(mode_eigenvalue(2.0, 0.0, 1.0, 0.0), 4.0 + 8.0 / 3.0 - 4.0, 1e-14);
}

TEST(PaneitzModes, SphereSphereLowestNonconstantMode) {
  EXPECT_NEAR(mode_eigenvalue(2.0, 0.0, 1.0, 1.0), 16.0 / 3.0, 1e-14);
  const auto& p = s2xs2_problem();
  const Eigen::VectorXd d = p.paneitz.diagonal_values();
  EXPECT_NEAR(d[1], 16.0 / 3.0, 1e-12);
  // P applied to that eigenfunction returns 16/3 times it
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p.paneitz.dimension());
  c[1] = 1.0;
  const ScalarField u = ScalarField::from_coefficients(p.manifold, c);
  const ScalarField pu = paneitz_apply(p.paneitz, u);
  EXPECT_LT(max_abs(pu.node_values() - (16.0 / 3.0) * u.node_values()), 1e-10);
}

TEST(PaneitzModes, FlatTorusIsBilaplacian) {
  const auto& p = t4_problem();
  const Eigen::VectorXd d = p.paneitz.diagonal_values();
  for (int k = 0; k < p.manifold->mode_count(); ++k) {
    const double s = p.manifold->modes()[k].s;
    EXPECT_NEAR(d[k], s * s, 1e-12 * std::max(1.0, s * s));
  }
}

TEST(PaneitzForm, ConstantsAreInTheKernel) {
  for (const ConformalProblem* p : {&s2xs2_problem(), &t4_problem()}) {
    const ScalarField one = ScalarField::constant(p->manifold, 2.5);
    Rng rng(3);
    const ScalarField v = random_band_limited(p->manifold, rng, 1.0);
    EXPECT_NEAR(paneitz_form(p->paneitz, one, v), 0.0, 1e-12);
    EXPECT_NEAR(paneitz_form(p->paneitz, one, one), 0.0, 1e-12);
    EXPECT_LT(max_abs(paneitz_apply(p->paneitz, one).node_values()), 1e-12);
  }
}

TEST(PaneitzForm, SymmetricAndLinear) {
  const auto& p = s2xs2_problem();
  Rng rng(8);
  const ScalarField u = random_band_limited(p.manifold, rng, 1.0);
  const ScalarField v = random_band_limited(p.manifold, rng, 1.0);
  const double uv = paneitz_form(p.paneitz, u, v), vu = paneitz_form(p.paneitz, v, u);
  EXPECT_NEAR(uv, vu, 1e-12 * std::abs(uv));
  const double lin = paneitz_form(p.paneitz, u.scaled(2.0) + v, v);
  EXPECT_NEAR(lin, 2.0 * uv + paneitz_form(p.paneitz, v, v), 1e-10 * std::abs(lin));
}

TEST(QCurvature, ConstantCurvatureValues) {
  EXPECT_NEAR(s2xs2_problem().q.mean_from_coefficients(), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(t4_problem().q.mean_from_coefficients(), 0.0, 1e-14);
  EXPECT_TRUE(s2xs2_problem().q.is_constant());
}

TEST(TotalQ, ReferenceProducts) {
  EXPECT_NEAR(s2xs2_problem().k_p, 16 * pi2 / 3, 1e-10);
  EXPECT_NEAR(t4_problem().k_p, 0.0, 1e-12);
  const double kg3 = genus3_problem().k_p;
  EXPECT_NEAR(kg3, 64 * pi2 / 3, 1e-10);
  EXPECT_GT(kg3, 16 * pi2);
  EXPECT_LT(kg3, 24 * pi2);
  EXPECT_EQ(classify_regime(kg3, 0).k, 2);
}

TEST(Spectrum, SphereSphereIsNonnegativeWithConstantKernel) {
  const SpectrumSummary sp = spectrum(s2xs2_problem().paneitz, 10);
  EXPECT_EQ(sp.negative_count, 0);
  EXPECT_EQ(sp.kernel_dim, 1);
  EXPECT_NEAR(sp.lowest[1], 16.0 / 3.0, 1e-12);
}

TEST(Spectrum, FlatTorusIsNonnegativeWithConstantKernel) {
  const SpectrumSummary sp = spectrum(t4_problem().paneitz, 10);
  EXPECT_EQ(sp.negative_count, 0);
  EXPECT_EQ(sp.kernel_dim, 1);
}

TEST(Spectrum, NegativeCurvatureFactorProducesNegativeModes) {
  const ConformalProblem p = make_problem(s2_hyperbolic());
  const SpectrumSummary sp = spectrum(p.paneitz, 10);
  EXPECT_GE(sp.negative_count, 1);
  // alpha = 2 on the sphere and beta = 0: 4 - (8/3) 2 - 2 * 2
  const double expected = 4.0 - 16.0 / 3.0 - 4.0;
  EXPECT_NEAR(expected, -16.0 / 3.0, 1e-15);
  bool found = false;
  for (int k = 0; k < p.manifold->mode_count(); ++k) {
    const auto& md = p.manifold->modes()[k];
    if (md.alpha == 2.0 && md.beta == 0.0) {
      EXPECT_NEAR(p.paneitz.diagonal_values()[k], expected, 1e-12);
      found = true;
    }
  }
  EXPECT_TRUE(found);
  EXPECT_NEAR(sp.lowest[0], expected, 1e-12);
}

TEST(Spectrum, SummaryCountsAgainstRelativeTolerance) {
  const SpectrumSummary s = summarize_spectrum({3.0, -1.0, 1e-12, 2.0, -2.0, 0.0}, 4, 1e-8);
  EXPECT_EQ(s.negative_count, 2);
  EXPECT_EQ(s.kernel_dim, 2);
  ASSERT_EQ(s.lowest.size(), 4u);
  EXPECT_DOUBLE_EQ(s.lowest[0], -2.0);
}

TEST(GaussBonnet, DefectVanishesOnConstantCurvatureProducts) {
  EXPECT_LT(std::abs(gauss_bonnet_defect(s2xs2())), 1e-9);
  EXPECT_LT(std::abs(gauss_bonnet_defect(t4())), 1e-12);
  // genus 2 with kappa = -1 times the unit sphere: Q = -1, V = 16 pi^2, W = 0, chi = -4
  const auto m = make_product(make_synthetic_factor(-1.0, {0, 0.3}, 4 * pi), make_sphere_factor(3, 8));
  EXPECT_TRUE(m->spectral_only());
  EXPECT_NEAR(q_curvature(m).mean_from_coefficients(), -1.0, 1e-14);
  EXPECT_NEAR(m->volume(), 16 * pi2, 1e-12);
  EXPECT_EQ(m->euler_char(), -4);
  EXPECT_NEAR(gauss_bonnet_defect(m), 0.0, 1e-10);
}

TEST(GaussBonnet, MeshProductDefectIsSmall) {
  const auto m = make_product(load_mesh_factor(kData + "/meshes/icosphere.off", 9), make_sphere_factor(3, 8));
  EXPECT_FALSE(m->constant_curvature());
  EXPECT_LT(std::abs(gauss_bonnet_defect(m)), 1e-8);
  const ConformalProblem p = make_problem(m);
  EXPECT_EQ(p.paneitz.representation(), PaneitzOperator::Representation::Dense);
  const Eigen::MatrixXd a = p.paneitz.matrix();
  EXPECT_LT(max_abs(a - a.transpose()), 1e-10 * max_abs(a));
  EXPECT_LT(a.row(0).cwiseAbs().maxCoeff(), 1e-9 * max_abs(a));
}

TEST(ConformalQ, ZeroAndConstantFactors) {
  const auto& p = s2xs2_problem();
  const ConformalData d0 = conformal_q(p, ScalarField::constant(p.manifold, 0.0));
  EXPECT_LT(max_abs(d0.q_tilde.array() - 1.0 / 3.0), 1e-13);
  const double c = 0.37;
  const ConformalData dc = conformal_q(p, ScalarField::constant(p.manifold, c));
  EXPECT_LT(max_abs(dc.q_tilde.array() - std::exp(-4 * c) / 3.0), 1e-13);
  EXPECT_NEAR(dc.total_q, p.k_p, 1e-10);
}

TEST(ConformalQ, TotalIsInvariantForRandomFactors) {
  for (const ConformalProblem* p : {&s2xs2_problem(), &t4_problem()}) {
    Rng rng(2024);
    for (int i = 0; i < 10; ++i) {
      const ScalarField w = random_band_limited(p->manifold, rng, 0.3 + 0.2 * i);
      const ConformalData d = conformal_q(*p, w);
      EXPECT_LT(std::abs(d.total_q - p->k_p), 1e-6 * std::max(std::abs(p->k_p), 1.0));
    }
  }
}

TEST(ConformalQ, RejectsOverflowingFactor) {
  const auto& p = s2xs2_problem();
  Rng rng(1);
  EXPECT_THROW(conformal_q(p, random_band_limited(p.manifold, rng, 30.0)), ConfigError);
}
