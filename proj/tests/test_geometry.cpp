#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "support.hpp"

using namespace qtest;

namespace {

const std::string kData = QCURV_DATA_DIR;

// curvature invariants of a product with constant curvatures (ka, kb), from
// the explicit 4D Riemann tensor (tests/oracles/curvature.py)
struct CurvatureOracle {
  double ka, kb, r, ric2, weyl2, q;
};
const CurvatureOracle kCurvature[] = {
    {1, 1, 4.0, 4.0, 5.333333333333334, 0.3333333333333333},
    {1, 0, 2.0, 2.0, 1.3333333333333335, -0.16666666666666666},
    {0, 0, 0.0, 0.0, 0.0, 0.0},
    {-1, 1, 0.0, 4.0, 0.0, -1.0},
    {-1, -1, -4.0, 4.0, 5.333333333333334, 0.3333333333333333},
    {1, -3, -4.0, 20.0, 5.333333333333334, -3.6666666666666665},
};

}  // namespace

TEST(Quadrature, GaussLegendreIntegratesPolynomialsExactly) {
  const auto rule = gauss_legendre(8);
  for (int k = 0; k <= 15; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * std::pow(rule.nodes[i], k);
    const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
    EXPECT_NEAR(s, exact, 1e-14) << "degree " << k;
  }
  const auto mapped = map_rule(rule, 1.0, 3.0);
  double s = 0.0;
  for (std::size_t i = 0; i < mapped.nodes.size(); ++i) s += mapped.weights[i] * mapped.nodes[i] * mapped.nodes[i];
  EXPECT_NEAR(s, 26.0 / 3.0, 1e-13);
}

TEST(SphereFactor, AreaAndGaussBonnet) {
  const SurfaceFactor f = make_sphere_factor(6, 14);
  EXPECT_NEAR(f.weights.sum(), 4 * pi, 1e-12);
  EXPECT_NEAR(f.weights.dot(f.gauss_curvature), 4 * pi, 1e-12);
  EXPECT_EQ(f.euler_char, 2);
}

TEST(SphereFactor, SpectrumHasClosedFormMultiplicities) {
  const SurfaceFactor f = make_sphere_factor(5, 12);
  std::map<long, int> mult;
  for (int i = 0; i < f.eigen_count(); ++i) mult[std::lround(f.eigenvalues[i])]++;
  for (int l = 0; l <= 5; ++l) EXPECT_EQ(mult[l * (l + 1)], 2 * l + 1) << "l = " << l;
  EXPECT_EQ(f.eigen_count(), 36);
}

TEST(SphereFactor, DiscreteOperatorsReproduceSpectrum) {
  const SurfaceFactor f = make_sphere_factor(5, 12);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(f.node_count());
  const Eigen::MatrixXd mass = f.weighted_mass(ones);
  const Eigen::MatrixXd stiff = f.weighted_stiffness(ones);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(f.eigen_count(), f.eigen_count());
  EXPECT_LT(max_abs(mass - id), 1e-12);
  const Eigen::MatrixXd diag = f.eigenvalues.asDiagonal();
  EXPECT_LT(max_abs(stiff - diag), 1e-10);
}

TEST(SphereFactor, RejectsUnderResolvedGrid) {
  EXPECT_THROW(make_sphere_factor(6, 12), ConfigError);
  EXPECT_THROW(make_sphere_factor(1, 8), ConfigError);
}

TEST(FlatTorusFactor, AreaCurvatureAndFourierSpectrum) {
  const SurfaceFactor f = make_flat_torus_factor(2 * pi, 2 * pi, 3);
  EXPECT_NEAR(f.weights.sum(), 4 * pi2, 1e-11);
  EXPECT_DOUBLE_EQ(f.gauss_curvature.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(f.euler_char, 0);
  std::map<long, int> mult;
  for (int i = 0; i < f.eigen_count(); ++i) {
    const double ev = f.eigenvalues[i];
    EXPECT_NEAR(ev, std::round(ev), 1e-12);
    mult[std::lround(ev)]++;
  }
  // p^2 + q^2 counted over the integer lattice
  EXPECT_EQ(mult[0], 1);
  EXPECT_EQ(mult[1], 4);
  EXPECT_EQ(mult[2], 4);
  EXPECT_EQ(mult[4], 4);
  EXPECT_EQ(mult[5], 8);
  EXPECT_EQ(mult[3], 0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(f.node_count());
  EXPECT_LT(max_abs(f.weighted_stiffness(ones) - Eigen::MatrixXd(f.eigenvalues.asDiagonal())), 1e-10);
}

TEST(FlatTorusFactor, RectangularArea) {
  const SurfaceFactor f = make_flat_torus_factor(3.0, 5.0, 2);
  EXPECT_NEAR(f.area, 15.0, 1e-14);
  EXPECT_NEAR(f.weights.sum(), 15.0, 1e-12);
}

TEST(MeshFactor, IcosphereAngleDefectsSumToFourPi) {
  const SurfaceFactor f = load_mesh_factor(kData + "/meshes/icosphere.off", 16);
  EXPECT_EQ(f.euler_char, 2);
  EXPECT_NEAR(f.weights.dot(f.gauss_curvature), 4 * pi, 1e-10);
  EXPECT_GT(f.eigenvalues[1], 1e-6);
  EXPECT_LT(check_factor(f).gram_residual, 1e-10);
}

TEST(MeshFactor, GenusTwoAngleDefectsSumToMinusFourPi) {
  const SurfaceFactor f = load_mesh_factor(kData + "/meshes/genus2.off", 8);
  EXPECT_EQ(f.euler_char, -2);
  EXPECT_NEAR(f.weights.dot(f.gauss_curvature), -4 * pi, 1e-10);
  EXPECT_GT(f.eigenvalues[1], 1e-6);
  EXPECT_NEAR(f.eigenvalues[0], 0.0, 1e-9);
}

TEST(MeshFactor, RejectsOpenAndMalformedMeshes) {
  const std::string open_path = ::testing::TempDir() + "/open.off";
  {
    std::ofstream out(open_path);
    out << "OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n";
  }
  EXPECT_THROW(load_mesh_factor(open_path, 2), ConfigError);
  const std::string bad_path = ::testing::TempDir() + "/bad.off";
  {
    std::ofstream out(bad_path);
    out << "PLY\n";
  }
  EXPECT_THROW(load_mesh_factor(bad_path, 2), ConfigError);
  EXPECT_THROW(load_mesh_factor(kData + "/meshes/does-not-exist.off", 2), ConfigError);
}

TEST(SyntheticFactor, GaussBonnetConsistency) {
  const SurfaceFactor g2 = make_synthetic_factor(-1.0, {0, 0.1, 0.5}, 4 * pi);
  EXPECT_EQ(g2.euler_char, -2);
  EXPECT_NEAR(check_factor(g2).gauss_bonnet_error, 0.0, 1e-12);
  EXPECT_FALSE(g2.has_nodes());
  EXPECT_THROW(make_synthetic_factor(-1.0, {0, 0.1}, 5.0), ConfigError);
  EXPECT_THROW(make_synthetic_factor(-1.0, {0.1, 0.2}, 4 * pi), ConfigError);
  EXPECT_THROW(make_synthetic_factor(-1.0, {0, 0.5, 0.2}, 4 * pi), ConfigError);
}

TEST(SyntheticFactor, FlatCaseMatchesTorusInvariants) {
  const SurfaceFactor torus = make_flat_torus_factor(2 * pi, 2 * pi, 2);
  std::vector<double> ev(torus.eigenvalues.data(), torus.eigenvalues.data() + torus.eigen_count());
  const SurfaceFactor syn = make_synthetic_factor(0.0, ev, 4 * pi2);
  EXPECT_EQ(syn.euler_char, torus.euler_char);
  EXPECT_DOUBLE_EQ(syn.area, torus.area);
  const auto pt = make_product(make_flat_torus_factor(2 * pi, 2 * pi, 2), make_flat_torus_factor(2 * pi, 2 * pi, 2));
  const auto ps = make_product(syn, syn);
  EXPECT_EQ(pt->mode_count(), ps->mode_count());
  EXPECT_NEAR(total_q(pt), 0.0, 1e-14);
  EXPECT_NEAR(total_q(ps), 0.0, 1e-14);
}

TEST(Product, CurvatureMatchesRiemannTensorOracle) {
  const SurfaceFactor s2 = make_sphere_factor(3, 8);
  const SurfaceFactor t2 = make_flat_torus_factor(2 * pi, 2 * pi, 2);
  const std::pair<const SurfaceFactor*, const SurfaceFactor*> pairs[] = {{&s2, &s2}, {&s2, &t2}, {&t2, &t2}};
  for (const auto& [fa, fb] : pairs) {
    const auto m = make_product(*fa, *fb);
    const CurvatureOracle* o = nullptr;
    for (const auto& c : kCurvature)
      if (c.ka == fa->kappa && c.kb == fb->kappa) o = &c;
    ASSERT_NE(o, nullptr);
    EXPECT_LT(max_abs(m->scalar_curvature().array() - o->r), 1e-12);
    EXPECT_LT(max_abs(m->ricci_norm_sq().array() - o->ric2), 1e-12);
    EXPECT_LT(max_abs(m->weyl_norm_sq().array() - o->weyl2), 1e-12);
    const ScalarField q = q_curvature(m);
    EXPECT_NEAR(q.mean_from_coefficients(), o->q, 1e-12);
  }
}

TEST(Product, SpectralOnlyCurvatureMatchesOracle) {
  for (const auto& o : kCurvature) {
    if (o.ka == 0.0 && o.kb == 0.0) continue;
    auto make = [](double k) {
      if (k > 0) return make_synthetic_factor(k, {0, 2 * k}, 4 * pi / k);
      if (k < 0) return make_synthetic_factor(k, {0, 1}, -4 * pi / k);
      return make_synthetic_factor(0.0, {0, 1}, 4 * pi2);
    };
    const auto m = make_product(make(o.ka), make(o.kb));
    EXPECT_NEAR(q_curvature(m).mean_from_coefficients(), o.q, 1e-12) << o.ka << "," << o.kb;
    EXPECT_NEAR(gauss_bonnet_defect(m), 0.0, 1e-10) << o.ka << "," << o.kb;
  }
}

TEST(Product, SphereSphereVolumeAndBasis) {
  const auto& m = *s2xs2();
  EXPECT_NEAR(m.volume(), 16 * pi2, 1e-12);
  EXPECT_NEAR(m.weights().sum(), 16 * pi2, 1e-10);
  EXPECT_EQ(m.euler_char(), 4);
  EXPECT_DOUBLE_EQ(m.modes()[0].s, 0.0);
  for (int k = 1; k < m.mode_count(); ++k) EXPECT_LE(m.modes()[k - 1].s, m.modes()[k].s);
  // analysis inverts synthesis on the truncated basis
  Rng rng(4);
  const ScalarField u = random_band_limited(s2xs2(), rng, 1.0);
  const Eigen::VectorXd back = m.analyze(m.synthesize(u.coefficients()));
  EXPECT_LT((back - u.coefficients()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Product, TruncationBeyondFactorSpectraIsRejected) {
  EXPECT_THROW(make_product(make_sphere_factor(3, 8), make_sphere_factor(3, 8), 100.0), ConfigError);
  EXPECT_NO_THROW(make_product(make_sphere_factor(3, 8), make_sphere_factor(3, 8), 6.0));
}

TEST(Product, GeodesicDistanceIsProductMetric) {
  const auto& m = *s2xs2();
  const ProductPoint p{3, 17}, q{100, 40};
  const double da = m.factor_a().distance(3, 100), db = m.factor_b().distance(17, 40);
  EXPECT_NEAR(m.distance(p, q), std::hypot(da, db), 1e-15);
  EXPECT_NEAR(m.distance(p, p), 0.0, 1e-15);
  EXPECT_NEAR(m.diameter(), std::hypot(pi, pi), 1e-12);
}

TEST(Product, SpectralOnlyRefusesNodeOperations) {
  const auto& m = *genus3_sq();
  EXPECT_TRUE(m.spectral_only());
  EXPECT_THROW(m.weights(), SpectralOnlyError);
  try {
    m.synthesize(Eigen::VectorXd::Zero(m.mode_count()));
    FAIL() << "expected SpectralOnlyError";
  } catch (const SpectralOnlyError& e) {
    EXPECT_NE(std::string(e.what()).find("spectral-only"), std::string::npos);
  }
}

TEST(Cutoff, IdentityPlateauAndMonotone) {
  const CutoffSpec c{0.3};
  EXPECT_DOUBLE_EQ(cutoff_chi(c, 0.15), 0.15);
  EXPECT_DOUBLE_EQ(cutoff_chi(c, 0.9), 0.6);
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = 1.2 * i / 1000.0;
    const double v = cutoff_chi(c, t);
    EXPECT_GE(v, prev);
    EXPECT_LE(v, 0.6 + 1e-15);
    prev = v;
  }
  // C^1 at the joins
  double v, d1, d2;
  c.eval(0.3 + 1e-12, v, d1, d2);
  EXPECT_NEAR(d1, 1.0, 1e-9);
  c.eval(0.6 - 1e-12, v, d1, d2);
  EXPECT_NEAR(d1, 0.0, 1e-9);
  EXPECT_THROW(cutoff_chi(c, -0.1), ConfigError);
}

TEST(Rng, SeededStreamsAreReproducible) {
  Rng a(99), b(99), c(100);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_NE(a.next(), c.next());
  double s = 0, s2 = 0;
  Rng n(5);
  for (int i = 0; i < 20000; ++i) {
    const double z = n.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / 20000, 0.0, 0.05);
  EXPECT_NEAR(s2 / 20000, 1.0, 0.05);
}

TEST(Rng, RandomBarycenterRespectsSimplexAndSeparation) {
  Rng rng(1);
  const auto& m = *s2xs2();
  for (int i = 0; i < 20; ++i) {
    const Barycenter b = random_barycenter(m, rng, 3, 1.0);
    ASSERT_EQ(b.size(), 3);
    EXPECT_NO_THROW(b.validate(m));
    for (int x = 0; x < 3; ++x)
      for (int y = x + 1; y < 3; ++y) EXPECT_GE(m.distance(b.atoms[x].x, b.atoms[y].x), 1.0);
  }
}
