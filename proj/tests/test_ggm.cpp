#include "ggmwatch/precision.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ggmwatch/scenarios.hpp"
#include "testing_util.hpp"

using namespace ggmwatch;

namespace {

Eigen::MatrixXd random_spd(int p, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) a(i, j) = rng.gaussian();
  }
  return a * a.transpose() / p + 0.5 * Eigen::MatrixXd::Identity(p, p);
}

}  // namespace

TEST(Validate, AcceptsIdentityRejectsIndefinite) {
  const auto eye = PrecisionMatrix::validate(Eigen::MatrixXd::Identity(4, 4));
  EXPECT_EQ(eye.dim(), 4);
  EXPECT_NEAR(eye.log_det(), 0.0, 1e-14);

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues -1 and 3
  EXPECT_THROW(PrecisionMatrix::validate(bad), NotPositiveDefiniteError);

  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, 0.1, 1.0;
  EXPECT_THROW(PrecisionMatrix::validate(asym), AsymmetryError);

  Eigen::MatrixXd nonfinite = Eigen::MatrixXd::Identity(2, 2);
  nonfinite(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(PrecisionMatrix::validate(nonfinite), std::invalid_argument);
}

TEST(Validate, AcceptsSparseGeneratorOutput) {
  // The H + lambda0*I construction keeps the smallest eigenvalue >= lambda0.
  EXPECT_NO_THROW(random_sparse_precision(60, 5, 0.1, 42));
}

TEST(PartialCorrelation, ClosedFormsAndScaleInvariance) {
  Eigen::MatrixXd diag = Eigen::Vector2d(4.0, 9.0).asDiagonal();
  const auto r_diag = partial_correlation(PrecisionMatrix::validate(diag));
  EXPECT_TRUE(r_diag.r.isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-14));

  Eigen::MatrixXd omega(2, 2);
  omega << 2.0, 1.0, 1.0, 2.0;
  const auto r = partial_correlation(PrecisionMatrix::validate(omega));
  EXPECT_NEAR(r.r(0, 1), 0.5, 1e-14);
  EXPECT_NEAR(r.r(0, 0), 1.0, 0.0);
  EXPECT_NEAR(r.quartic_sum, 2.0 + 2.0 * std::pow(0.5, 4), 1e-12);

  const Eigen::MatrixXd m = random_spd(8, 3);
  const auto base = partial_correlation(PrecisionMatrix::validate(m));
  const auto scaled = partial_correlation(PrecisionMatrix::validate(3.7 * m));
  EXPECT_TRUE(base.r.isApprox(scaled.r, 1e-13));
}

TEST(SampleGgm, ScalarVarianceMatchesInverse) {
  Eigen::MatrixXd omega(1, 1);
  omega << 4.0;
  const auto pm = PrecisionMatrix::validate(omega);
  const Eigen::MatrixXd draws = sample_ggm(pm, 100000, 17);
  std::vector<double> x(draws.data(), draws.data() + draws.rows());
  const auto est = mc::moments_with_se(x);
  // sd of the sample variance of N(0, 0.25): sqrt(2/n) * 0.25
  EXPECT_NEAR(est.sd * est.sd, 0.25, 3.0 * std::sqrt(2.0 / 100000.0) * 0.25);
}

TEST(SampleGgm, IdentityEmpiricalCovariance) {
  const auto pm = PrecisionMatrix::validate(Eigen::MatrixXd::Identity(6, 6));
  const long n = 100000;
  const Eigen::MatrixXd draws = sample_ggm(pm, n, 18);
  const Eigen::MatrixXd cov = draws.transpose() * draws / double(n);
  // entries have standard error ~ 1/sqrt(n) (off-diag) and sqrt(2/n) (diag)
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      const double se = (i == j ? std::sqrt(2.0) : 1.0) / std::sqrt(double(n));
      EXPECT_NEAR(cov(i, j), target, 3.5 * se);
    }
  }
}

TEST(SampleGgm, LargeSampleInversionRecoversOmega) {
  const auto pm = random_sparse_precision(8, 3, 0.4, 99);
  const long n = 100000;
  const Eigen::MatrixXd draws = sample_ggm(pm, n, 19);
  const Eigen::MatrixXd cov = draws.transpose() * draws / double(n);
  const Eigen::MatrixXd omega_hat = cov.inverse();
  EXPECT_LT((omega_hat - pm.matrix()).cwiseAbs().maxCoeff(), 0.12);
}

TEST(SampleGgm, BitExactForFixedSeed) {
  const auto pm = random_sparse_precision(12, 4, 0.2, 1234);
  const Eigen::MatrixXd a = sample_ggm(pm, 50, 777);
  const Eigen::MatrixXd b = sample_ggm(pm, 50, 777);
  EXPECT_EQ(0.0, (a - b).cwiseAbs().maxCoeff());
  const Eigen::MatrixXd c = sample_ggm(pm, 50, 778);
  EXPECT_GT((a - c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SampleGgm, ProjectedScoreHasUnitVariance) {
  // <X, Omega_col_s> / sqrt(Omega_ss) is standard normal under the model.
  const auto pm = random_sparse_precision(10, 3, 0.3, 55);
  const long n = 60000;
  const Eigen::MatrixXd draws = sample_ggm(pm, n, 20);
  const Eigen::MatrixXd projected = draws * pm.matrix();
  for (const int s : {0, 4, 9}) {
    std::vector<double> z(static_cast<std::size_t>(n));
    const double scale = std::sqrt(pm.matrix()(s, s));
    for (long i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = projected(i, s) / scale;
    const auto est = mc::moments_with_se(z);
    EXPECT_NEAR(est.sd, 1.0, 3.0 * est.se_sd);
    EXPECT_NEAR(est.mean, 0.0, 3.0 * est.se_mean);
  }
}

TEST(KlDivergence, ZeroScalarAndRouteAgreement) {
  const auto pm = random_sparse_precision(6, 2, 0.5, 7);
  EXPECT_NEAR(kl_divergence(pm, pm, 5), 0.0, 1e-10);

  Eigen::MatrixXd two(1, 1), one(1, 1);
  two << 2.0;
  one << 1.0;
  const double expected = 1.0 - std::log(2.0);
  EXPECT_NEAR(kl_divergence(PrecisionMatrix::validate(two),
                            PrecisionMatrix::validate(one), 1),
              expected, 1e-12);

  for (const std::uint64_t seed : {1u, 2u, 3u}) {
    const auto a = PrecisionMatrix::validate(random_spd(12, seed));
    const auto b = PrecisionMatrix::validate(random_spd(12, seed + 100));
    const double eig_route = kl_divergence(a, b, 3);
    const double trace_route = kl_divergence_trace_form(a, b, 3);
    EXPECT_NEAR(eig_route, trace_route, 1e-8 * (1.0 + eig_route));
    EXPECT_GT(eig_route, 0.0);
  }
}

TEST(DegreeStats, CountsIncludeDiagonal) {
  const auto eye = PrecisionMatrix::validate(Eigen::MatrixXd::Identity(5, 5));
  const auto ds_eye = degree_stats(eye);
  EXPECT_EQ(ds_eye.d_max, 1);
  EXPECT_DOUBLE_EQ(ds_eye.d_bar, 1.0);

  Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(5, 5);
  for (int i = 0; i < 5; ++i) tri(i, i) = 2.0;
  for (int i = 0; i + 1 < 5; ++i) tri(i, i + 1) = tri(i + 1, i) = -0.8;
  const auto ds_tri = degree_stats(PrecisionMatrix::validate(tri));
  EXPECT_EQ(ds_tri.d_max, 3);
  EXPECT_DOUBLE_EQ(ds_tri.d_bar, 2.6);
}

TEST(DegreeStats, SparseGeneratorRowBound) {
  // With d of p positions per row of U, two rows overlap with probability
  // 1 - C(p-d, d)/C(p, d) (~0.23 at p = 100, d = 5), so U U^T row degrees
  // concentrate near 1 + (p-1)*0.23 ~ 24 with a max a few sd above that.
  for (const std::uint64_t seed : {31337u, 424242u, 5u}) {
    const auto pm = random_sparse_precision(100, 5, 0.1, seed);
    const auto ds = degree_stats(pm);
    EXPECT_GE(ds.d_max, 5);
    EXPECT_LE(ds.d_max, 55);
    EXPECT_GT(ds.d_bar, 15.0);
    EXPECT_LT(ds.d_bar, 35.0);
  }
}

TEST(ChangeSignal, UniformChangeClosedForm) {
  const auto base = random_sparse_precision(20, 4, 0.3, 5);
  const auto same = change_signal(base, base);
  EXPECT_NEAR(same.delta.cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_NEAR(same.psi_bar, 0.0, 1e-12);

  for (const double beta : {-0.5, 0.2, 1.0}) {
    const auto post = uniform_change(base, beta);
    const auto signal = change_signal(base, post);
    const double expected = 1.0 / (1.0 + beta) - 1.0;
    for (int s = 0; s < base.dim(); ++s) {
      EXPECT_NEAR(signal.delta[s], expected, 1e-10);
    }
    EXPECT_NEAR(signal.psi_bar, barrier(1.0 + expected), 1e-10);
  }
}

TEST(ChangeSignal, LocalizedChangeVanishesOffNeighborhood) {
  const auto base = random_sparse_precision(30, 3, 0.5, 9);
  const int node = 4;
  const Eigen::VectorXd v = random_neighbor_perturbation(base, node, 0.2, 10);
  const auto post = localized_change(base, node, v);
  const auto signal = change_signal(base, post);
  for (int u = 0; u < base.dim(); ++u) {
    if (std::abs(base.matrix()(node, u)) <= base.sparsity_eps() && u != node) {
      EXPECT_NEAR(signal.delta[u], 0.0, 1e-9) << "node " << u;
    }
  }
}

TEST(DetectabilityThreshold, FormulaAndScaling) {
  EXPECT_DOUBLE_EQ(detectability_threshold(10, 5, 0.5, 0.5), 0.0);
  EXPECT_NEAR(detectability_threshold(800, 15, 0.01, 0.01), 0.026373, 5e-5);
  const double once = detectability_threshold(100, 10, 0.05, 0.05);
  const double twice = detectability_threshold(100, 20, 0.05, 0.05);
  EXPECT_NEAR(once, 2.0 * twice, 1e-12);
  EXPECT_THROW(detectability_threshold(100, 10, 0.6, 0.05), std::domain_error);
}
