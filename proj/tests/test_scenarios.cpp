#include "ggmwatch/scenarios.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace ggmwatch;

TEST(RandomSparsePrecision, ConstructionGuarantees) {
  const int p = 80;
  const double lambda0 = 0.1;
  const auto pm = random_sparse_precision(p, 6, lambda0, 404);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pm.matrix(),
                                                     Eigen::EigenvaluesOnly);
  EXPECT_GE(eig.eigenvalues().minCoeff(), lambda0 - 1e-10);
  // The normalized Gram part has unit sup-norm before the ridge is added.
  Eigen::MatrixXd h = pm.matrix();
  h.diagonal().array() -= lambda0;
  EXPECT_NEAR(h.cwiseAbs().maxCoeff(), 1.0, 1e-12);

  const auto again = random_sparse_precision(p, 6, lambda0, 404);
  EXPECT_EQ(0.0, (pm.matrix() - again.matrix()).cwiseAbs().maxCoeff());

  const auto normalized = random_sparse_precision(p, 6, lambda0, 404, true);
  EXPECT_TRUE(normalized.matrix().diagonal().isApprox(Eigen::VectorXd::Ones(p)));

  EXPECT_THROW(random_sparse_precision(5, 6, 0.1, 1), std::invalid_argument);
  EXPECT_THROW(random_sparse_precision(5, 2, 0.0, 1), std::invalid_argument);
}

TEST(CltDemoPrecision, UnitMinimumEigenvalueAndConditioning) {
  const auto pm = clt_demo_precision(400, 5, 405);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pm.matrix(),
                                                     Eigen::EigenvaluesOnly);
  EXPECT_NEAR(eig.eigenvalues().minCoeff(), 1.0, 1e-9);
  const double condition = eig.eigenvalues().maxCoeff();
  EXPECT_GT(condition, 1.3);
  EXPECT_LT(condition, 3.5);
}

TEST(StarPrecision, HubTopologyAndReproducibility) {
  const int p = 60;
  const auto pm = star_precision(p, 406);
  const auto ds = degree_stats(pm);
  EXPECT_EQ(ds.d_max, p);  // hub row is dense relative to the threshold
  EXPECT_NEAR(ds.d_bar, 3.0, 0.2);
  // Gershgorin margin of the hub row keeps it SPD: off-diagonal mass < 1.
  double hub_mass = 0.0;
  for (int j = 1; j < p; ++j) hub_mass += std::abs(pm.matrix()(0, j));
  EXPECT_LT(hub_mass, 1.0);
  EXPECT_EQ(0.0,
            (pm.matrix() - star_precision(p, 406).matrix()).cwiseAbs().maxCoeff());
}

TEST(UniformChange, IdentityAndDomain) {
  const auto base = random_sparse_precision(12, 3, 0.3, 407);
  const auto unchanged = uniform_change(base, 0.0);
  EXPECT_EQ(0.0, (unchanged.matrix() - base.matrix()).cwiseAbs().maxCoeff());
  EXPECT_THROW(uniform_change(base, -1.0), std::invalid_argument);
}

TEST(UniformAndLowrank, PartialCorrelationScaleInvariance) {
  const auto base = random_sparse_precision(15, 3, 0.4, 408);
  const auto scaled = PrecisionMatrix::validate(2.5 * base.matrix());
  const auto r1 = partial_correlation(uniform_change(base, 0.3));
  const auto r2 = partial_correlation(uniform_change(scaled, 0.3));
  EXPECT_TRUE(r1.r.isApprox(r2.r, 1e-12));
  const auto lr1 = partial_correlation(lowrank_change(base, 4, 0.5));
  const auto lr2 = partial_correlation(lowrank_change(scaled, 4, 0.5));
  EXPECT_TRUE(lr1.r.isApprox(lr2.r, 1e-9));
}

TEST(LowrankChange, FullRankEqualsUniformAndKeepsEigenvectors) {
  const auto base = random_sparse_precision(20, 4, 0.5, 409);
  const auto full = lowrank_change(base, 20, 0.4);
  EXPECT_TRUE(full.matrix().isApprox(1.4 * base.matrix(), 1e-10));

  const int r = 5;
  const auto partial = lowrank_change(base, r, 0.4);
  // the difference lives in the span of the top-r eigenvectors
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(base.matrix());
  const Eigen::MatrixXd diff = partial.matrix() - base.matrix();
  for (int k = 0; k < 20 - r; ++k) {
    EXPECT_NEAR((diff * eig.eigenvectors().col(k)).norm(), 0.0, 1e-9);
  }
  EXPECT_THROW(lowrank_change(base, 0, 0.4), std::invalid_argument);
  EXPECT_THROW(lowrank_change(base, 21, 0.4), std::invalid_argument);
}

TEST(LocalizedChange, IdentityRepairAndSupportChecks) {
  const auto base = random_sparse_precision(25, 4, 0.4, 410);
  const int node = 3;
  const auto unchanged =
      localized_change(base, node, Eigen::VectorXd::Zero(25));
  EXPECT_EQ(0.0, (unchanged.matrix() - base.matrix()).cwiseAbs().maxCoeff());

  // An oversized perturbation must shrink by halving until SPD.
  Eigen::VectorXd big = random_neighbor_perturbation(base, node, 50.0, 411);
  const auto repaired = localized_change(base, node, big);
  EXPECT_NO_THROW(PrecisionMatrix::validate(repaired.matrix()));
  const double moved =
      (repaired.matrix() - base.matrix()).cwiseAbs().maxCoeff();
  EXPECT_GT(moved, 0.0);
  EXPECT_LT(moved, 50.0);  // shrunk

  Eigen::VectorXd outside = Eigen::VectorXd::Zero(25);
  int stranger = -1;
  for (int u = 0; u < 25; ++u) {
    if (u != node && std::abs(base.matrix()(node, u)) <= base.sparsity_eps()) {
      stranger = u;
      break;
    }
  }
  ASSERT_GE(stranger, 0);
  outside[stranger] = 0.1;
  EXPECT_THROW(localized_change(base, node, outside), std::invalid_argument);
}

TEST(LocalizedChange, SignalDecaysLikeOneOverP) {
  // With the perturbation norm fixed, psi_bar * p stays bounded as p grows.
  std::vector<double> scaled;
  for (const int p : {50, 100, 200}) {
    const auto base = random_sparse_precision(p, 4, 0.5, 412);
    const Eigen::VectorXd v = random_neighbor_perturbation(base, 2, 0.3, 413);
    const auto post = localized_change(base, 2, v);
    const auto signal = change_signal(base, post);
    scaled.push_back(signal.psi_bar * p);
  }
  const double lo = *std::min_element(scaled.begin(), scaled.end());
  const double hi = *std::max_element(scaled.begin(), scaled.end());
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi / lo, 3.0);
}

TEST(ScenarioSpec, JsonRoundTrip) {
  ScenarioSpec spec;
  spec.p = 40;
  spec.seed = 2024;
  spec.normalize = true;
  spec.segments.push_back({250, "random_sparse", {{"d", 5}, {"lambda0", 0.1}}});
  spec.segments.push_back({250, "uniform_change", {{"beta", 0.4}}});
  const ScenarioSpec parsed = ScenarioSpec::from_json(spec.to_json());
  EXPECT_EQ(parsed.p, 40);
  EXPECT_EQ(parsed.seed, 2024u);
  EXPECT_EQ(parsed.segments.size(), 2u);
  EXPECT_EQ(parsed.segments[1].generator, "uniform_change");
  EXPECT_DOUBLE_EQ(parsed.segments[1].params.at("beta").get<double>(), 0.4);
}

TEST(RenderStream, SingleSegmentHasNoChanges) {
  ScenarioSpec spec;
  spec.p = 10;
  spec.seed = 3;
  spec.segments.push_back({100, "random_sparse", {{"d", 3}, {"lambda0", 0.2}}});
  const RenderedStream stream = render_stream(spec);
  EXPECT_EQ(stream.data.rows(), 100);
  EXPECT_TRUE(stream.change_times.empty());
}

TEST(RenderStream, ChangeTimesAreCumulativeBoundaries) {
  ScenarioSpec spec;
  spec.p = 20;
  spec.seed = 4;
  spec.segments.push_back({2999, "random_sparse", {{"d", 5}, {"lambda0", 0.1}}});
  spec.segments.push_back({3000, "uniform_change", {{"beta", 0.2}}});
  spec.segments.push_back({3000, "lowrank_change", {{"r", 10}, {"beta", 0.4}}});
  spec.segments.push_back({1001, "random_sparse", {{"d", 5}, {"lambda0", 0.1}}});
  const RenderedStream stream = render_stream(spec);
  EXPECT_EQ(stream.data.rows(), 10000);
  ASSERT_EQ(stream.change_times.size(), 3u);
  EXPECT_EQ(stream.change_times[0], 3000);
  EXPECT_EQ(stream.change_times[1], 6000);
  EXPECT_EQ(stream.change_times[2], 9000);
  EXPECT_EQ(stream.segment_matrices.size(), 4u);
}

TEST(RenderStream, RejectsNoopChanges) {
  ScenarioSpec spec;
  spec.p = 10;
  spec.seed = 5;
  spec.segments.push_back({50, "random_sparse", {{"d", 3}, {"lambda0", 0.2}}});
  spec.segments.push_back({50, "uniform_change", {{"beta", 0.0}}});
  EXPECT_THROW(render_stream(spec), std::invalid_argument);
}

TEST(RenderStream, BoundaryShiftsDistributionWithinSegmentDoesNot) {
  ScenarioSpec spec;
  spec.p = 15;
  spec.seed = 6;
  spec.segments.push_back({1000, "random_sparse", {{"d", 3}, {"lambda0", 0.2}}});
  spec.segments.push_back({1000, "uniform_change", {{"beta", 1.0}}});
  const RenderedStream stream = render_stream(spec);
  const auto cov = [](const Eigen::MatrixXd& block) {
    return Eigen::MatrixXd(block.transpose() * block / double(block.rows()));
  };
  const Eigen::MatrixXd pre_a = cov(stream.data.middleRows(0, 500));
  const Eigen::MatrixXd pre_b = cov(stream.data.middleRows(500, 500));
  const Eigen::MatrixXd post = cov(stream.data.middleRows(1000, 500));
  const double within = (pre_a - pre_b).norm();
  const double across = (pre_b - post).norm();
  EXPECT_GT(across, 2.0 * within);
}
