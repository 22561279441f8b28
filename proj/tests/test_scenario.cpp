#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"
#include "uavisac/scenario.hpp"

using namespace uavisac;

namespace {

ScenarioConfig noiseless(Policy p, int epochs) {
  ScenarioConfig cfg;
  cfg.policy = p;
  cfg.n_epochs = epochs;
  cfg.sample_noise = false;
  cfg.r_wp_hat0 = cfg.T_wp0.r();
  cfg.mc_runs = 1;
  return cfg;
}

std::string metrics_csv(const MonteCarloResult& r) {
  std::ostringstream os;
  write_metrics_csv(os, r);
  return os.str();
}

}  // namespace

TEST(Scenario, ZeroNoiseTracksExactly) {
  for (Policy p : {Policy::Parallel, Policy::Diagonal, Policy::Optimized}) {
    const EpisodeTrace tr = run_episode(noiseless(p, p == Policy::Optimized ? 60 : 200), 3);
    ASSERT_FALSE(tr.failed) << tr.failure;
    for (const EpochRecord& r : tr.epochs) {
      ASSERT_LT((r.T_hat.r() - r.T_sp.r()).norm(), 1e-6) << to_string(p) << " epoch " << r.epoch;
    }
  }
}

TEST(Scenario, SingleEpochIsOnePredictUpdate) {
  ScenarioConfig cfg;
  cfg.policy = Policy::Parallel;
  cfg.n_epochs = 1;
  const EpisodeTrace tr = run_episode(cfg, 5);
  ASSERT_FALSE(tr.failed);
  ASSERT_EQ(tr.epochs.size(), 1u);
  EXPECT_EQ(tr.epochs[0].epoch, 1);
  // One update cannot inflate the covariance beyond the prediction.
  EXPECT_LT(tr.epochs[0].cpcrb_T.trace(), tr.epochs[0].prior_cov.trace());
}

TEST(Scenario, ParallelPolicyMatchesGroundUserVelocity) {
  const EpisodeTrace tr = run_episode(noiseless(Policy::Parallel, 120), 1);
  ASSERT_FALSE(tr.failed);
  // After the ramp the horizontal offset between UAV and GU no longer changes.
  const auto offset = [&](int n) {
    const EpochRecord& r = tr.epochs[static_cast<std::size_t>(n)];
    return Eigen::Vector2d((r.gu_world - r.uav_world).head<2>());
  };
  EXPECT_LT((offset(119) - offset(60)).norm(), 1e-9);
}

TEST(Scenario, DiagonalPolicyApproachesAtFortyFiveDegrees) {
  const ScenarioConfig cfg = noiseless(Policy::Diagonal, 120);
  const EpisodeTrace tr = run_episode(cfg, 1);
  ASSERT_FALSE(tr.failed);
  const Vector3 v = (tr.epochs[119].uav_world - tr.epochs[79].uav_world) / (40 * cfg.dt);
  const Vector3 gu = (tr.epochs[119].gu_world - tr.epochs[79].gu_world) / (40 * cfg.dt);
  EXPECT_NEAR(v.head<2>().norm(), 4.0, 1e-9);
  EXPECT_NEAR(std::acos(v.head<2>().normalized().dot(gu.head<2>().normalized())), kPi / 4, 1e-9);
  // Closing in on the GU track at y = 150.
  EXPECT_GT(v.y(), 0.0);
}

TEST(Scenario, HeuristicTwistsRespectMotionLimits) {
  for (Policy p : {Policy::Parallel, Policy::Diagonal}) {
    ScenarioConfig cfg = noiseless(p, 60);
    const EpisodeTrace tr = run_episode(cfg, 1);
    ASSERT_FALSE(tr.failed);
    Twist prev = cfg.xi_s0;
    QuadraticForm zero;
    zero.P_bar.setZero();
    zero.c.setZero();
    for (const EpochRecord& r : tr.epochs) {
      ConstraintSet cons = cfg.constraints();
      cons.xi_prev = prev;
      EXPECT_LE(assemble_qcqp(zero, cons).max_violation(r.xi_s), 1e-9) << to_string(p) << " epoch " << r.epoch;
      prev = r.xi_s;
    }
  }
}

TEST(Scenario, OptimizedPolicyProducesFeasibleTwists) {
  ScenarioConfig cfg;
  cfg.policy = Policy::Optimized;
  cfg.n_epochs = 200;
  const EpisodeTrace tr = run_episode(cfg, 9);
  ASSERT_FALSE(tr.failed) << tr.failure;
  ASSERT_EQ(tr.epochs.size(), 200u);
  Twist prev = cfg.xi_s0;
  QuadraticForm zero;
  zero.P_bar.setZero();
  zero.c.setZero();
  for (const EpochRecord& r : tr.epochs) {
    ConstraintSet cons = cfg.constraints();
    cons.xi_prev = prev;
    // The rotation change between epochs only enters the smoothness limit; check the rest.
    const auto g = assemble_qcqp(zero, cons).inequalities(r.xi_s);
    EXPECT_LE(g.head<4>().maxCoeff(), 1.0 + 1e-9);
    for (int k : kEqualityIndices) EXPECT_EQ(r.xi_s(k), 0.0);
    prev = r.xi_s;
  }
}

TEST(Scenario, SameSeedGivesIdenticalOutputAcrossThreadCounts) {
  ScenarioConfig cfg;
  cfg.policy = Policy::Parallel;
  cfg.n_epochs = 30;
  cfg.mc_runs = 5;
  cfg.seed = 7;
  const std::string a = metrics_csv(monte_carlo(cfg, 1));
  const std::string b = metrics_csv(monte_carlo(cfg, 3));
  const std::string c = metrics_csv(monte_carlo(cfg, 1));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  cfg.seed = 8;
  EXPECT_NE(a, metrics_csv(monte_carlo(cfg, 1)));
}

TEST(Scenario, ZeroNoiseMonteCarloHasZeroError) {
  ScenarioConfig cfg = noiseless(Policy::Parallel, 40);
  cfg.mc_runs = 3;
  const MonteCarloResult r = monte_carlo(cfg, 1);
  EXPECT_EQ(r.failures, 0);
  for (std::size_t n = 0; n < r.rmse_pos.size(); ++n) {
    EXPECT_LT(r.rmse_pos[n], 1e-6);
    EXPECT_LT(r.rmse_tau[n], 1e-14);
    EXPECT_LT(r.rmse_phi[n], 1e-8);
    EXPECT_LT(r.rmse_theta[n], 1e-8);
  }
}

TEST(Scenario, AzimuthErrorIsWrapped) {
  const Eigen::Vector4d truth(1e-6, -kPi + 0.01, 0.5, 2.0);
  const Eigen::Vector4d est(1e-6, kPi - 0.01, 0.5, 2.0);
  EXPECT_NEAR(param_error(est, truth)(1), -0.02, 1e-12);
  EXPECT_NEAR(param_error(truth, est)(1), 0.02, 1e-12);
  EXPECT_LE(std::abs(param_error(Eigen::Vector4d(0, kPi, 0, 0), Eigen::Vector4d(0, -kPi, 0, 0))(1)), 1e-12);
}

TEST(Scenario, LowerSnrRaisesDelayBound) {
  ScenarioConfig cfg;
  cfg.policy = Policy::Parallel;
  cfg.n_epochs = 60;
  cfg.mc_runs = 2;
  const MonteCarloResult base = monte_carlo(cfg, 1);
  cfg.snr_db -= 10.0 * std::log10(2.0);  // doubles sigma_z^2
  const MonteCarloResult noisy = monte_carlo(cfg, 1);
  EXPECT_GT(tail_mean(noisy.cpcrb_tau, 20), tail_mean(base.cpcrb_tau, 20));
}

TEST(Scenario, SingularGeometryIsRecordedNotThrown) {
  ScenarioConfig cfg = noiseless(Policy::Parallel, 5);
  cfg.T_wp0 = Pose(Matrix3::Identity(), Vector3(200, 0, 0));
  cfg.r_wp_hat0 = cfg.T_wp0.r();
  cfg.xi_p = Twist::Zero();
  cfg.xi_s0 = Twist::Zero();
  cfg.parallel_twist = Twist::Zero();
  const EpisodeTrace tr = run_episode(cfg, 1);
  EXPECT_TRUE(tr.failed);
  EXPECT_NE(tr.failure.find("PolarSingularity"), std::string::npos) << tr.failure;
  cfg.mc_runs = 2;
  try {
    (void)monte_carlo(cfg, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllEpisodesFailed);
  }
}

TEST(Scenario, DefaultNoiseRarelyFails) {
  ScenarioConfig cfg;
  cfg.policy = Policy::Diagonal;
  cfg.mc_runs = 10;
  EXPECT_EQ(monte_carlo(cfg, 1).failures, 0);
}

TEST(Scenario, InvalidConfigIsRejected) {
  ScenarioConfig cfg;
  cfg.n_epochs = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = ScenarioConfig{};
  cfg.dt = -1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = ScenarioConfig{};
  cfg.mc_runs = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(parse_policy("spiral"), Error);
  EXPECT_EQ(parse_policy("diagonal"), Policy::Diagonal);
}
