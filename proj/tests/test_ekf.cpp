#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "uavisac/ekf.hpp"

using namespace uavisac;
using uavisac::gen::Rng;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd A(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) A(i, j) = normal(rng);
  return A;
}

}  // namespace

TEST(Ekf, ZeroNoisePredictionFollowsKinematics) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    FilterState s{gen::random_sensing_pose(rng), Matrix6(gen::random_spd(rng, 6))};
    PredictInputs in{gen::random_twist(rng, 4, 0.2), gen::random_twist(rng, 4, 0.2), Covariance6::Zero(),
                     Covariance6::Zero(), 0.25};
    const FilterState p = predict(s, in);
    EXPECT_LT(right_minus(p.T_hat, evolve_relative(s.T_hat, in.xi_s, in.xi_p, Twist::Zero(), in.dt)).norm(), 1e-12);
    const Matrix6 F = jac_state_F(in.xi_p, in.dt);
    EXPECT_LT(gen::rel_err(p.P, F * s.P * F.transpose()), 1e-12);
  }
}

TEST(Ekf, PredictionAddsBothNoiseTerms) {
  Rng rng(12);
  const FilterState s{gen::random_sensing_pose(rng), Covariance6::Zero()};
  PredictInputs in{gen::random_twist(rng, 4, 0.2), Twist::Zero(), Matrix6(gen::random_spd(rng, 6)),
                   Covariance6::Identity() * 1e-4, 0.25};
  const FilterState p = predict(s, in);
  const Matrix6 G = jac_control_G(p.T_hat, in.xi_s, in.dt);
  EXPECT_LT(gen::rel_err(p.P, G * in.Xi_w * G.transpose() + in.C_w), 1e-12);
}

TEST(Ekf, ScalarNoiseUpdateMatchesGeneralUpdate) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 6 + static_cast<int>(rng() % 40);
    const FilterState s{gen::random_sensing_pose(rng), Matrix6(gen::random_spd(rng, 6, 0.5))};
    const Eigen::MatrixXd H = random_matrix(rng, m, 6);
    const Eigen::VectorXd y = random_matrix(rng, m, 1);
    const Eigen::VectorXd g = random_matrix(rng, m, 1);
    const double c = gen::uniform(rng, 0.05, 5.0);
    const FilterState a = update(s, y, H, c, g);
    const FilterState b = update(s, y, H, Eigen::MatrixXd(c * Eigen::MatrixXd::Identity(m, m)), g);
    EXPECT_LT(right_minus(a.T_hat, b.T_hat).norm(), 1e-9);
    EXPECT_LT(gen::rel_err(a.P, b.P), 1e-8);
  }
}

TEST(Ekf, UpdateMatchesInformationForm) {
  Rng rng(14);
  const FilterState s{Pose(), Matrix6(gen::random_spd(rng, 6))};
  const Eigen::MatrixXd H = random_matrix(rng, 20, 6);
  const double c = 0.3;
  const FilterState a = update(s, Eigen::VectorXd::Zero(20), H, c, Eigen::VectorXd::Zero(20));
  const Matrix6 info = s.P.inverse() + H.transpose() * H / c;
  EXPECT_LT(gen::rel_err(a.P, info.inverse()), 1e-9);
  EXPECT_LT(right_minus(a.T_hat, s.T_hat).norm(), 1e-14);
}

TEST(Ekf, UpdateWithoutInformationLeavesStateAlone) {
  Rng rng(15);
  const FilterState s{gen::random_sensing_pose(rng), Matrix6(gen::random_spd(rng, 6))};
  const Eigen::MatrixXd H = Eigen::MatrixXd::Zero(8, 6);
  const Eigen::VectorXd y = random_matrix(rng, 8, 1);
  const FilterState a = update(s, y, H, 1.0, Eigen::VectorXd::Zero(8));
  EXPECT_LT(right_minus(a.T_hat, s.T_hat).norm(), 1e-15);
  EXPECT_LT(gen::rel_err(a.P, s.P), 1e-14);
}

TEST(Ekf, CovarianceStaysPsdAndShrinks) {
  Rng rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const FilterState s{gen::random_sensing_pose(rng), Matrix6(gen::random_spd(rng, 6, 1e-3))};
    const Eigen::MatrixXd H = random_matrix(rng, 12, 6) * gen::uniform(rng, 0.1, 100);
    const FilterState a = update(s, Eigen::VectorXd::Zero(12), H, 1.0, Eigen::VectorXd::Zero(12));
    const auto ev = Eigen::SelfAdjointEigenSolver<Matrix6>(a.P).eigenvalues();
    EXPECT_GE(ev.minCoeff(), 0.0);
    const auto shrink = Eigen::SelfAdjointEigenSolver<Matrix6>(s.P - a.P).eigenvalues();
    EXPECT_GE(shrink.minCoeff(), -1e-9 * s.P.norm());
  }
}

TEST(Ekf, IllConditionedInnovationIsRejected) {
  const FilterState s{Pose(), Covariance6::Identity()};
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(6, 6);
  H(0, 0) = 1e9;
  try {
    (void)update(s, Eigen::VectorXd::Zero(6), H, 1e-6, Eigen::VectorXd::Zero(6));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularInnovation);
  }
  try {
    (void)update(s, Eigen::VectorXd::Zero(5), H, 1.0, Eigen::VectorXd::Zero(6));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(Ekf, ProjectPsdClipsNegativeEigenvalues) {
  Matrix6 A = Matrix6::Identity();
  A(2, 2) = -1.0;
  A(0, 1) = 0.3;
  const Matrix6 P = project_psd<6>(A);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix6>(P).eigenvalues().minCoeff(), -1e-15);
  EXPECT_TRUE(P.isApprox(P.transpose()));
}

// Linear-Gaussian measurement on the tangent space: NEES averages to the dimension.
TEST(Ekf, NeesIsConsistentOnLinearizedProblem) {
  Rng rng(17);
  std::normal_distribution<double> normal;
  const Matrix6 P0 = Matrix6::Identity() * 1e-4;
  const Eigen::LLT<Matrix6> L0(P0);
  const Eigen::MatrixXd H = random_matrix(rng, 10, 6);
  const double c = 1e-4;
  double total = 0;
  const int runs = 2000;
  for (int run = 0; run < runs; ++run) {
    const Pose truth = gen::random_sensing_pose(rng);
    Twist e;
    for (int k = 0; k < 6; ++k) e(k) = normal(rng);
    const Pose est = right_plus(truth, -Twist(L0.matrixL() * e));
    Eigen::VectorXd noise(10);
    for (int k = 0; k < 10; ++k) noise(k) = std::sqrt(c) * normal(rng);
    const Eigen::VectorXd y = H * right_minus(truth, est) + noise;
    const FilterState a = update(FilterState{est, P0}, y, H, c, Eigen::VectorXd::Zero(10));
    total += nees(truth, a);
  }
  EXPECT_NEAR(total / runs, 6.0, 0.5);
}

TEST(Ekf, ParamPredictionPropagatesCovariance) {
  Rng rng(18);
  const FilterState s{gen::random_sensing_pose(rng), Matrix6(gen::random_spd(rng, 6))};
  Matrix46 Psi = gen::random_spd(rng, 6).topRows<4>();
  const ParamPosterior post = predict_params(s, PhysicalParams{1e-6, 0.1, 1.0, 3.0, Complex(1, 0)}, Psi);
  EXPECT_LT(gen::rel_err(post.V, Psi * s.P * Psi.transpose()), 1e-12);
  EXPECT_DOUBLE_EQ(post.zeta_hat.mu, 3.0);
}
