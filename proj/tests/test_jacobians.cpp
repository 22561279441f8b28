#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "uavisac/jacobians.hpp"

using namespace uavisac;
using uavisac::gen::Rng;

namespace {

struct Bench {
  UpaConfig upa{2, 2, 2, 2};
  ReGrid grid = ReGrid::diagonal(32, 10, 32, 15e3, 0.07, 2.4e9);
  MeasurementModel model;

  explicit Bench(Rng& rng) {
    SensingGeometry geo;
    geo.upa_offset = {0.2, 0.3, 0.1};
    geo.a_const = radar_constant(grid.fc, 0.5);
    geo.phase = gen::uniform(rng, -kPi, kPi);
    model = MeasurementModel(upa, grid, build_pilot_matrix(upa, grid, 1.0, rng), geo);
  }
};

// h as a function of zeta with |b| tied to tau through the range.
VectorXc channel_of_zeta(const Eigen::Vector4d& z, double phase, double a_const, const UpaConfig& upa,
                         const ReGrid& grid) {
  const double rho = z(0) * kSpeedOfLight / 2.0;
  return channel_vector(PhysicalParams{z(0), z(1), z(2), z(3), channel_gain(rho, phase, a_const)}, upa, grid);
}

Eigen::Vector4d zeta_vec(const PhysicalParams& p) { return p.zeta(); }

}  // namespace

TEST(Jacobians, ChannelColumnsMatchFiniteDifferences) {
  Rng rng(1);
  Bench s(rng);
  for (int trial = 0; trial < 200; ++trial) {
    const double rho = gen::uniform(rng, 30, 400);
    const Eigen::Vector4d z(2 * rho / kSpeedOfLight, gen::uniform(rng, -3, 3), gen::uniform(rng, 0.1, 3.0),
                            gen::uniform(rng, -200, 200));
    const Complex b = channel_gain(rho, s.model.geo.phase, s.model.geo.a_const);
    const MatrixXc J = jac_h_wrt_zeta(PhysicalParams{z(0), z(1), z(2), z(3), b}, s.upa, s.grid, s.model.selectors);
    const Eigen::Vector4d step(1e-6 * z(0), 1e-6, 1e-6, 1e-4);
    for (int c = 0; c < 4; ++c) {
      Eigen::Vector4d zp = z, zm = z;
      zp(c) += step(c);
      zm(c) -= step(c);
      const VectorXc fd = (channel_of_zeta(zp, s.model.geo.phase, s.model.geo.a_const, s.upa, s.grid) -
                           channel_of_zeta(zm, s.model.geo.phase, s.model.geo.a_const, s.upa, s.grid)) /
                          (2 * step(c));
      const double err = (J.col(c) - fd).norm() / std::max(fd.norm(), J.col(c).norm());
      EXPECT_LT(err, 1e-4) << "column " << c << " trial " << trial;
    }
  }
}

TEST(Jacobians, ThetaColumnVanishesAtEquator) {
  Rng rng(2);
  Bench s(rng);
  const MatrixXc J = jac_h_wrt_zeta(PhysicalParams{1e-6, 0.3, kPi / 2, 5.0, Complex(1e-7, 0)}, s.upa, s.grid,
                                    s.model.selectors);
  EXPECT_LT(J.col(2).norm(), 1e-12 * J.col(1).norm());
}

TEST(Jacobians, ScalarDopplerColumn) {
  UpaConfig upa{1, 1, 1, 1};
  ReGrid grid;
  grid.res = {{2, 3}};
  const auto sel = ConstantSelectors::build(upa, grid);
  const PhysicalParams z{1e-6, 0.2, 0.9, 40.0, Complex(0.3, 0.1)};
  const MatrixXc J = jac_h_wrt_zeta(z, upa, grid, sel);
  const Complex expected = Complex(0, 2 * kPi) * z.b * grid.Ts * 3.0 * omega_vector(z.tau, z.mu, grid)(0);
  EXPECT_NEAR(std::abs(J(0, 3) - expected), 0.0, 1e-14);
}

TEST(Jacobians, SelectorsPermutation) {
  const auto sel = ConstantSelectors::build(UpaConfig{3, 2, 2, 4}, ReGrid::diagonal(8, 4, 5, 15e3, 0.07, 2.4e9));
  EXPECT_EQ(sel.N2, sel.N1 * ConstantSelectors::cyclic_permutation());
  EXPECT_EQ(sel.N1.rows(), 5 * 6 * 8);
  EXPECT_EQ(sel.N1.col(1).maxCoeff(), 2);
  EXPECT_EQ(sel.N1.col(0).maxCoeff(), 1);
}

TEST(Jacobians, ZetaWrtPoseMatchesFiniteDifferences) {
  Rng rng(3);
  SensingGeometry geo;
  geo.upa_offset = {0.2, 0.3, 0.1};
  for (int trial = 0; trial < 200; ++trial) {
    const Pose T = gen::random_sensing_pose(rng);
    const Twist xi_s = gen::random_twist(rng, 5.0, 0.2);
    const Twist xi_p = make_twist(gen::random_vec3(rng, 5.0), Vector3::Zero());
    const Matrix46 J = jac_zeta_wrt_pose(T, local_velocity(xi_p, Vector3::Zero()),
                                         local_velocity(xi_s, geo.upa_offset), geo.fc);
    Matrix46 fd;
    const double eps = 1e-6;
    for (int k = 0; k < 6; ++k) {
      const Twist d = Twist::Unit(k) * eps * (k < 3 ? T.r().norm() : 1.0);
      Eigen::Vector4d zp = zeta_vec(extract_params(right_plus(T, d), xi_s, xi_p, geo));
      Eigen::Vector4d zm = zeta_vec(extract_params(right_plus(T, -d), xi_s, xi_p, geo));
      zp(1) = zm(1) + wrap_angle(zp(1) - zm(1));
      fd.col(k) = (zp - zm) / (2 * d.norm());
    }
    for (int row = 0; row < 4; ++row) {
      EXPECT_LT(gen::rel_err(J.row(row), fd.row(row)), 1e-4) << "row " << row << " trial " << trial;
    }
  }
}

TEST(Jacobians, ZetaWrtPoseSpecialCases) {
  const Matrix3 R = exp_map(make_twist(Vector3::Zero(), {0.1, -0.2, 0.3})).R();
  const Matrix46 J = jac_zeta_wrt_pose(Pose(R, {120, 10, 5}), Vector3::Zero(), Vector3::Zero(), 2.4e9);
  EXPECT_TRUE((J.row(3).isZero(0.0)));

  const Matrix46 K = jac_zeta_wrt_pose(Pose(R, {150, 0, 0}), Vector3::Zero(), Vector3::Zero(), 2.4e9);
  EXPECT_LT((K.block<1, 3>(0, 0) - (2.0 / kSpeedOfLight) * R.row(0)).norm(), 1e-20);
  EXPECT_TRUE((K.block<1, 3>(0, 3).isZero(0.0)));
}

TEST(Jacobians, ZetaWrtPoseSingularities) {
  try {
    (void)jac_zeta_wrt_pose(Pose(Matrix3::Identity(), {0, 0, 100}), Vector3::Zero(), Vector3::Zero(), 2.4e9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PolarSingularity);
  }
}

TEST(Jacobians, TransitionMatchesFiniteDifferences) {
  Rng rng(4);
  const double dt = 0.25, eps = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const Pose T = gen::random_sensing_pose(rng);
    const Twist xi_s = gen::random_twist(rng, 5.0, 0.3);
    const Twist xi_p = make_twist(gen::random_vec3(rng, 5.0), Vector3::Zero());
    const Pose f0 = evolve_relative(T, xi_s, xi_p, Twist::Zero(), dt);
    Matrix6 fdF, fdG;
    for (int k = 0; k < 6; ++k) {
      const Twist d = Twist::Unit(k) * eps;
      fdF.col(k) = (right_minus(evolve_relative(right_plus(T, d), xi_s, xi_p, Twist::Zero(), dt), f0) -
                    right_minus(evolve_relative(right_plus(T, -d), xi_s, xi_p, Twist::Zero(), dt), f0)) /
                   (2 * eps);
      fdG.col(k) = (right_minus(evolve_relative(T, xi_s, xi_p, d, dt), f0) -
                    right_minus(evolve_relative(T, xi_s, xi_p, -d, dt), f0)) /
                   (2 * eps);
    }
    EXPECT_LT(gen::rel_err(jac_state_F(xi_p, dt), fdF), 1e-5);
    EXPECT_LT(gen::rel_err(jac_control_G(f0, xi_s, dt), fdG), 1e-5);
  }
}

TEST(Jacobians, TransitionSpecialCases) {
  EXPECT_TRUE(jac_state_F(Twist::Zero(), 0.25).isIdentity(0.0));
  const Matrix6 F = jac_state_F(make_twist({-4, 0, 0}, Vector3::Zero()), 0.25);
  EXPECT_TRUE((F.topLeftCorner<3, 3>().isIdentity(0.0)));
  EXPECT_TRUE((F.bottomRightCorner<3, 3>().isIdentity(0.0)));
  EXPECT_LT((F.topRightCorner<3, 3>() - skew({1, 0, 0})).norm(), 1e-15);
  EXPECT_LT((jac_control_G(Pose(), Twist::Zero(), 0.25) + 0.25 * Matrix6::Identity()).norm(), 1e-15);
  Rng rng(5);
  const Pose T = gen::random_sensing_pose(rng);
  const Twist xi = gen::random_twist(rng, 2.0, 0.2);
  const Matrix6 g1 = jac_control_G(T, xi, 1e-8);
  EXPECT_LT((jac_control_G(T, xi, 2e-8) - 2.0 * g1).norm(), 1e-6 * g1.norm());
}

TEST(Jacobians, MeasurementMatchesFiniteDifferences) {
  Rng rng(6);
  Bench s(rng);
  const Twist xi_p = make_twist({-4, 0, 0}, Vector3::Zero());
  for (int trial = 0; trial < 50; ++trial) {
    const Pose T = gen::random_sensing_pose(rng, 80, 300);
    const Twist xi_s = gen::random_twist(rng, 4.0, 0.1);
    const auto mj = jac_measurement_H(s.model, T, xi_s, xi_p);
    Eigen::MatrixXd fd(mj.H.rows(), 6);
    for (int k = 0; k < 6; ++k) {
      const Twist d = Twist::Unit(k) * (k < 3 ? 1e-4 : 1e-7);
      fd.col(k) = (s.model.predict(right_plus(T, d), xi_s, xi_p) - s.model.predict(right_plus(T, -d), xi_s, xi_p)) /
                  (2 * d.norm());
    }
    for (int k = 0; k < 6; ++k) {
      EXPECT_LT(gen::rel_err(mj.H.col(k), fd.col(k)), 1e-3) << "col " << k << " trial " << trial;
    }
  }
}

TEST(Jacobians, MeasurementIndependentOfNoiseAndLinearInPilots) {
  Rng rng(7);
  Bench s(rng);
  const Pose T = gen::random_sensing_pose(rng);
  MeasurementModel zero = s.model;
  zero.pilots.rows.setZero();
  EXPECT_TRUE(jac_measurement_H(zero, T, Twist::Zero(), Twist::Zero()).H.isZero(0.0));
  MeasurementModel doubled = s.model;
  doubled.pilots.rows *= 2.0;
  EXPECT_LT((jac_measurement_H(doubled, T, Twist::Zero(), Twist::Zero()).H -
             2.0 * jac_measurement_H(s.model, T, Twist::Zero(), Twist::Zero()).H)
                .norm(),
            1e-12 * jac_measurement_H(s.model, T, Twist::Zero(), Twist::Zero()).H.norm());
}
