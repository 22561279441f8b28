#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "uavisac/control.hpp"
#include "uavisac/instances.hpp"

using namespace uavisac;
using uavisac::gen::Rng;

namespace {

double logdet(const Eigen::Matrix4d& A) {
  const Eigen::Vector4d d = A.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::Matrix4d As = d.asDiagonal() * A * d.asDiagonal();
  return std::log(As.determinant()) - 2.0 * d.array().log().sum();
}

Twist random_free_twist(Rng& rng, const ConstraintSet& cons) {
  const FreeBox box = free_box(cons);
  Eigen::Vector3d v;
  for (int k = 0; k < 3; ++k) v(k) = gen::uniform(rng, box.lo(k), box.hi(k));
  return twist_from_free(v);
}

}  // namespace

TEST(Control, PartitionReassemblesPsi) {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const EpochInstance ins = random_epoch_instance(rng);
    const Twist xi = gen::random_twist(rng, 5.0, 0.2);
    const PsiPartition part = partition_psi(ins.psi(xi), ins.T_sp, local_velocity(ins.xi_p, Vector3::Zero()),
                                            ins.cons.upa_offset, ins.model.geo.fc, xi);
    EXPECT_LT(gen::rel_err(part.psi1() + part.psi2(), ins.psi(xi)), 1e-12);
    // Psi_1 does not depend on the twist.
    EXPECT_LT(gen::rel_err(part.psi1(), ins.part.psi1()), 1e-12);
  }
}

TEST(Control, DeterminantIdentityHolds) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const EpochInstance ins = random_epoch_instance(rng);
    const QuadraticForm qf = build_quadratic_form(ins.E_inv, ins.A_tilde, ins.part);
    const Twist xi = gen::random_twist(rng, 5.0, 0.2);
    const Matrix46 Psi1 = ins.part.psi1();
    Matrix46 Psi2 = Matrix46::Zero();
    Psi2.block<1, 3>(3, 0) = (ins.part.M * ins.part.S * xi).transpose();
    const Eigen::Matrix4d D = Psi2 * ins.E_inv * (Psi1 + Psi2).transpose() + Psi1 * ins.E_inv * Psi2.transpose();
    EXPECT_LT(gen::rel_err(qf.D(xi), D), 1e-9);

    const double lhs = -logdet(ins.A_tilde.inverse() + Psi1 * ins.E_inv * Psi1.transpose() + D);
    const double rhs = -logdet(qf.base) - std::log1p(qf.c0 * qf.value(xi));
    EXPECT_NEAR(lhs, rhs, 1e-8 * std::max(1.0, std::abs(lhs)));
  }
}

// The objective orders twists the same way as the pose bound it stands for.
TEST(Control, ObjectiveTracksPoseBound) {
  Rng rng(43);
  for (int trial = 0; trial < 30; ++trial) {
    const EpochInstance ins = random_epoch_instance(rng);
    const QuadraticForm qf = build_quadratic_form(ins.E_inv, ins.A_tilde, ins.part);
    const Matrix6 E = ins.E_inv.inverse();
    for (int k = 0; k < 5; ++k) {
      const Twist xi = random_free_twist(rng, ins.cons);
      const Matrix46 Psi = ins.psi(xi);
      const Matrix6 I = Psi.transpose() * ins.A_tilde * Psi + E;
      const double bound = logdet_cpcrb(I);
      const double predicted = -std::log(E.determinant()) - logdet(ins.A_tilde) - logdet(qf.base) -
                               std::log1p(qf.c0 * qf.value(xi));
      EXPECT_NEAR(bound, predicted, 1e-6 * std::max(1.0, std::abs(bound)));
    }
  }
}

TEST(Control, HomogenizedMatricesReproduceConstraints) {
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const EpochInstance ins = random_epoch_instance(rng);
    const HomogenizedSdp h = homogenize(ins.qcqp);
    for (int k = 0; k < 20; ++k) {
      const Twist xi = gen::random_twist(rng, 6.0, 0.3);
      Vector7 x;
      x << xi, 1.0;
      EXPECT_NEAR(x.dot(h.Qbar[0] * x), ins.qcqp.objective(xi), 1e-9 * (1 + std::abs(ins.qcqp.objective(xi))));
      const auto g = ins.qcqp.inequalities(xi);
      for (int i = 0; i < 5; ++i) EXPECT_NEAR(x.dot(h.Qbar[1 + i] * x), g(i), 1e-9 * (1 + std::abs(g(i))));
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(x.dot(h.Qbar[6 + i] * x), xi(kEqualityIndices[i]) * xi(kEqualityIndices[i]), 1e-12);
    }
  }
}

TEST(Control, PreviousTwistIsFeasible) {
  Rng rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    EpochInstance ins = random_epoch_instance(rng);
    ins.cons.R2 = ins.cons.R1;
    const QcqpInstance q = assemble_qcqp(build_quadratic_form(ins.E_inv, ins.A_tilde, ins.part), ins.cons);
    EXPECT_TRUE(q.feasible(ins.cons.xi_prev));
  }
}

TEST(Control, RelaxationBoundsAndExtractionMatchGridSearch) {
  Rng rng(46);
  for (int trial = 0; trial < 20; ++trial) {
    const EpochInstance ins = random_epoch_instance(rng);
    const RelaxationResult rel = solve_relaxation(homogenize(ins.qcqp));
    EXPECT_LT(rel.gap, 1e-7);
    const GridResult grid = grid_search(ins.qcqp, ins.cons);
    ASSERT_GT(grid.feasible_points, 0);
    EXPECT_GE(rel.upper_bound, grid.value - 1e-9 * std::abs(grid.value));
    EXPECT_GE(rel.upper_bound, best_random_feasible(ins.qcqp, ins.cons, 10000, rng) - 1e-9 * std::abs(grid.value));

    const Twist xi = randomize_extract(rel.Z, ins.qcqp, 200, rng);
    EXPECT_LE(ins.qcqp.max_violation(xi), 1e-9);
    EXPECT_GE(ins.qcqp.objective(xi), grid.value - 0.05 * std::abs(grid.value)) << "trial " << trial;
  }
}

TEST(Control, OptimizerReturnsFeasibleTwist) {
  Rng rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    const EpochInstance ins = random_epoch_instance(rng);
    const ControlDecision d = optimize_control(ins.E_inv, ins.A_tilde, ins.part, ins.cons, rng);
    EXPECT_FALSE(d.fallback);
    EXPECT_LE(ins.qcqp.max_violation(d.xi), 1e-9);
    EXPECT_LE(d.objective, d.upper_bound + 1e-6 * std::abs(d.upper_bound));
  }
}

TEST(Control, RampStaysFeasibleAndApproachesTarget) {
  Rng rng(48);
  ConstraintSet cons;
  cons.upa_offset = {0.2, 0.3, 0.1};
  Twist xi = Twist::Zero();
  const Twist target = make_twist({4, 0, 0}, Vector3::Zero());
  for (int n = 0; n < 40; ++n) {
    cons.xi_prev = xi;
    xi = ramp_toward(cons, target);
    QuadraticForm zero;
    zero.P_bar.setZero();
    zero.c.setZero();
    EXPECT_LE(assemble_qcqp(zero, cons).max_violation(xi), 1e-9);
  }
  EXPECT_LT((xi - target).norm(), 1e-6);
}

TEST(Control, FallbackHoldsPreviousTwistWhenObjectiveIsBroken) {
  Rng rng(49);
  const EpochInstance ins = random_epoch_instance(rng);
  Eigen::Matrix4d broken = ins.A_tilde;
  broken.setZero();
  const ControlDecision d = optimize_control(ins.E_inv, broken, ins.part, ins.cons, rng);
  EXPECT_TRUE(d.fallback);
  EXPECT_LE(ins.qcqp.max_violation(d.xi), 1e-9);
}

TEST(Control, NonPsdConstraintIsRejected) {
  Rng rng(50);
  EpochInstance ins = random_epoch_instance(rng);
  ins.qcqp.Q1(0, 0) = -1.0;
  try {
    (void)homogenize(ins.qcqp);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchurViolation);
  }
}
