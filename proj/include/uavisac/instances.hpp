#pragma once

// Random single-epoch control problems drawn around the default geometry,
// plus brute-force references for the twist optimizer.

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "uavisac/control.hpp"
#include "uavisac/jacobians.hpp"
#include "uavisac/waveform.hpp"

namespace uavisac {

struct EpochInstance {
  MeasurementModel model;
  Pose T_sp;
  Twist xi_p;
  Matrix6 E_inv;
  Eigen::Matrix4d A_tilde;
  PsiPartition part;
  ConstraintSet cons;
  QcqpInstance qcqp;

  /// Psi at the instance pose with next twist xi.
  [[nodiscard]] Matrix46 psi(const Twist& xi) const { return model.psi(T_sp, xi, xi_p); }
};

template <class Rng>
EpochInstance random_epoch_instance(Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> normal;
  const UpaConfig upa{2, 2, 2, 2};
  const ReGrid grid = ReGrid::diagonal(32, 10, 32, 15e3, 0.07, 2.4e9);

  EpochInstance ins;
  SensingGeometry geo;
  geo.upa_offset = {0.2, 0.3, 0.1};
  geo.a_const = radar_constant(grid.fc, 0.5);
  geo.phase = kPi * u(rng);
  ins.model = MeasurementModel(upa, grid, build_pilot_matrix(upa, grid, 1.0, rng), geo);

  // Target below a downward-looking array, 120-300 m away.
  const Matrix3 R = exp_map(make_twist(Vector3::Zero(), Vector3(0.2 * u(rng), 0.2 * u(rng), kPi * u(rng)))).R();
  for (;;) {
    const Vector3 dir(u(rng), u(rng), 0.4 + 0.6 * std::abs(u(rng)));
    const Vector3 r = dir.normalized() * (210.0 + 90.0 * u(rng));
    if (std::hypot(r.x(), r.y()) > 10.0) {
      ins.T_sp = Pose(R, r);
      break;
    }
  }
  ins.xi_p = make_twist(Vector3(-4.0, 0, 0) + 0.5 * Vector3(u(rng), u(rng), 0), Vector3::Zero());

  ins.cons.upa_offset = geo.upa_offset;
  ins.cons.xi_prev = make_twist(Vector3(3.0 * u(rng), 3.0 * u(rng), 0), Vector3(0, 0, 0.1 * u(rng)));
  ins.cons.R1 = exp_map(make_twist(Vector3::Zero(), Vector3(0, 0, kPi * u(rng)))).R();
  ins.cons.R2 = ins.cons.R1 * exp_map(make_twist(Vector3::Zero(), Vector3(0, 0, 0.03 * u(rng)))).R();

  // Prior covariance: metres-scale position, centiradian attitude, random correlations.
  Matrix6 Lc = Matrix6::Zero();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j <= i; ++j) Lc(i, j) = (i == j ? 1.0 : 0.3) * normal(rng);
  Lc.diagonal() = Lc.diagonal().cwiseAbs().array() + 0.3;
  Twist scale;
  scale << Vector3::Constant(2.0 + std::abs(u(rng)) * 3.0), Vector3::Constant(0.01 + 0.05 * std::abs(u(rng)));
  ins.E_inv = scale.asDiagonal() * Lc * Lc.transpose() * scale.asDiagonal();

  const double rho0 = 212.13;
  const double b0 = std::abs(channel_gain(rho0, 0.0, geo.a_const));
  const double noise_var = 0.5 * b0 * b0 / 10.0;
  const PhysicalParams z = ins.model.params(ins.T_sp, ins.cons.xi_prev, ins.xi_p);
  const Eigen::MatrixXd J = ins.model.jac_y_wrt_zeta(z);
  ins.A_tilde = J.transpose() * J / noise_var;

  ins.part = partition_psi(ins.psi(ins.cons.xi_prev), ins.T_sp, local_velocity(ins.xi_p, Vector3::Zero()),
                           geo.upa_offset, grid.fc, ins.cons.xi_prev);
  ins.qcqp = assemble_qcqp(build_quadratic_form(ins.E_inv, ins.A_tilde, ins.part), ins.cons);
  return ins;
}

/// Box containing every twist allowed by the acceleration limits.
struct FreeBox {
  Eigen::Vector3d lo, hi;  // over (nu_x, nu_y, omega_z)
};

inline FreeBox free_box(const ConstraintSet& cons) {
  const Twist& p = cons.xi_prev;
  FreeBox b;
  b.lo << p(0) - cons.A_l, p(1) - cons.A_l, p(5) - cons.A_a;
  b.hi << p(0) + cons.A_l, p(1) + cons.A_l, p(5) + cons.A_a;
  return b;
}

inline Twist twist_from_free(const Eigen::Vector3d& v) {
  Twist xi = Twist::Zero();
  xi(0) = v(0);
  xi(1) = v(1);
  xi(5) = v(2);
  return xi;
}

struct GridResult {
  Twist best = Twist::Zero();
  double value = -std::numeric_limits<double>::infinity();
  int feasible_points = 0;
};

/// Exhaustive n^3 search over the free coordinates.
inline GridResult grid_search(const QcqpInstance& q, const ConstraintSet& cons, int n = 21) {
  const FreeBox box = free_box(cons);
  GridResult out;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d t(i, j, k);
        const Eigen::Vector3d v = box.lo + (box.hi - box.lo).cwiseProduct(t / (n - 1));
        const Twist xi = twist_from_free(v);
        if (!q.feasible(xi)) continue;
        ++out.feasible_points;
        const double f = q.objective(xi);
        if (f > out.value) {
          out.value = f;
          out.best = xi;
        }
      }
  return out;
}

/// Best objective among `count` uniform feasible twists (rejection sampling in the box).
template <class Rng>
double best_random_feasible(const QcqpInstance& q, const ConstraintSet& cons, int count, Rng& rng) {
  const FreeBox box = free_box(cons);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double best = -std::numeric_limits<double>::infinity();
  for (int found = 0, tries = 0; found < count && tries < 100 * count; ++tries) {
    const Eigen::Vector3d v = box.lo + (box.hi - box.lo).cwiseProduct(Eigen::Vector3d(u(rng), u(rng), u(rng)));
    const Twist xi = twist_from_free(v);
    if (!q.feasible(xi)) continue;
    ++found;
    best = std::max(best, q.objective(xi));
  }
  return best;
}

}  // namespace uavisac
