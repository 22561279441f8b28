#pragma once

// Control-twist selection that minimizes log det of the pose CPCRB for the
// current epoch. The Doppler row of Psi is the only place the next twist
// enters, which reduces the problem to a nonconvex QCQP in the twist; that
// QCQP is homogenized, relaxed to a 7x7 SDP and rounded back to a feasible
// twist by Gaussian randomization.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "uavisac/cpcrb.hpp"
#include "uavisac/errors.hpp"
#include "uavisac/jacobians.hpp"
#include "uavisac/kinematics.hpp"
#include "uavisac/lie.hpp"
#include "uavisac/sdp.hpp"

namespace uavisac {

using Matrix36 = Eigen::Matrix<double, 3, 6>;
using Matrix7 = Eigen::Matrix<double, 7, 7>;
using Vector7 = Eigen::Matrix<double, 7, 1>;

/// Maps a body twist [nu; omega] to the velocity of the body-fixed point s.
inline Matrix36 point_velocity_selector(const Vector3& s) {
  Matrix36 S;
  S << Matrix3::Identity(), -skew(s);
  return S;
}

/// Psi = Psi_1 + Psi_2, where Psi_2 holds the only twist-dependent entries
/// (the UAV-velocity part of the Doppler row).
struct PsiPartition {
  Matrix3 B;    // rows tau, phi, theta against the translational perturbation
  Vector3 c11;  // GU-velocity part of the Doppler row (translation)
  Vector3 c12;  // UAV-velocity part of the Doppler row, = M S xi
  Vector3 c2;   // Doppler row against the rotational perturbation
  Matrix3 M;    // -(2 f_c / (c |r|)) R^T P_perp
  Matrix36 S;   // point_velocity_selector(s)

  [[nodiscard]] Matrix46 psi1() const {
    Matrix46 P = Matrix46::Zero();
    P.topLeftCorner<3, 3>() = B;
    P.block<1, 3>(3, 0) = c11.transpose();
    P.block<1, 3>(3, 3) = c2.transpose();
    return P;
  }

  [[nodiscard]] Matrix46 psi2() const {
    Matrix46 P = Matrix46::Zero();
    P.block<1, 3>(3, 0) = c12.transpose();
    return P;
  }
};

/// Closed-form partition at (T_sp, v_p) for twist xi_s; B is read from Psi.
inline PsiPartition partition_psi(const Matrix46& Psi, const Pose& T_sp, const Vector3& v_p_local,
                                  const Vector3& upa_offset, double fc, const Twist& xi_s) {
  const Matrix3& R = T_sp.R();
  const Vector3& r = T_sp.r();
  const double rho = checked_range(r);
  const double k = doppler_scale(fc) / rho;
  const Matrix3 P_perp = Matrix3::Identity() - r * r.transpose() / (rho * rho);
  PsiPartition part;
  part.B = Psi.topLeftCorner<3, 3>();
  part.M = -k * R.transpose() * P_perp;
  part.S = point_velocity_selector(upa_offset);
  part.c11 = k * R.transpose() * P_perp * R * v_p_local;
  part.c12 = part.M * part.S * xi_s;
  part.c2 = k * skew(v_p_local) * R.transpose() * r;
  return part;
}

/// Objective pieces of -log det(A~^-1 + D_0 + D(xi)) =
///   -log det(A~^-1 + D_0) - log(1 + c0 (xi^T P_bar xi + 2 c^T xi)).
struct QuadraticForm {
  Matrix6 P_bar;
  Twist c;
  double c0 = 0.0;
  Matrix6 P_tilde;
  Eigen::Matrix<double, 4, 6> K;
  Eigen::Matrix4d base;  // A~^-1 + D_0
  Matrix3 A_bar;
  Vector3 a;
  double a0 = 0.0;

  [[nodiscard]] double value(const Twist& xi) const { return xi.dot(P_bar * xi) + 2.0 * c.dot(xi); }

  /// D(xi) assembled from K and P_tilde.
  [[nodiscard]] Eigen::Matrix4d D(const Twist& xi) const {
    const Eigen::Vector4d e4 = Eigen::Vector4d::Unit(3);
    const Eigen::Vector4d Kx = K * xi;
    return e4 * Kx.transpose() + Kx * e4.transpose() + xi.dot(P_tilde * xi) * e4 * e4.transpose();
  }
};

/// Inverse of an SPD matrix after symmetric diagonal equilibration; the
/// radar information matrix mixes seconds and hertz, so raw entries span
/// many decades.
inline Eigen::Matrix4d equilibrated_inverse(const Eigen::Matrix4d& A) {
  const Eigen::Vector4d d = A.diagonal().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
  const Eigen::Matrix4d As = d.asDiagonal() * A * d.asDiagonal();
  return d.asDiagonal() * inverse_spd<4>(As, "radar information matrix") * d.asDiagonal();
}

/// E_inv is the prior covariance E^-1; A_tilde = J^T C_z^-1 J is the radar
/// information in zeta.
inline QuadraticForm build_quadratic_form(const Matrix6& E_inv, const Eigen::Matrix4d& A_tilde,
                                          const PsiPartition& part) {
  const Matrix3 E11 = E_inv.topLeftCorner<3, 3>();
  const Matrix3 E12 = E_inv.topRightCorner<3, 3>();
  const Matrix46 Psi1 = part.psi1();

  QuadraticForm q;
  q.base = equilibrated_inverse(A_tilde) + Psi1 * E_inv * Psi1.transpose();
  q.base = 0.5 * (q.base + q.base.transpose());
  q.A_bar = q.base.topLeftCorner<3, 3>();
  q.a = q.base.block<3, 1>(0, 3);
  q.a0 = q.base(3, 3);

  const Eigen::Vector3d dA = q.A_bar.diagonal().cwiseSqrt().cwiseInverse();
  const Matrix3 As = dA.asDiagonal() * q.A_bar * dA.asDiagonal();
  const Eigen::LDLT<Matrix3> ldlt(As);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorKind::IllConditioned, "leading block of the parameter covariance not positive definite");
  }
  auto A_bar_solve = [&](const Eigen::Matrix<double, 3, Eigen::Dynamic>& rhs) {
    return Eigen::Matrix<double, 3, Eigen::Dynamic>(dA.asDiagonal() * ldlt.solve(dA.asDiagonal() * rhs));
  };

  const double schur = q.a0 - q.a.dot(A_bar_solve(q.a).col(0));
  if (!(schur > 0.0)) throw Error(ErrorKind::IllConditioned, "parameter covariance not positive definite");
  q.c0 = 1.0 / schur;  // det(A_bar) / det(A~^-1 + D_0)

  const Matrix36 MS = part.M * part.S;
  Eigen::Matrix<double, 3, 4> E_tilde;
  E_tilde << E11 * part.B.transpose(), E11 * part.c11 + E12 * part.c2;
  q.K = E_tilde.transpose() * MS;
  q.P_tilde = MS.transpose() * E11 * MS;
  q.P_tilde = 0.5 * (q.P_tilde + q.P_tilde.transpose());

  const Matrix3 BE = part.B * E11;
  const Matrix3 inner = E11 - BE.transpose() * A_bar_solve(BE);
  q.P_bar = MS.transpose() * inner * MS;
  q.P_bar = 0.5 * (q.P_bar + q.P_bar.transpose());
  q.c = MS.transpose() * (E11 * part.c11 + E12 * part.c2 - BE.transpose() * A_bar_solve(q.a));
  return q;
}

/// Velocity, acceleration and smoothness limits for the next twist.
struct ConstraintSet {
  double V_l = 6.0;   // |nu| [m/s]
  double A_l = 2.0;   // |nu - nu_prev| [m/s per epoch]
  double V_a = 0.15;  // |omega_z| [rad/s]
  double A_a = 0.05;  // |omega_z - omega_z,prev| [rad/s per epoch]
  double V = 0.5;     // change of the array's world velocity [m/s per epoch]
  Twist xi_prev = Twist::Zero();
  Vector3 upa_offset = Vector3::Zero();
  Matrix3 R1 = Matrix3::Identity();  // R_ws at the current epoch
  Matrix3 R2 = Matrix3::Identity();  // R_ws at the previous epoch

  void validate() const {
    if (!(V_l > 0 && A_l > 0 && V_a > 0 && A_a > 0 && V > 0)) {
      throw Error(ErrorKind::Config, "all motion bounds must be positive");
    }
  }
};

/// Components forced to zero: nu_z, omega_x, omega_y.
inline constexpr std::array<int, 3> kEqualityIndices{2, 3, 4};

struct QcqpInstance {
  Matrix6 Q0;
  Twist c;
  Matrix6 Q1, Q2, Q3;
  Twist b1, b2;
  Vector3 b3;
  Matrix36 S;
  double V1 = 0, V2 = 0, A1 = 0, A2 = 0, Vsq = 0;
  Matrix3 R1 = Matrix3::Identity(), R2 = Matrix3::Identity();

  [[nodiscard]] double objective(const Twist& xi) const { return xi.dot(Q0 * xi) + 2.0 * c.dot(xi); }

  /// Constraint values normalized so that feasibility means <= 1 (inequalities)
  /// and == 0 (equalities): [speed, yaw rate, accel, yaw accel, smoothness].
  [[nodiscard]] Eigen::Matrix<double, 5, 1> inequalities(const Twist& xi) const {
    Eigen::Matrix<double, 5, 1> g;
    g(0) = xi.dot(Q1 * xi) / V1;
    g(1) = xi.dot(Q2 * xi) / V2;
    g(2) = (xi.dot(Q1 * xi) - 2.0 * b1.dot(xi) + b1.squaredNorm()) / A1;
    g(3) = (xi.dot(Q2 * xi) - 2.0 * b2.dot(xi) + b2.squaredNorm()) / A2;
    g(4) = (xi.dot(Q3 * xi) - 2.0 * b3.dot(R2.transpose() * R1 * S * xi) + b3.squaredNorm()) / Vsq;
    return g;
  }

  [[nodiscard]] double max_violation(const Twist& xi) const {
    double v = (inequalities(xi).array() - 1.0).maxCoeff();
    for (int k : kEqualityIndices) v = std::max(v, std::abs(xi(k)));
    return v;
  }

  [[nodiscard]] bool feasible(const Twist& xi, double tol = 1e-9) const { return max_violation(xi) <= tol; }
};

inline QcqpInstance assemble_qcqp(const QuadraticForm& qf, const ConstraintSet& cons) {
  cons.validate();
  QcqpInstance q;
  q.Q0 = qf.P_bar;
  q.c = qf.c;
  q.S = point_velocity_selector(cons.upa_offset);
  q.Q1 = Matrix6::Zero();
  q.Q1(0, 0) = q.Q1(1, 1) = 1.0;
  q.Q2 = Matrix6::Zero();
  q.Q2(5, 5) = 1.0;
  q.Q3 = q.S.transpose() * q.S;
  q.b1 = q.Q1 * cons.xi_prev;
  q.b2 = q.Q2 * cons.xi_prev;
  q.b3 = q.S * cons.xi_prev;
  q.V1 = cons.V_l * cons.V_l;
  q.V2 = cons.V_a * cons.V_a;
  q.A1 = cons.A_l * cons.A_l;
  q.A2 = cons.A_a * cons.A_a;
  q.Vsq = cons.V * cons.V;
  q.R1 = cons.R1;
  q.R2 = cons.R2;
  return q;
}

/// Lifted matrices over [xi; t]: Qbar[0] objective, [1..5] inequalities
/// (<= 1), [6..8] equalities (= 0).
struct HomogenizedSdp {
  std::array<Matrix7, 9> Qbar;
};

inline HomogenizedSdp homogenize(const QcqpInstance& q) {
  HomogenizedSdp h;
  for (auto& Q : h.Qbar) Q.setZero();
  h.Qbar[0].topLeftCorner<6, 6>() = q.Q0;
  h.Qbar[0].block<6, 1>(0, 6) = q.c;
  h.Qbar[0].block<1, 6>(6, 0) = q.c.transpose();

  h.Qbar[1].topLeftCorner<6, 6>() = q.Q1 / q.V1;
  h.Qbar[2].topLeftCorner<6, 6>() = q.Q2 / q.V2;

  auto shifted = [](const Matrix6& Q, const Twist& b, double bound) {
    Matrix7 out;
    out << Q, -b, -b.transpose(), b.squaredNorm();
    return Matrix7(out / bound);
  };
  h.Qbar[3] = shifted(q.Q1, q.b1, q.A1);
  h.Qbar[4] = shifted(q.Q2, q.b2, q.A2);

  const Twist cross = q.S.transpose() * q.R1.transpose() * q.R2 * q.b3;
  h.Qbar[5] << q.Q3, -cross, -cross.transpose(), q.b3.squaredNorm();
  h.Qbar[5] /= q.Vsq;

  for (int i = 0; i < 3; ++i) h.Qbar[6 + i](kEqualityIndices[i], kEqualityIndices[i]) = 1.0;

  for (int i : {1, 2, 3, 4, 5, 6, 7, 8}) {
    const double lmin = Eigen::SelfAdjointEigenSolver<Matrix7>(h.Qbar[i], Eigen::EigenvaluesOnly).eigenvalues()(0);
    const double scale = std::max(1.0, h.Qbar[i].norm());
    if (lmin < -1e-6 * scale) throw Error(ErrorKind::SchurViolation, "lifted constraint matrix is not PSD");
  }
  return h;
}

struct RelaxationResult {
  Matrix7 Z;
  double upper_bound = 0.0;  // certified bound on the QCQP objective (up to the gap)
  double value = 0.0;        // tr(Qbar_0 Z)
  double gap = 0.0;
  int iterations = 0;
};

namespace detail {

// Coordinates of [xi; t] that survive the equality constraints.
inline constexpr std::array<int, 4> kFreeCoords{0, 1, 5, 6};

inline Eigen::Matrix4d restrict_free(const Matrix7& Q) {
  Eigen::Matrix4d R;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) R(i, j) = Q(kFreeCoords[i], kFreeCoords[j]);
  return R;
}

}  // namespace detail

/// max tr(Qbar_0 Z) s.t. tr(Qbar_i Z) <= 1, tr(Qbar_{6,7,8} Z) = 0, Z_77 = 1, Z >= 0.
/// The equality rows force the matching rows and columns of Z to zero, so the
/// solver works on the 4x4 block of free coordinates plus five slacks.
inline RelaxationResult solve_relaxation(const HomogenizedSdp& h, const SdpOptions& opt = {}) {
  constexpr int nz = 4;
  constexpr int n = nz + 5;
  const Eigen::Matrix4d Q0 = detail::restrict_free(h.Qbar[0]);
  const double scale = Q0.norm() > 0.0 ? Q0.norm() : 1.0;

  SdpProblem p;
  p.C = Eigen::MatrixXd::Zero(n, n);
  p.C.topLeftCorner(nz, nz) = -Q0 / scale;
  for (int i = 0; i < 5; ++i) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    A.topLeftCorner(nz, nz) = detail::restrict_free(h.Qbar[1 + i]);
    A(nz + i, nz + i) = 1.0;
    p.A.push_back(A);
  }
  Eigen::MatrixXd Ah = Eigen::MatrixXd::Zero(n, n);
  Ah(nz - 1, nz - 1) = 1.0;
  p.A.push_back(Ah);
  p.b = Eigen::VectorXd::Ones(6);

  const SdpSolution sol = solve_sdp(p, opt);
  RelaxationResult out;
  out.Z.setZero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out.Z(detail::kFreeCoords[i], detail::kFreeCoords[j]) = sol.X(i, j);
  out.value = (h.Qbar[0].array() * out.Z.array()).sum();
  out.upper_bound = -sol.dual * scale;
  out.gap = sol.gap;
  out.iterations = sol.iterations;
  return out;
}

namespace detail {

/// Largest lambda in [0, 1] with anchor + lambda (target - anchor) feasible,
/// bisected independently per constraint family and combined by the minimum.
inline double feasible_fraction(const QcqpInstance& q, const Twist& anchor, const Twist& target, int steps = 20) {
  double lambda = 1.0;
  const Twist d = target - anchor;
  for (int k = 0; k < 5; ++k) {
    auto ok = [&](double t) { return q.inequalities(anchor + t * d)(k) <= 1.0; };
    if (ok(1.0)) continue;
    double lo = 0.0, hi = 1.0;
    for (int s = 0; s < steps; ++s) {
      const double mid = 0.5 * (lo + hi);
      (ok(mid) ? lo : hi) = mid;
    }
    lambda = std::min(lambda, lo);
  }
  return lambda;
}

inline Twist zero_equalities(Twist xi) {
  for (int k : kEqualityIndices) xi(k) = 0.0;
  return xi;
}

}  // namespace detail

/// Gaussian randomization around the relaxed solution. Each sample of N(0, Z)
/// is normalized by its homogeneous coordinate and pulled back along the
/// segment from the barycentre Z[0:6, 6] (feasible by convexity) until every
/// constraint holds; the best objective wins.
template <class Rng>
Twist randomize_extract(const Matrix7& Z, const QcqpInstance& q, int n_samples, Rng& rng) {
  const Twist anchor = detail::zero_equalities(Z.block<6, 1>(0, 6) / Z(6, 6));
  if (!q.feasible(anchor)) throw Error(ErrorKind::NoFeasibleSample, "relaxation barycentre is infeasible");

  const Eigen::SelfAdjointEigenSolver<Matrix7> eig(0.5 * (Z + Z.transpose()));
  const Matrix7 L = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  Twist best = anchor;
  double best_value = q.objective(anchor);
  std::normal_distribution<double> normal;
  for (int i = 0; i < n_samples; ++i) {
    Vector7 g;
    for (int k = 0; k < 7; ++k) g(k) = normal(rng);
    const Vector7 x = L * g;
    if (std::abs(x(6)) < 1e-12) continue;
    const Twist cand = detail::zero_equalities(x.head<6>() / x(6));
    const Twist xi = anchor + detail::feasible_fraction(q, anchor, cand) * (cand - anchor);
    if (!q.feasible(xi)) continue;
    const double v = q.objective(xi);
    if (v > best_value) {
      best_value = v;
      best = xi;
    }
  }
  return best;
}

/// A feasible twist near the previous one: the previous twist restricted to
/// the allowed components, pulled toward zero as needed. Returns nullopt when
/// neither it nor the zero twist is feasible.
inline std::optional<Twist> hold_previous(const QcqpInstance& q, const Twist& xi_prev) {
  const Twist held = detail::zero_equalities(xi_prev);
  if (q.feasible(held)) return held;
  // Rotate the linear part so the array keeps its world velocity (S xi = nu - s x omega).
  Twist comp = held;
  comp.head<3>() = q.R1.transpose() * q.R2 * q.b3 - (q.S * held - held.head<3>());
  comp = detail::zero_equalities(comp);
  if (q.feasible(comp)) return comp;
  for (const Twist& start : {comp, Twist(Twist::Zero())}) {
    if (q.feasible(start)) {
      const double t = detail::feasible_fraction(q, start, held);
      return Twist(start + t * (held - start));
    }
  }
  return std::nullopt;
}

/// Moves from a feasible twist near the previous one as far toward `target`
/// as the limits allow in one epoch.
inline Twist ramp_toward(const ConstraintSet& cons, const Twist& target) {
  QuadraticForm zero;
  zero.P_bar.setZero();
  zero.c.setZero();
  const QcqpInstance q = assemble_qcqp(zero, cons);
  const auto start = hold_previous(q, cons.xi_prev);
  if (!start) throw Error(ErrorKind::NoFeasibleSample, "no twist satisfies the motion limits");
  const Twist goal = detail::zero_equalities(target);
  return *start + detail::feasible_fraction(q, *start, goal) * (goal - *start);
}

struct ControlDecision {
  Twist xi = Twist::Zero();
  bool fallback = false;
  double objective = 0.0;
  double upper_bound = std::numeric_limits<double>::quiet_NaN();
};

struct OptimizerOptions {
  int n_samples = 200;
  SdpOptions sdp;
};

/// Full chain for one epoch: quadratic form, QCQP, relaxation, randomization.
/// Any failure falls back to holding the previous twist inside the limits.
template <class Rng>
ControlDecision optimize_control(const Matrix6& E_inv, const Eigen::Matrix4d& A_tilde, const PsiPartition& part,
                                 const ConstraintSet& cons, Rng& rng, const OptimizerOptions& opt = {}) {
  ControlDecision d;
  QcqpInstance q;
  try {
    q = assemble_qcqp(build_quadratic_form(E_inv, A_tilde, part), cons);
    const HomogenizedSdp h = homogenize(q);
    const RelaxationResult rel = solve_relaxation(h, opt.sdp);
    d.xi = randomize_extract(rel.Z, q, opt.n_samples, rng);
    d.upper_bound = rel.upper_bound;
    d.objective = q.objective(d.xi);
    return d;
  } catch (const Error&) {
    d.fallback = true;
  }

  // Fallback: the same QCQP geometry without an objective.
  QuadraticForm zero;
  zero.P_bar.setZero();
  zero.c.setZero();
  q = assemble_qcqp(zero, cons);
  if (auto held = hold_previous(q, cons.xi_prev)) {
    d.xi = *held;
    return d;
  }
  try {
    const RelaxationResult rel = solve_relaxation(homogenize(q), opt.sdp);
    d.xi = detail::zero_equalities(rel.Z.block<6, 1>(0, 6) / rel.Z(6, 6));
    if (q.feasible(d.xi, 1e-7)) return d;
  } catch (const Error&) {
  }
  throw Error(ErrorKind::NoFeasibleSample, "no twist satisfies the motion limits");
}

}  // namespace uavisac
