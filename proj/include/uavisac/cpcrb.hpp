#pragma once

// Recursive conditional PCRB: one Fisher-information step per epoch for the
// relative pose, and the induced bound on zeta by reparameterization.

#include <Eigen/Dense>

#include "uavisac/errors.hpp"
#include "uavisac/jacobians.hpp"
#include "uavisac/lie.hpp"

namespace uavisac {

inline constexpr double kMaxInverseCondition = 1e14;

/// Inverse of a symmetric positive definite matrix; throws IllConditioned when
/// it is not safely invertible.
template <int N>
Eigen::Matrix<double, N, N> inverse_spd(const Eigen::Matrix<double, N, N>& A, const char* what) {
  const Eigen::Matrix<double, N, N> S = 0.5 * (A + A.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> eig(S);
  const auto& ev = eig.eigenvalues();
  if (!S.allFinite() || !(ev(0) > 0.0) || ev(N - 1) / ev(0) > kMaxInverseCondition) {
    throw Error(ErrorKind::IllConditioned, what);
  }
  Eigen::Matrix<double, N, N> inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (inv + inv.transpose());
}

/// C_w' = dt^2 Ad^-1 Xi_w Ad^-T + C_w, with the inverse adjoint passed in.
inline Covariance6 process_noise_prime(const Covariance6& Xi_w, const Covariance6& C_w, const Matrix6& Ad_inv,
                                       double dt) {
  const Covariance6 out = dt * dt * Ad_inv * Xi_w * Ad_inv.transpose() + C_w;
  return 0.5 * (out + out.transpose());
}

struct FimStep {
  Matrix6 I;  // posterior information after the epoch's measurement
  Matrix6 E;  // prior information carried over from the previous epoch
};

/// Prior covariance C_w' + F I_prev^-1 F^T, the inverse of the prior information E.
inline Covariance6 prior_covariance(const Matrix6& I_prev, const Matrix6& F, const Covariance6& C_w_prime) {
  const Covariance6 out = C_w_prime + F * inverse_spd<6>(I_prev, "previous information matrix") * F.transpose();
  return 0.5 * (out + out.transpose());
}

/// E = (C_w' + F I_prev^-1 F^T)^-1 and I = H^T H / noise_var + E.
inline FimStep fim_step(const Matrix6& I_prev, const Matrix6& F, const Eigen::MatrixXd& H,
                        const Covariance6& C_w_prime, double noise_var) {
  FimStep out;
  out.E = inverse_spd<6>(prior_covariance(I_prev, F, C_w_prime), "prior covariance");
  const Matrix6 meas = H.rows() == 0 ? Matrix6::Zero() : Matrix6(H.transpose() * H / noise_var);
  out.I = meas + out.E;
  out.I = 0.5 * (out.I + out.I.transpose());
  return out;
}

/// Same recursion with a general measurement covariance.
inline FimStep fim_step(const Matrix6& I_prev, const Matrix6& F, const Eigen::MatrixXd& H,
                        const Covariance6& C_w_prime, const Eigen::MatrixXd& C_z) {
  FimStep out;
  out.E = inverse_spd<6>(prior_covariance(I_prev, F, C_w_prime), "prior covariance");
  const Matrix6 meas = H.transpose() * C_z.llt().solve(H);
  out.I = meas + out.E;
  out.I = 0.5 * (out.I + out.I.transpose());
  return out;
}

/// Information recursion in block form, I = D22 - D21 (I_prev + D11)^-1 D12,
/// with D11 = F^T Q^-1 F, D12 = -F^T Q^-1, D22 = Q^-1 + H^T H / noise_var.
/// Needs an invertible Q; used to cross-check fim_step.
inline Matrix6 fim_step_blocks(const Matrix6& I_prev, const Matrix6& F, const Eigen::MatrixXd& H,
                               const Covariance6& C_w_prime, double noise_var) {
  const Matrix6 Qinv = inverse_spd<6>(C_w_prime, "process noise");
  const Matrix6 D11 = F.transpose() * Qinv * F;
  const Matrix6 D12 = -F.transpose() * Qinv;
  const Matrix6 meas = H.rows() == 0 ? Matrix6::Zero() : Matrix6(H.transpose() * H / noise_var);
  const Matrix6 D22 = Qinv + meas;
  const Matrix6 out = D22 - D12.transpose() * (I_prev + D11).ldlt().solve(D12);
  return 0.5 * (out + out.transpose());
}

inline Covariance6 cpcrb_pose(const Matrix6& I) { return inverse_spd<6>(I, "pose information matrix"); }

inline Eigen::Matrix4d cpcrb_params(const Matrix6& I, const Matrix46& Psi) {
  const Eigen::Matrix4d B = Psi * cpcrb_pose(I) * Psi.transpose();
  return 0.5 * (B + B.transpose());
}

/// log det of the pose bound, computed from the information matrix.
inline double logdet_cpcrb(const Matrix6& I) {
  const Eigen::LLT<Matrix6> llt(0.5 * (I + I.transpose()));
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::IllConditioned, "information matrix not positive definite");
  return -2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace uavisac
