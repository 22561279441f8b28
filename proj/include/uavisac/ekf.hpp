#pragma once

// Extended Kalman filter on SE(3) for the relative pose T_sp, with the
// covariance expressed in the right tangent space of the estimate.

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "uavisac/errors.hpp"
#include "uavisac/jacobians.hpp"
#include "uavisac/kinematics.hpp"
#include "uavisac/lie.hpp"

namespace uavisac {

struct FilterState {
  Pose T_hat;
  Covariance6 P = Covariance6::Identity();
};

struct ParamPosterior {
  PhysicalParams zeta_hat;
  Eigen::Matrix4d V = Eigen::Matrix4d::Zero();
};

inline constexpr double kMaxInnovationCondition = 1e12;

/// Symmetrize and clip negative eigenvalues to zero.
template <int N>
Eigen::Matrix<double, N, N> project_psd(const Eigen::Matrix<double, N, N>& A) {
  const Eigen::Matrix<double, N, N> S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> eig(S);
  if (eig.eigenvalues().minCoeff() >= 0.0) return S;
  const auto lambda = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

struct PredictInputs {
  Twist xi_s;        // commanded UAV twist over the interval
  Twist xi_p;        // nominal GU twist
  Covariance6 Xi_w;  // UAV twist noise
  Covariance6 C_w;   // additive pose noise
  double dt = 0.25;
};

inline FilterState predict(const FilterState& s, const PredictInputs& in) {
  FilterState out;
  out.T_hat = evolve_relative(s.T_hat, in.xi_s, in.xi_p, Twist::Zero(), in.dt);
  const Matrix6 F = jac_state_F(in.xi_p, in.dt);
  const Matrix6 G = jac_control_G(out.T_hat, in.xi_s, in.dt);
  out.P = project_psd<6>(F * s.P * F.transpose() + G * in.Xi_w * G.transpose() + in.C_w);
  return out;
}

/// zeta at the prediction and its linearized covariance Psi P Psi^T.
inline ParamPosterior predict_params(const FilterState& predicted, const PhysicalParams& zeta_hat,
                                     const Matrix46& Psi) {
  ParamPosterior out;
  out.zeta_hat = zeta_hat;
  const Eigen::Matrix4d V = Psi * predicted.P * Psi.transpose();
  out.V = project_psd<4>(V);
  return out;
}

/// Correction with measurement noise C_z = noise_var * I. Uses the push-through
/// identity so only 6x6 systems are factorized.
inline FilterState update(const FilterState& s, const Eigen::VectorXd& y, const Eigen::MatrixXd& H, double noise_var,
                          const Eigen::VectorXd& g_pred) {
  if (y.size() != H.rows() || g_pred.size() != H.rows() || H.cols() != 6) {
    throw Error(ErrorKind::ShapeMismatch, "measurement, prediction and H sizes disagree");
  }
  if (!(noise_var > 0.0)) throw Error(ErrorKind::SingularInnovation, "measurement noise variance must be positive");

  const Matrix6 W = H.transpose() * H;
  const Twist v = H.transpose() * (y - g_pred);

  // cond(H P H^T + c I) = (lambda_max(P^1/2 W P^1/2) + c) / c when H has more rows than columns.
  Eigen::SelfAdjointEigenSolver<Matrix6> pe(s.P);
  const Matrix6 Ph = pe.eigenvectors() * pe.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                     pe.eigenvectors().transpose();
  const Twist lambda = Eigen::SelfAdjointEigenSolver<Matrix6>(Ph * W * Ph, Eigen::EigenvaluesOnly).eigenvalues();
  const double lmax = std::max(0.0, lambda(5));
  const double lmin = H.rows() > 6 ? 0.0 : std::max(0.0, lambda(6 - H.rows()));
  if ((lmax + noise_var) / (lmin + noise_var) > kMaxInnovationCondition) {
    throw Error(ErrorKind::SingularInnovation, "innovation covariance condition number above 1e12");
  }

  const Eigen::PartialPivLU<Matrix6> lu(noise_var * Matrix6::Identity() + W * s.P);
  FilterState out;
  out.T_hat = right_plus(s.T_hat, s.P * lu.solve(v));
  out.P = project_psd<6>(s.P - s.P * lu.solve(Matrix6(W * s.P)));
  return out;
}

/// Correction with a general measurement covariance, S = H P H^T + C_z factorized directly.
inline FilterState update(const FilterState& s, const Eigen::VectorXd& y, const Eigen::MatrixXd& H,
                          const Eigen::MatrixXd& C_z, const Eigen::VectorXd& g_pred) {
  if (y.size() != H.rows() || g_pred.size() != H.rows() || C_z.rows() != H.rows() || C_z.cols() != H.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "measurement, prediction, H and C_z sizes disagree");
  }
  Eigen::MatrixXd S = H * s.P * H.transpose() + C_z;
  S = 0.5 * (S + S.transpose());
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(ev(0) > 0.0) || ev(ev.size() - 1) / ev(0) > kMaxInnovationCondition) {
    throw Error(ErrorKind::SingularInnovation, "innovation covariance condition number above 1e12");
  }
  const double jitter = 1e-12 * S.trace() / static_cast<double>(S.rows());
  const Eigen::LLT<Eigen::MatrixXd> llt(S + jitter * Eigen::MatrixXd::Identity(S.rows(), S.cols()));
  const Eigen::MatrixXd K = llt.solve(H * s.P).transpose();  // P H^T S^-1
  FilterState out;
  out.T_hat = right_plus(s.T_hat, K * (y - g_pred));
  out.P = project_psd<6>(s.P - K * S * K.transpose());
  return out;
}

/// Normalized estimation error squared of the tangent error Log(T_hat^-1 T).
inline double nees(const Pose& T_true, const FilterState& s) {
  const Twist e = right_minus(T_true, s.T_hat);
  return e.dot(s.P.ldlt().solve(e));
}

}  // namespace uavisac
