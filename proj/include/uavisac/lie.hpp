#pragma once

// SE(3)/SO(3) primitives. Twists are ordered [nu; omega] everywhere and all
// 6x6 matrices (adjoints, Jacobians, covariances) follow that ordering.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "uavisac/errors.hpp"

namespace uavisac {

inline constexpr double kPi = std::numbers::pi;

using Vector3 = Eigen::Vector3d;
using Vector4 = Eigen::Vector4d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Body or spatial twist [nu; omega].
using Twist = Vector6;
/// 6x6 covariance in [nu; omega] order.
using Covariance6 = Matrix6;

inline Vector3 linear(const Twist& xi) { return xi.head<3>(); }
inline Vector3 angular(const Twist& xi) { return xi.tail<3>(); }

inline Twist make_twist(const Vector3& nu, const Vector3& omega) {
  Twist xi;
  xi << nu, omega;
  return xi;
}

inline Matrix3 skew(const Vector3& v) {
  Matrix3 s;
  // clang-format off
  s <<     0.0, -v.z(),  v.y(),
         v.z(),    0.0, -v.x(),
        -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

inline Vector3 vee3(const Matrix3& s) { return {s(2, 1), s(0, 2), s(1, 0)}; }

/// Homogeneous transform (R, r).
class Pose {
 public:
  Pose() : R_(Matrix3::Identity()), r_(Vector3::Zero()) {}
  Pose(const Matrix3& R, const Vector3& r) : R_(R), r_(r) {}

  static Pose identity() { return {}; }

  [[nodiscard]] const Matrix3& R() const { return R_; }
  [[nodiscard]] const Vector3& r() const { return r_; }

  [[nodiscard]] Matrix4 matrix() const {
    Matrix4 T = Matrix4::Identity();
    T.topLeftCorner<3, 3>() = R_;
    T.topRightCorner<3, 1>() = r_;
    return T;
  }

  [[nodiscard]] Pose inverse() const {
    const Matrix3 Rt = R_.transpose();
    return {Rt, -Rt * r_};
  }

  [[nodiscard]] Pose operator*(const Pose& other) const {
    return {R_ * other.R_, R_ * other.r_ + r_};
  }

  /// Orthonormality defect ||R^T R - I||_max together with |det R - 1|.
  [[nodiscard]] double rotation_drift() const {
    const double ortho = (R_.transpose() * R_ - Matrix3::Identity()).cwiseAbs().maxCoeff();
    return std::max(ortho, std::abs(R_.determinant() - 1.0));
  }

  [[nodiscard]] bool is_valid(double tol = 1e-9) const {
    return R_.allFinite() && r_.allFinite() && rotation_drift() <= tol;
  }

  /// Nearest rotation in the Frobenius sense (polar factor via SVD).
  [[nodiscard]] Pose orthonormalized() const {
    Eigen::JacobiSVD<Matrix3> svd(R_, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix3 U = svd.matrixU();
    const Matrix3 V = svd.matrixV();
    if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
    return {U * V.transpose(), r_};
  }

 private:
  Matrix3 R_;
  Vector3 r_;
};

struct HomogeneousPoint {
  Vector3 p;
  [[nodiscard]] Vector4 coords() const { return {p.x(), p.y(), p.z(), 1.0}; }
};

struct HomogeneousVector {
  Vector3 v;
  [[nodiscard]] Vector4 coords() const { return {v.x(), v.y(), v.z(), 0.0}; }
};

inline HomogeneousPoint act(const Pose& T, const HomogeneousPoint& x) {
  return {T.R() * x.p + T.r()};
}

inline HomogeneousVector act(const Pose& T, const HomogeneousVector& x) {
  return {T.R() * x.v};
}

inline Matrix4 hat(const Twist& xi) {
  Matrix4 m = Matrix4::Zero();
  m.topLeftCorner<3, 3>() = skew(angular(xi));
  m.topRightCorner<3, 1>() = linear(xi);
  return m;
}

inline Twist vee(const Matrix4& m) {
  return make_twist(m.topRightCorner<3, 1>(), vee3(m.topLeftCorner<3, 3>()));
}

/// Small adjoint ad_xi, so that [xi1, xi2] = ad_xi1 xi2.
inline Matrix6 small_adjoint(const Twist& xi) {
  Matrix6 ad = Matrix6::Zero();
  const Matrix3 W = skew(angular(xi));
  ad.topLeftCorner<3, 3>() = W;
  ad.topRightCorner<3, 3>() = skew(linear(xi));
  ad.bottomRightCorner<3, 3>() = W;
  return ad;
}

namespace detail {

// Coefficients shared by the SO(3)/SE(3) exponential and Jacobians, with
// Taylor expansions below the cancellation-prone regime.
struct ExpCoefficients {
  double A;  // sin(t)/t
  double B;  // (1 - cos t)/t^2
  double C;  // (t - sin t)/t^3
};

inline ExpCoefficients exp_coefficients(double t) {
  const double t2 = t * t;
  if (t < 0.05) {
    const double t4 = t2 * t2;
    const double t6 = t4 * t2;
    return {1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0,
            0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0};
  }
  return {std::sin(t) / t, (1.0 - std::cos(t)) / t2, (t - std::sin(t)) / (t2 * t)};
}

}  // namespace detail

/// SO(3) left Jacobian.
inline Matrix3 so3_left_jacobian(const Vector3& phi) {
  const auto k = detail::exp_coefficients(phi.norm());
  const Matrix3 W = skew(phi);
  return Matrix3::Identity() + k.B * W + k.C * W * W;
}

/// Capitalized exponential of xi * dt.
inline Pose exp_map(const Twist& xi, double dt = 1.0) {
  const Vector3 nu = linear(xi) * dt;
  const Vector3 w = angular(xi) * dt;
  const double t = w.norm();
  const Matrix3 W = skew(w);
  const Matrix3 W2 = W * W;
  const Matrix3 I = Matrix3::Identity();
  if (t < 1e-8) {
    const Matrix3 W3 = W2 * W;
    const Matrix3 W4 = W2 * W2;
    const Matrix3 R = I + W + W2 / 2.0 + W3 / 6.0 + W4 / 24.0;
    const Matrix3 V = I + W / 2.0 + W2 / 6.0 + W3 / 24.0 + W4 / 120.0;
    return {R, V * nu};
  }
  const auto k = detail::exp_coefficients(t);
  const Matrix3 R = I + k.A * W + k.B * W2;
  const Matrix3 V = I + k.B * W + k.C * W2;
  return {R, V * nu};
}

/// SO(3) logarithm as a rotation vector. Throws AngleNearPi close to pi.
inline Vector3 so3_log(const Matrix3& R) {
  const double tr = R.trace();
  if (tr <= -1.0 + 1e-6) {
    throw Error(ErrorKind::AngleNearPi, "rotation angle too close to pi for a unique logarithm");
  }
  const Vector3 axis2 = vee3(R - R.transpose());  // 2 sin(t) * axis
  const double s = 0.5 * axis2.norm();
  const double c = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  const double t = std::atan2(s, c);
  if (t < 1e-6) return 0.5 * (1.0 + t * t / 6.0) * axis2;
  return (t / (2.0 * s)) * axis2;
}

/// Capitalized logarithm; inverse of exp_map(., 1).
inline Twist log_map(const Pose& T) {
  const Vector3 w = so3_log(T.R());
  const double t = w.norm();
  const Matrix3 W = skew(w);
  double coeff;
  if (t < 0.05) {
    const double t2 = t * t;
    coeff = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  } else {
    coeff = (1.0 - t * std::sin(t) / (2.0 * (1.0 - std::cos(t)))) / (t * t);
  }
  const Matrix3 V_inv = Matrix3::Identity() - 0.5 * W + coeff * W * W;
  return make_twist(V_inv * T.r(), w);
}

/// Ad_T = [[R, [r]x R], [0, R]].
inline Matrix6 adjoint(const Pose& T) {
  Matrix6 Ad = Matrix6::Zero();
  Ad.topLeftCorner<3, 3>() = T.R();
  Ad.topRightCorner<3, 3>() = skew(T.r()) * T.R();
  Ad.bottomRightCorner<3, 3>() = T.R();
  return Ad;
}

/// SE(3) left Jacobian J_l(xi).
inline Matrix6 left_jacobian(const Twist& xi) {
  const Vector3 rho = linear(xi);
  const Vector3 phi = angular(xi);
  const double t = phi.norm();
  const double t2 = t * t;

  double a, b, c;
  if (t < 0.05) {
    const double t4 = t2 * t2;
    const double t6 = t4 * t2;
    a = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0;
    b = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t6 / 3628800.0;
    c = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0 - t6 / 9979200.0;
  } else {
    const double s = std::sin(t);
    const double co = std::cos(t);
    a = (t - s) / (t2 * t);
    b = (t2 + 2.0 * co - 2.0) / (2.0 * t2 * t2);
    c = (2.0 * t - 3.0 * s + t * co) / (2.0 * t2 * t2 * t);
  }

  const Matrix3 P = skew(phi);
  const Matrix3 Rh = skew(rho);
  const Matrix3 PR = P * Rh;
  const Matrix3 RP = Rh * P;
  const Matrix3 PRP = PR * P;
  const Matrix3 Q = 0.5 * Rh + a * (PR + RP + PRP) + b * (P * PR + RP * P - 3.0 * PRP) +
                    c * (PRP * P + P * PRP);

  Matrix6 J = Matrix6::Zero();
  const Matrix3 Jso3 = so3_left_jacobian(phi);
  J.topLeftCorner<3, 3>() = Jso3;
  J.topRightCorner<3, 3>() = Q;
  J.bottomRightCorner<3, 3>() = Jso3;
  return J;
}

/// SE(3) right Jacobian: Exp(xi + d) ~= Exp(xi) Exp(J_r(xi) d).
inline Matrix6 right_jacobian(const Twist& xi) {
  if (xi.norm() < 1e-6) return Matrix6::Identity() - 0.5 * small_adjoint(xi);
  return left_jacobian(-xi);
}

inline Pose right_plus(const Pose& T, const Twist& delta) { return T * exp_map(delta); }

/// T2 (-) T1 = Log(T1^-1 T2).
inline Twist right_minus(const Pose& T2, const Pose& T1) { return log_map(T1.inverse() * T2); }

/// Zero-mean Gaussian tangent sample with covariance cov.
template <class Rng>
Twist sample_pose_noise(const Covariance6& cov, Rng& rng) {
  if (cov.isZero(0.0)) return Twist::Zero();
  Eigen::LLT<Matrix6> llt(cov + 1e-12 * Matrix6::Identity());
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPSD, "noise covariance is not positive semidefinite");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Twist n;
  for (int i = 0; i < 6; ++i) n(i) = normal(rng);
  return llt.matrixL() * n;
}

}  // namespace uavisac
