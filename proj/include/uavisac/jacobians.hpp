#pragma once

// Analytic derivatives of the sensing chain: channel vector w.r.t. zeta,
// zeta w.r.t. the relative pose (right perturbation), the transition and
// control Jacobians of the relative motion, and the stacked measurement H.

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "uavisac/errors.hpp"
#include "uavisac/kinematics.hpp"
#include "uavisac/lie.hpp"
#include "uavisac/waveform.hpp"

namespace uavisac {

using Matrix46 = Eigen::Matrix<double, 4, 6>;

/// Index vectors expanded to the channel-vector layout.
/// N1 columns hold the integer element indices [n_Ty, n_Tx, n_Ry, n_Rx];
/// N2 = N1 * cyclic_permutation().
struct ConstantSelectors {
  Eigen::MatrixXd N1;
  Eigen::MatrixXd N2;
  Eigen::VectorXd ell;
  Eigen::VectorXd k;

  static Eigen::Matrix4d cyclic_permutation() {
    Eigen::Matrix4d P;
    // clang-format off
    P << 0, 0, 0, 1,
         1, 0, 0, 0,
         0, 1, 0, 0,
         0, 0, 1, 0;
    // clang-format on
    return P;
  }

  static ConstantSelectors build(const UpaConfig& upa, const ReGrid& grid) {
    const int nt = upa.n_tx();
    const int nr = upa.n_rx();
    const int M = grid.size();
    const Eigen::Index n = static_cast<Eigen::Index>(M) * nt * nr;
    ConstantSelectors s;
    s.N1.resize(n, 4);
    s.ell.resize(n);
    s.k.resize(n);
    for (int m = 0; m < M; ++m) {
      for (int t = 0; t < nt; ++t) {
        for (int r = 0; r < nr; ++r) {
          const Eigen::Index i = (static_cast<Eigen::Index>(m) * nt + t) * nr + r;
          s.N1(i, 0) = t / upa.nt_x;
          s.N1(i, 1) = t % upa.nt_x;
          s.N1(i, 2) = r / upa.nr_x;
          s.N1(i, 3) = r % upa.nr_x;
          s.ell(i) = grid.res[m].first;
          s.k(i) = grid.res[m].second;
        }
      }
    }
    s.N2 = s.N1 * cyclic_permutation();
    return s;
  }
};

/// Coefficients of N1 in the azimuth derivative of the phase pi * n . u.
inline Eigen::Vector4d azimuth_weights(double phi) {
  return {-std::cos(phi), std::sin(phi), std::cos(phi), -std::sin(phi)};
}

/// dh/dzeta, columns [tau, phi, theta, mu]. |b| is treated as a function of tau
/// (|b| ~ rho^-2 ~ tau^-2), the channel phase as fixed.
inline MatrixXc jac_h_wrt_zeta(const PhysicalParams& z, const UpaConfig& upa, const ReGrid& grid,
                               const ConstantSelectors& sel) {
  const VectorXc v = channel_vector(PhysicalParams{z.tau, z.phi, z.theta, z.mu, Complex(1.0, 0.0)}, upa, grid);
  const Complex j(0.0, 1.0);
  const Eigen::VectorXd phase_phi = sel.N1 * azimuth_weights(z.phi);
  const Eigen::VectorXd phase_theta = sel.N2 * azimuth_weights(z.phi);
  const Complex amp_term = 1.0 / (j * kPi * grid.f0 * z.tau);

  MatrixXc J(v.size(), 4);
  J.col(0) = (-j * 2.0 * kPi * z.b * grid.f0) * (v.array() * (sel.ell.cast<Complex>().array() + amp_term)).matrix();
  J.col(1) = (j * kPi * z.b * std::sin(z.theta)) * (v.array() * phase_phi.cast<Complex>().array()).matrix();
  J.col(2) = (j * kPi * z.b * std::cos(z.theta)) * (v.array() * phase_theta.cast<Complex>().array()).matrix();
  J.col(3) = (j * 2.0 * kPi * z.b * grid.Ts) * (v.array() * sel.k.cast<Complex>().array()).matrix();
  return J;
}

/// dzeta/dT for T_sp under right perturbation T Exp(delta).
inline Matrix46 jac_zeta_wrt_pose(const Pose& T_sp, const Vector3& v_p_local, const Vector3& v_s_local, double fc) {
  const Matrix3& R = T_sp.R();
  const Vector3& r = T_sp.r();
  const double rho = checked_range(r);
  const double rho2 = rho * rho;
  const double polar = rho2 - r.z() * r.z();
  if (polar < 1e-9) throw Error(ErrorKind::PolarSingularity, "target on the array axis");
  const double xy2 = r.x() * r.x() + r.y() * r.y();
  if (xy2 < 1e-9) throw Error(ErrorKind::AzimuthSingularity, "azimuth undefined");

  Matrix46 J = Matrix46::Zero();
  J.block<1, 3>(0, 0) = (2.0 / kSpeedOfLight) * r.transpose() * R / rho;
  J.block<1, 3>(1, 0) = (r.x() * Vector3::UnitY() - r.y() * Vector3::UnitX()).transpose() * R / xy2;
  J.block<1, 3>(2, 0) = -(Vector3::UnitZ() - r.z() * r / rho2).transpose() * R / std::sqrt(polar);

  const double k = doppler_scale(fc) / rho;
  const Matrix3 P_perp = Matrix3::Identity() - r * r.transpose() / rho2;
  J.block<1, 3>(3, 0) = k * (R * v_p_local - v_s_local).transpose() * P_perp * R;
  J.block<1, 3>(3, 3) = -k * r.transpose() * R * skew(v_p_local);
  return J;
}

/// State transition of the relative pose: Ad of Exp(-xi_p dt).
inline Matrix6 jac_state_F(const Twist& xi_p, double dt) { return adjoint(exp_map(-xi_p, dt)); }

/// Sensitivity of the predicted relative pose to additive UAV twist noise.
inline Matrix6 jac_control_G(const Pose& T_sp_pred, const Twist& xi_s, double dt) {
  return -adjoint(T_sp_pred.inverse()) * right_jacobian(xi_s * dt) * dt;
}

/// Everything needed to map a relative pose and control to the noiseless
/// augmented measurement.
struct MeasurementModel {
  UpaConfig upa;
  ReGrid grid;
  PilotMatrix pilots;
  SensingGeometry geo;
  ConstantSelectors selectors;

  MeasurementModel() = default;
  MeasurementModel(UpaConfig u, ReGrid g, PilotMatrix x, SensingGeometry geometry)
      : upa(u), grid(std::move(g)), pilots(std::move(x)), geo(geometry),
        selectors(ConstantSelectors::build(upa, grid)) {}

  [[nodiscard]] Eigen::Index size() const { return 2 * static_cast<Eigen::Index>(grid.size()) * upa.n_rx(); }

  [[nodiscard]] PhysicalParams params(const Pose& T_sp, const Twist& xi_s_next, const Twist& xi_p) const {
    return extract_params(T_sp, xi_s_next, xi_p, geo);
  }

  /// Noiseless [Re; Im] of (X (x) I) h(zeta(T)).
  [[nodiscard]] Eigen::VectorXd predict(const Pose& T_sp, const Twist& xi_s_next, const Twist& xi_p) const {
    return augment(apply_pilots(pilots, channel_vector(params(T_sp, xi_s_next, xi_p), upa, grid), upa));
  }

  /// Real-augmented dy/dzeta.
  [[nodiscard]] Eigen::MatrixXd jac_y_wrt_zeta(const PhysicalParams& z) const {
    return augment(apply_pilots(pilots, jac_h_wrt_zeta(z, upa, grid, selectors), upa));
  }

  /// Psi = dzeta/dT at (T, xi_s_next).
  [[nodiscard]] Matrix46 psi(const Pose& T_sp, const Twist& xi_s_next, const Twist& xi_p) const {
    return jac_zeta_wrt_pose(T_sp, local_velocity(xi_p, Vector3::Zero()), local_velocity(xi_s_next, geo.upa_offset),
                             geo.fc);
  }
};

struct MeasurementJacobian {
  PhysicalParams zeta;
  Eigen::MatrixXd J_y_zeta;  // 2 M N_R x 4
  Matrix46 Psi;
  Eigen::MatrixXd H;  // 2 M N_R x 6
};

inline MeasurementJacobian jac_measurement_H(const MeasurementModel& model, const Pose& T_sp, const Twist& xi_s_next,
                                             const Twist& xi_p) {
  MeasurementJacobian out;
  out.zeta = model.params(T_sp, xi_s_next, xi_p);
  out.Psi = model.psi(T_sp, xi_s_next, xi_p);
  out.J_y_zeta = model.jac_y_wrt_zeta(out.zeta);
  out.H = out.J_y_zeta * out.Psi;
  return out;
}

}  // namespace uavisac
