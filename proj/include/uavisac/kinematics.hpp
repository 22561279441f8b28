#pragma once

// Rigid-body evolution of the UAV (s), the ground user (p) and their relative
// pose T_sp = T_ws^-1 T_wp, plus extraction of the radar parameters zeta.

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "uavisac/errors.hpp"
#include "uavisac/lie.hpp"
#include "uavisac/waveform.hpp"

namespace uavisac {

struct WorldState {
  Pose T_ws;
  Pose T_wp;
  Twist xi_s = Twist::Zero();
  Twist xi_p = Twist::Zero();  // angular part is always zero: the GU is a point

  [[nodiscard]] Pose relative() const { return T_ws.inverse() * T_wp; }
};

inline Pose propagate_world(const Pose& T, const Twist& xi_body, double dt) {
  return T * exp_map(xi_body, dt);
}

/// Exp(-(xi_s + xi_noise) dt) * T_sp * Exp(xi_p dt).
inline Pose evolve_relative(const Pose& T_sp, const Twist& xi_s, const Twist& xi_p, const Twist& xi_noise,
                            double dt) {
  return exp_map(-(xi_s + xi_noise), dt) * T_sp * exp_map(xi_p, dt);
}

/// Velocity of a body-fixed point: nu + omega x point.
inline Vector3 local_velocity(const Twist& xi, const Vector3& point) {
  return linear(xi) + angular(xi).cross(point);
}

inline double checked_range(const Vector3& r) {
  const double rho = r.norm();
  if (rho < 1e-3) throw Error(ErrorKind::DegenerateRange, "relative range below 1 mm");
  return rho;
}

/// <R v_p - v_s, r> / |r|, positive when the target recedes.
inline double radial_velocity(const Pose& T_sp, const Vector3& v_p_local, const Vector3& v_s_local) {
  const double rho = checked_range(T_sp.r());
  return (T_sp.R() * v_p_local - v_s_local).dot(T_sp.r()) / rho;
}

/// Geometry and motion needed to turn a relative pose into zeta.
struct SensingGeometry {
  Vector3 upa_offset = Vector3::Zero();  // s, array midpoint in the UAV body frame
  double fc = 2.4e9;
  double a_const = 1.0;
  double phase = 0.0;  // channel phase, fixed over an episode
};

/// Doppler scale 2 f_c / c that maps radial speed to Hz.
inline double doppler_scale(double fc) { return 2.0 * fc / kSpeedOfLight; }

inline PhysicalParams extract_params(const Pose& T_sp, const Twist& xi_s_next, const Twist& xi_p_next,
                                     const SensingGeometry& geo) {
  const Vector3& r = T_sp.r();
  const double rho = checked_range(r);
  PhysicalParams z;
  z.tau = 2.0 * rho / kSpeedOfLight;
  z.theta = std::acos(std::clamp(r.z() / rho, -1.0, 1.0));
  z.phi = (r.x() == 0.0 && r.y() == 0.0) ? 0.0 : std::atan2(r.y(), r.x());
  const Vector3 v_s = local_velocity(xi_s_next, geo.upa_offset);
  const Vector3 v_p = local_velocity(xi_p_next, Vector3::Zero());
  z.mu = doppler_scale(geo.fc) * radial_velocity(T_sp, v_p, v_s);
  z.b = channel_gain(rho, geo.phase, geo.a_const);
  return z;
}

/// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

}  // namespace uavisac
