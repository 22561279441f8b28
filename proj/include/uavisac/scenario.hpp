#pragma once

// Episode simulation: ground-truth motion of the UAV and the ground user,
// radar measurements, the SE(3) filter, the CPCRB recursion and one of three
// control policies; plus Monte-Carlo aggregation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "uavisac/control.hpp"
#include "uavisac/cpcrb.hpp"
#include "uavisac/ekf.hpp"
#include "uavisac/errors.hpp"
#include "uavisac/jacobians.hpp"
#include "uavisac/kinematics.hpp"
#include "uavisac/lie.hpp"
#include "uavisac/waveform.hpp"

namespace uavisac {

enum class Policy { Optimized, Parallel, Diagonal };

inline const char* to_string(Policy p) {
  switch (p) {
    case Policy::Optimized: return "optimized";
    case Policy::Parallel: return "parallel";
    case Policy::Diagonal: return "diagonal";
  }
  return "unknown";
}

inline Policy parse_policy(const std::string& s) {
  if (s == "optimized") return Policy::Optimized;
  if (s == "parallel") return Policy::Parallel;
  if (s == "diagonal") return Policy::Diagonal;
  throw Error(ErrorKind::Config, "unknown policy '" + s + "'");
}

struct ScenarioConfig {
  UpaConfig upa{2, 2, 2, 2};
  int subcarriers = 32;  // L
  int symbols = 10;      // K
  int n_re = 32;         // M, resource elements on a diagonal lattice
  double f0 = 15e3;
  double guard_fraction = 0.07;
  double fc = 2.4e9;
  double sigma_rcs = 0.5;
  double pilot_power = 1.0;

  double dt = 0.25;
  int n_epochs = 200;
  double V_l = 6.0, V_a = 0.15, A_l = 2.0, A_a = 0.05, V = 0.5;

  double snr_db = 10.0;  // per-RE receive SNR at the initial range
  Twist xi_w_std = (Twist() << 0.05, 0.05, 0.05, 0.005, 0.005, 0.005).finished();
  Twist c_w_var = Twist::Constant(1e-4);
  bool sample_noise = true;

  Pose T_wp0{Matrix3::Identity(), Vector3(200, 150, 0)};
  Pose T_ws0{Vector3(-1, 1, -1).asDiagonal().toDenseMatrix(), Vector3(200, 0, 150)};
  Twist xi_p = make_twist({-4, 0, 0}, Vector3::Zero());
  Twist xi_s0 = make_twist({0, 1, 0}, Vector3::Zero());
  Vector3 upa_offset{0.2, 0.3, 0.1};

  Vector3 r_wp_hat0{200, 170, 0};
  Twist p0_std = (Twist() << 20, 20, 20, 0.05, 0.05, 0.05).finished();

  Twist parallel_twist = make_twist({4, 0, 0}, Vector3::Zero());
  Twist diagonal_twist = make_twist({4 / std::sqrt(2.0), 4 / std::sqrt(2.0), 0}, Vector3::Zero());

  Policy policy = Policy::Optimized;
  std::uint64_t seed = 1;
  int mc_runs = 50;
  int randomization_samples = 200;
  int orthonormalize_every = 10;

  [[nodiscard]] ReGrid grid() const {
    return ReGrid::diagonal(subcarriers, symbols, n_re, f0, guard_fraction, fc);
  }

  [[nodiscard]] ConstraintSet constraints() const {
    ConstraintSet c;
    c.V_l = V_l;
    c.V_a = V_a;
    c.A_l = A_l;
    c.A_a = A_a;
    c.V = V;
    c.upa_offset = upa_offset;
    return c;
  }

  /// Measurement noise variance per real component, sigma_z^2 / 2.
  [[nodiscard]] double noise_var() const {
    const double rho0 = (T_ws0.inverse() * T_wp0).r().norm();
    const double b0 = std::abs(channel_gain(rho0, 0.0, radar_constant(fc, sigma_rcs)));
    return 0.5 * b0 * b0 * pilot_power / std::pow(10.0, snr_db / 10.0);
  }

  void validate() const {
    upa.validate();
    grid().validate();
    constraints().validate();
    if (n_epochs < 1) throw Error(ErrorKind::Config, "epochs must be at least 1");
    if (!(dt > 0)) throw Error(ErrorKind::Config, "dt must be positive");
    if (mc_runs < 1) throw Error(ErrorKind::Config, "mc_runs must be at least 1");
    if (!(sigma_rcs > 0) || !(pilot_power > 0)) throw Error(ErrorKind::Config, "rcs and pilot power must be positive");
    if ((xi_w_std.array() < 0).any() || (c_w_var.array() <= 0).any() || (p0_std.array() <= 0).any()) {
      throw Error(ErrorKind::Config, "noise deviations must be non-negative and variances positive");
    }
    if (randomization_samples < 1) throw Error(ErrorKind::Config, "randomization_samples must be at least 1");
    if (!T_ws0.is_valid() || !T_wp0.is_valid()) throw Error(ErrorKind::Config, "initial rotations must be orthonormal");
  }
};

/// splitmix64 finalizer applied to (seed, stream); independent streams per run.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct EpochRecord {
  int epoch = 0;
  Pose T_sp, T_hat;
  Eigen::Vector4d zeta, zeta_hat;  // tau, phi, theta, mu
  Covariance6 cpcrb_T;             // pose bound I^-1
  Covariance6 prior_cov;           // E^-1 before this epoch's measurement
  Eigen::Vector4d cpcrb_zeta;      // diagonal of the parameter bound
  double logdet = 0.0;
  double nees = 0.0;
  Twist xi_s;  // twist commanded for the next interval
  Vector3 uav_world, gu_world, gu_hat_world;
  bool fallback = false;
};

struct EpisodeTrace {
  std::vector<EpochRecord> epochs;
  bool failed = false;
  std::string failure;
  int fallbacks = 0;
};

namespace detail {

inline Eigen::Vector4d zeta_vector(const PhysicalParams& p) { return {p.tau, p.phi, p.theta, p.mu}; }

}  // namespace detail

/// zeta_hat - zeta with the azimuth difference wrapped into (-pi, pi].
inline Eigen::Vector4d param_error(const Eigen::Vector4d& zeta_hat, const Eigen::Vector4d& zeta) {
  Eigen::Vector4d e = zeta_hat - zeta;
  e(1) = wrap_angle(e(1));
  return e;
}

namespace detail {

inline Twist gaussian_twist(const Twist& std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Twist out;
  for (int k = 0; k < 6; ++k) out(k) = std_dev(k) * normal(rng);
  return out;
}

}  // namespace detail

/// One episode; singularities end it early with `failed` set.
inline EpisodeTrace run_episode(const ScenarioConfig& cfg, std::uint64_t stream_seed) {
  std::mt19937_64 setup_rng(split_seed(stream_seed, 0));
  std::mt19937_64 motion_rng(split_seed(stream_seed, 1));
  std::mt19937_64 sensing_rng(split_seed(stream_seed, 2));
  std::mt19937_64 control_rng(split_seed(stream_seed, 3));

  const ReGrid grid = cfg.grid();
  SensingGeometry geo;
  geo.upa_offset = cfg.upa_offset;
  geo.fc = cfg.fc;
  geo.a_const = radar_constant(cfg.fc, cfg.sigma_rcs);
  geo.phase = std::uniform_real_distribution<double>(-kPi, kPi)(setup_rng);
  const MeasurementModel model(cfg.upa, grid, build_pilot_matrix(cfg.upa, grid, cfg.pilot_power, setup_rng), geo);

  const double c = cfg.noise_var();
  const double sigma_z = std::sqrt(2.0 * c);
  const Covariance6 Xi_w = cfg.xi_w_std.cwiseAbs2().asDiagonal();
  const Covariance6 C_w = cfg.c_w_var.asDiagonal();
  const Covariance6 C_w_sqrt = cfg.c_w_var.cwiseSqrt().asDiagonal();
  const Matrix6 F = jac_state_F(cfg.xi_p, cfg.dt);
  const OptimizerOptions opt{cfg.randomization_samples, {}};

  WorldState world{cfg.T_ws0, cfg.T_wp0, cfg.xi_s0, cfg.xi_p};
  FilterState filt;
  filt.T_hat = cfg.T_ws0.inverse() * Pose(cfg.T_wp0.R(), cfg.r_wp_hat0);
  filt.P = cfg.p0_std.cwiseAbs2().asDiagonal();
  Matrix6 I = inverse_spd<6>(filt.P, "initial covariance");
  Twist xi_cur = cfg.xi_s0;

  EpisodeTrace trace;
  trace.epochs.reserve(static_cast<std::size_t>(cfg.n_epochs));
  try {
    for (int n = 1; n <= cfg.n_epochs; ++n) {
      const Pose T_ws_prev = world.T_ws;
      const Pose T_wp_hat_prev = T_ws_prev * filt.T_hat;

      // Ground truth over the interval.
      const Twist xi_w = cfg.sample_noise ? detail::gaussian_twist(cfg.xi_w_std, motion_rng) : Twist::Zero();
      const Twist w = cfg.sample_noise ? Twist(C_w_sqrt * detail::gaussian_twist(Twist::Ones(), motion_rng))
                                       : Twist::Zero();
      world.T_ws = propagate_world(world.T_ws, xi_cur + xi_w, cfg.dt);
      world.T_wp = world.T_wp * exp_map(cfg.xi_p, cfg.dt) * exp_map(w);
      if (cfg.orthonormalize_every > 0 && n % cfg.orthonormalize_every == 0) {
        world.T_ws = world.T_ws.orthonormalized();
        world.T_wp = world.T_wp.orthonormalized();
      }
      const Pose T_sp = world.relative();

      // Filter prediction and the prior information for this epoch.
      filt = predict(filt, PredictInputs{xi_cur, cfg.xi_p, Xi_w, C_w, cfg.dt});
      const Covariance6 C_w_prime =
          process_noise_prime(Xi_w, C_w, adjoint(T_wp_hat_prev.inverse()), cfg.dt);
      const Covariance6 E_inv = prior_covariance(I, F, C_w_prime);

      // Next twist.
      ConstraintSet cons = cfg.constraints();
      cons.xi_prev = xi_cur;
      cons.R1 = world.T_ws.R();
      cons.R2 = T_ws_prev.R();
      Twist xi_next;
      bool fallback = false;
      if (cfg.policy == Policy::Optimized) {
        const PhysicalParams z_prev = model.params(filt.T_hat, xi_cur, cfg.xi_p);
        const Eigen::MatrixXd Jz = model.jac_y_wrt_zeta(z_prev);
        const Eigen::Matrix4d A_tilde = Jz.transpose() * Jz / c;
        const PsiPartition part = partition_psi(model.psi(filt.T_hat, xi_cur, cfg.xi_p), filt.T_hat,
                                                local_velocity(cfg.xi_p, Vector3::Zero()), cfg.upa_offset, cfg.fc,
                                                xi_cur);
        const ControlDecision d = optimize_control(E_inv, A_tilde, part, cons, control_rng, opt);
        xi_next = d.xi;
        fallback = d.fallback;
      } else {
        xi_next = ramp_toward(cons, cfg.policy == Policy::Parallel ? cfg.parallel_twist : cfg.diagonal_twist);
      }
      trace.fallbacks += fallback ? 1 : 0;

      // Measurement, correction, bound.
      const VectorXc h = channel_vector(model.params(T_sp, xi_next, cfg.xi_p), cfg.upa, grid);
      const VectorXc y_c = cfg.sample_noise ? synthesize_measurement(h, model.pilots, cfg.upa, sigma_z, sensing_rng)
                                            : apply_pilots(model.pilots, h, cfg.upa);
      const Eigen::VectorXd y = augment(y_c);
      const MeasurementJacobian mj = jac_measurement_H(model, filt.T_hat, xi_next, cfg.xi_p);
      const Eigen::VectorXd g = model.predict(filt.T_hat, xi_next, cfg.xi_p);
      filt = update(filt, y, mj.H, c, g);
      if (cfg.orthonormalize_every > 0 && n % cfg.orthonormalize_every == 0) {
        filt.T_hat = filt.T_hat.orthonormalized();
      }
      I = inverse_spd<6>(E_inv, "prior covariance") + mj.H.transpose() * mj.H / c;
      I = 0.5 * (I + I.transpose());

      EpochRecord rec;
      rec.epoch = n;
      rec.T_sp = T_sp;
      rec.T_hat = filt.T_hat;
      rec.zeta = detail::zeta_vector(model.params(T_sp, xi_next, cfg.xi_p));
      rec.zeta_hat = detail::zeta_vector(model.params(filt.T_hat, xi_next, cfg.xi_p));
      const Covariance6 bound = cpcrb_pose(I);
      rec.cpcrb_T = bound;
      rec.prior_cov = E_inv;
      const Matrix46 Psi_hat = model.psi(filt.T_hat, xi_next, cfg.xi_p);
      rec.cpcrb_zeta = (Psi_hat * bound * Psi_hat.transpose()).diagonal();
      rec.logdet = logdet_cpcrb(I);
      rec.nees = nees(T_sp, filt);
      rec.xi_s = xi_next;
      rec.uav_world = world.T_ws.r();
      rec.gu_world = world.T_wp.r();
      rec.gu_hat_world = (world.T_ws * filt.T_hat).r();
      rec.fallback = fallback;
      trace.epochs.push_back(rec);

      xi_cur = xi_next;
      world.xi_s = xi_next;
    }
  } catch (const Error& e) {
    trace.failed = true;
    trace.failure = std::string(to_string(e.kind())) + ": " + e.what();
  }
  return trace;
}

struct MonteCarloResult {
  Policy policy = Policy::Optimized;
  int runs = 0;
  int failures = 0;
  std::vector<std::string> failure_reasons;
  std::vector<double> rmse_pos, rmse_tau, rmse_phi, rmse_theta, rmse_mu;
  std::vector<double> cpcrb_tau, cpcrb_phi, cpcrb_theta, cpcrb_mu;  // square roots of the mean bounds
  std::vector<double> logdet;                                       // mean log det of the pose bound
  std::vector<double> bias_pos;  // norm of the mean world-frame GU position error
  std::vector<double> nees;      // mean NEES
  EpisodeTrace first;            // first successful episode, for trajectory output
  int fallbacks = 0;
};

/// Runs mc_runs episodes on `threads` workers. Episode k uses stream
/// split_seed(seed, k) whatever the thread count, and the reduction walks
/// episodes in index order, so results do not depend on scheduling.
inline MonteCarloResult monte_carlo(const ScenarioConfig& cfg, int threads = 1) {
  cfg.validate();
  const int runs = cfg.mc_runs;
  std::vector<EpisodeTrace> traces(static_cast<std::size_t>(runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next++; k < runs; k = next++) traces[static_cast<std::size_t>(k)] = run_episode(cfg, split_seed(cfg.seed, k));
  };
  const int n_threads = std::clamp(threads, 1, runs);
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  MonteCarloResult out;
  out.policy = cfg.policy;
  out.runs = runs;
  const auto N = static_cast<std::size_t>(cfg.n_epochs);
  for (auto* v : {&out.rmse_pos, &out.rmse_tau, &out.rmse_phi, &out.rmse_theta, &out.rmse_mu, &out.cpcrb_tau,
                  &out.cpcrb_phi, &out.cpcrb_theta, &out.cpcrb_mu, &out.logdet, &out.bias_pos, &out.nees}) {
    v->assign(N, 0.0);
  }
  std::vector<Vector3> bias(N, Vector3::Zero());
  int ok = 0;
  for (const auto& tr : traces) {
    out.fallbacks += tr.fallbacks;
    if (tr.failed) {
      ++out.failures;
      out.failure_reasons.push_back(tr.failure);
      continue;
    }
    if (ok == 0) out.first = tr;
    ++ok;
    for (std::size_t n = 0; n < N; ++n) {
      const EpochRecord& r = tr.epochs[n];
      const Eigen::Vector4d e = param_error(r.zeta_hat, r.zeta);
      out.rmse_pos[n] += (r.T_hat.r() - r.T_sp.r()).squaredNorm();
      out.rmse_tau[n] += e(0) * e(0);
      out.rmse_phi[n] += e(1) * e(1);
      out.rmse_theta[n] += e(2) * e(2);
      out.rmse_mu[n] += e(3) * e(3);
      out.cpcrb_tau[n] += r.cpcrb_zeta(0);
      out.cpcrb_phi[n] += r.cpcrb_zeta(1);
      out.cpcrb_theta[n] += r.cpcrb_zeta(2);
      out.cpcrb_mu[n] += r.cpcrb_zeta(3);
      out.logdet[n] += r.logdet;
      out.nees[n] += r.nees;
      bias[n] += r.gu_hat_world - r.gu_world;
    }
  }
  if (ok == 0) {
    throw Error(ErrorKind::AllEpisodesFailed,
                "all episodes failed; first reason: " + (out.failure_reasons.empty() ? "" : out.failure_reasons[0]));
  }
  for (std::size_t n = 0; n < N; ++n) {
    for (auto* v : {&out.rmse_pos, &out.rmse_tau, &out.rmse_phi, &out.rmse_theta, &out.rmse_mu, &out.cpcrb_tau,
                    &out.cpcrb_phi, &out.cpcrb_theta, &out.cpcrb_mu}) {
      (*v)[n] = std::sqrt((*v)[n] / ok);
    }
    out.logdet[n] /= ok;
    out.nees[n] /= ok;
    out.bias_pos[n] = (bias[n] / ok).norm();
  }
  return out;
}

/// Mean of v over the last `count` entries.
inline double tail_mean(const std::vector<double>& v, std::size_t count) {
  count = std::min(count, v.size());
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (std::size_t i = v.size() - count; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(count);
}

namespace detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9e", x);
  return buf;
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& os, const MonteCarloResult& r) {
  os << "epoch,rmse_pos,rmse_tau,rmse_phi,rmse_theta,rmse_mu,cpcrb_tau,cpcrb_phi,cpcrb_theta,cpcrb_mu,"
        "logdet_cpcrb_T,failures\n";
  using detail::fmt;
  for (std::size_t n = 0; n < r.rmse_pos.size(); ++n) {
    os << n + 1 << ',' << fmt(r.rmse_pos[n]) << ',' << fmt(r.rmse_tau[n]) << ',' << fmt(r.rmse_phi[n]) << ','
       << fmt(r.rmse_theta[n]) << ',' << fmt(r.rmse_mu[n]) << ',' << fmt(r.cpcrb_tau[n]) << ','
       << fmt(r.cpcrb_phi[n]) << ',' << fmt(r.cpcrb_theta[n]) << ',' << fmt(r.cpcrb_mu[n]) << ','
       << fmt(r.logdet[n]) << ',' << r.failures << '\n';
  }
}

/// World positions of UAV, GU and the GU estimate, and the commanded twist, for one episode.
inline void write_trajectory_csv(std::ostream& os, const EpisodeTrace& tr) {
  os << "epoch,uav_x,uav_y,uav_z,gu_x,gu_y,gu_z,gu_hat_x,gu_hat_y,gu_hat_z,nu_x,nu_y,omega_z\n";
  using detail::fmt;
  for (const EpochRecord& r : tr.epochs) {
    os << r.epoch;
    for (const Vector3* v : {&r.uav_world, &r.gu_world, &r.gu_hat_world})
      for (int k = 0; k < 3; ++k) os << ',' << fmt((*v)(k));
    os << ',' << fmt(r.xi_s(0)) << ',' << fmt(r.xi_s(1)) << ',' << fmt(r.xi_s(5)) << '\n';
  }
}

}  // namespace uavisac
