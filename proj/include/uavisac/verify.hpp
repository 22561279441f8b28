#pragma once

// Self-check batteries shared by `uavisac check` and the acceptance binary.
// Each compares an implementation route against an independent one (finite
// differences, direct determinants, brute-force search, a second recursion).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "uavisac/control.hpp"
#include "uavisac/cpcrb.hpp"
#include "uavisac/ekf.hpp"
#include "uavisac/instances.hpp"
#include "uavisac/jacobians.hpp"
#include "uavisac/lie.hpp"
#include "uavisac/scenario.hpp"

namespace uavisac::verify {

struct Outcome {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Times `body`, which fills passed and detail.
inline Outcome timed(std::string name, const std::function<void(Outcome&)>& body) {
  Outcome out;
  out.name = std::move(name);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.passed = false;
    out.detail = std::string("exception: ") + e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace detail {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Vector3 random_vec3(Rng& rng, double scale) {
  return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

inline Vector3 random_axis_angle(Rng& rng, double max_angle) {
  Vector3 a = random_vec3(rng, 1.0);
  while (a.norm() < 1e-3) a = random_vec3(rng, 1.0);
  return a.normalized() * uniform(rng, 0.0, max_angle);
}

inline Pose random_pose(Rng& rng, double trans) {
  return {exp_map(make_twist(Vector3::Zero(), random_axis_angle(rng, 3.0))).R(), random_vec3(rng, trans)};
}

// Translation away from the array axis and the azimuth origin.
inline Pose random_sensing_pose(Rng& rng) {
  for (;;) {
    const Vector3 dir = random_vec3(rng, 1.0).normalized();
    if (std::abs(dir.z()) > 0.95 || std::hypot(dir.x(), dir.y()) < 0.2) continue;
    return {random_pose(rng, 1.0).R(), dir * uniform(rng, 50.0, 300.0)};
  }
}

/// Column-wise relative error; columns that vanish are measured against the matrix norm.
inline double column_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const double floor = 1e-8 * std::max(A.norm(), B.norm());
  double worst = 0.0;
  for (Eigen::Index c = 0; c < A.cols(); ++c) {
    const double scale = std::max({A.col(c).norm(), B.col(c).norm(), floor});
    if (scale > 0.0) worst = std::max(worst, (A.col(c) - B.col(c)).norm() / scale);
  }
  return worst;
}

inline double row_error(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  return column_error(A.transpose(), B.transpose());
}

/// Fourth-order central difference of f along each unit direction with step h(k).
template <class F>
Eigen::MatrixXd five_point(const F& f, int dims, const Eigen::VectorXd& h) {
  Eigen::MatrixXd J;
  for (int k = 0; k < dims; ++k) {
    const Eigen::VectorXd d = Eigen::VectorXd::Unit(dims, k) * h(k);
    const Eigen::VectorXd col = (8.0 * (f(d) - f(-d)) - (f(2.0 * d) - f(-2.0 * d))) / (12.0 * h(k));
    if (J.size() == 0) J.resize(col.size(), dims);
    J.col(k) = col;
  }
  return J;
}

inline std::string format_error(double e) {
  std::ostringstream os;
  os.precision(3);
  os << e;
  return os.str();
}

}  // namespace detail

/// Analytic Jacobians against finite differences on `configs` random geometries.
/// `corrupt` scales one column of H to check that the battery can fail.
inline Outcome jacobian_battery(int configs, std::uint64_t seed, double tol = 1e-4, bool corrupt = false) {
  return timed("jacobians", [&](Outcome& out) {
    detail::Rng rng(seed);
    const UpaConfig upa{2, 2, 2, 2};
    const ReGrid grid = ReGrid::diagonal(32, 10, 32, 15e3, 0.07, 2.4e9);
    SensingGeometry geo;
    geo.upa_offset = {0.2, 0.3, 0.1};
    geo.a_const = radar_constant(grid.fc, 0.5);
    const auto sel = ConstantSelectors::build(upa, grid);
    double worst[5] = {0, 0, 0, 0, 0};
    const double dt = 0.25;

    for (int trial = 0; trial < configs; ++trial) {
      geo.phase = detail::uniform(rng, -kPi, kPi);
      const MeasurementModel model(upa, grid, build_pilot_matrix(upa, grid, 1.0, rng), geo);
      const Pose T = detail::random_sensing_pose(rng);
      const Twist xi_s = make_twist(detail::random_vec3(rng, 5.0), detail::random_axis_angle(rng, 0.2));
      const Twist xi_p = make_twist(detail::random_vec3(rng, 5.0), Vector3::Zero());

      // Channel against zeta, with |b| following the range implied by tau.
      const PhysicalParams z = model.params(T, xi_s, xi_p);
      const Eigen::Vector4d z0(z.tau, z.phi, z.theta, z.mu);
      auto h_of = [&](const Eigen::VectorXd& d) {
        const Eigen::Vector4d zz = z0 + d;
        const double rho = zz(0) * kSpeedOfLight / 2.0;
        return augment(channel_vector(PhysicalParams{zz(0), zz(1), zz(2), zz(3), channel_gain(rho, geo.phase, geo.a_const)},
                                      upa, grid));
      };
      const Eigen::MatrixXd Jh = augment(jac_h_wrt_zeta(z, upa, grid, sel));
      const Eigen::MatrixXd Jh_fd = detail::five_point(h_of, 4, Eigen::Vector4d(1e-4 * z.tau, 1e-4, 1e-4, 1e-2));
      worst[0] = std::max(worst[0], detail::column_error(Jh, Jh_fd));

      // zeta against the pose.
      auto zeta_of = [&](const Eigen::VectorXd& d) {
        const PhysicalParams p = model.params(right_plus(T, Twist(d)), xi_s, xi_p);
        return Eigen::Vector4d(p.tau, z.phi + wrap_angle(p.phi - z.phi), p.theta, p.mu);
      };
      const double rho = T.r().norm();
      Twist step;
      step << Vector3::Constant(1e-4 * rho), Vector3::Constant(1e-4);
      const Matrix46 Psi = model.psi(T, xi_s, xi_p);
      worst[1] = std::max(worst[1], detail::row_error(Psi, detail::five_point(zeta_of, 6, step)));

      // Transition and noise Jacobians.
      const Pose f0 = evolve_relative(T, xi_s, xi_p, Twist::Zero(), dt);
      auto state_of = [&](const Eigen::VectorXd& d) {
        return Eigen::VectorXd(right_minus(evolve_relative(right_plus(T, Twist(d)), xi_s, xi_p, Twist::Zero(), dt), f0));
      };
      auto noise_of = [&](const Eigen::VectorXd& d) {
        return Eigen::VectorXd(right_minus(evolve_relative(T, xi_s, xi_p, Twist(d), dt), f0));
      };
      const Twist small = Twist::Constant(1e-4);
      worst[2] = std::max(worst[2], detail::column_error(jac_state_F(xi_p, dt), detail::five_point(state_of, 6, small)));
      worst[3] = std::max(worst[3], detail::column_error(jac_control_G(f0, xi_s, dt), detail::five_point(noise_of, 6, small)));

      // Full measurement Jacobian.
      Eigen::MatrixXd H = jac_measurement_H(model, T, xi_s, xi_p).H;
      if (corrupt) H.col(trial % 6) *= 1.01;
      auto y_of = [&](const Eigen::VectorXd& d) { return model.predict(right_plus(T, Twist(d)), xi_s, xi_p); };
      worst[4] = std::max(worst[4], detail::column_error(H, detail::five_point(y_of, 6, step)));
    }
    const char* names[5] = {"J_h", "J_T", "F", "G", "H"};
    out.passed = true;
    std::ostringstream os;
    for (int k = 0; k < 5; ++k) {
      out.passed = out.passed && worst[k] < tol;
      os << (k ? " " : "") << names[k] << "=" << detail::format_error(worst[k]);
    }
    out.detail = os.str() + " (max rel err, " + std::to_string(configs) + " configs)";
  });
}

/// Exp/Log round trip, adjoint identity and right Jacobian on `samples` draws each.
inline Outcome lie_battery(int samples, std::uint64_t seed) {
  return timed("lie", [&](Outcome& out) {
    detail::Rng rng(seed);
    double round = 0, adj = 0, jr = 0;
    for (int i = 0; i < samples; ++i) {
      const Twist xi = make_twist(detail::random_vec3(rng, 10.0), detail::random_axis_angle(rng, kPi - 1e-3));
      round = std::max(round, (log_map(exp_map(xi)) - xi).norm() / std::max(1.0, xi.norm()));

      const Pose T = detail::random_pose(rng, 50.0);
      const Twist eta = make_twist(detail::random_vec3(rng, 2.0), detail::random_axis_angle(rng, 1.0));
      const Matrix4 lhs = (T * exp_map(eta) * T.inverse()).matrix();
      const Matrix4 rhs = exp_map(adjoint(T) * eta).matrix();
      adj = std::max(adj, (lhs - rhs).norm() / std::max(1.0, rhs.norm()));

      const Twist x = make_twist(detail::random_vec3(rng, 3.0), detail::random_axis_angle(rng, 2.5));
      const Pose base = exp_map(x);
      auto f = [&](const Eigen::VectorXd& d) { return Eigen::VectorXd(right_minus(exp_map(x + Twist(d)), base)); };
      jr = std::max(jr, detail::column_error(right_jacobian(x), detail::five_point(f, 6, Twist::Constant(1e-4))));
    }
    out.passed = round < 1e-9 && adj < 1e-9 && jr < 1e-5;
    out.detail = "exp/log=" + detail::format_error(round) + " adjoint=" + detail::format_error(adj) +
                 " J_r=" + detail::format_error(jr) + " (" + std::to_string(samples) + " samples)";
  });
}

inline double logdet_spd(const Eigen::Matrix4d& A) {
  const Eigen::Vector4d d = A.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::LLT<Eigen::Matrix4d> llt(d.asDiagonal() * A * d.asDiagonal());
  return 2.0 * Eigen::Matrix4d(llt.matrixL()).diagonal().array().log().sum() - 2.0 * d.array().log().sum();
}

/// -log det(A~^-1 + D_0 + D(xi)) against the scalar form, with D(xi) built from Psi_1 and Psi_2 directly.
inline Outcome identity_battery(int instances, std::uint64_t seed, double tol = 1e-8) {
  return timed("determinant identity", [&](Outcome& out) {
    detail::Rng rng(seed);
    double worst = 0;
    for (int i = 0; i < instances; ++i) {
      const EpochInstance ins = random_epoch_instance(rng);
      const QuadraticForm qf = build_quadratic_form(ins.E_inv, ins.A_tilde, ins.part);
      const Twist xi = make_twist(detail::random_vec3(rng, 5.0), detail::random_axis_angle(rng, 0.2));
      const Matrix46 Psi1 = ins.part.psi1();
      Matrix46 Psi2 = Matrix46::Zero();
      Psi2.block<1, 3>(3, 0) = (ins.part.M * ins.part.S * xi).transpose();
      const Eigen::Matrix4d D = Psi2 * ins.E_inv * (Psi1 + Psi2).transpose() + Psi1 * ins.E_inv * Psi2.transpose();
      const Eigen::Matrix4d full = ins.A_tilde.inverse() + Psi1 * ins.E_inv * Psi1.transpose() + D;
      const double direct = -logdet_spd(0.5 * (full + full.transpose()));
      const double scalar = -logdet_spd(qf.base) - std::log1p(qf.c0 * qf.value(xi));
      worst = std::max(worst, std::abs(direct - scalar) / std::max(1.0, std::abs(direct)));
    }
    out.passed = worst < tol;
    out.detail = "max rel diff " + detail::format_error(worst) + " over " + std::to_string(instances) + " instances";
  });
}

/// Relaxation bound, randomized extraction and grid-search comparison.
inline Outcome sdr_battery(int instances, std::uint64_t seed, int random_twists = 10000) {
  return timed("semidefinite relaxation", [&](Outcome& out) {
    detail::Rng rng(seed);
    double worst_gap = 0, worst_bound = -1e300, worst_feas = 0, worst_ratio = -1e300;
    bool ok = true;
    for (int i = 0; i < instances; ++i) {
      const EpochInstance ins = random_epoch_instance(rng);
      const RelaxationResult rel = solve_relaxation(homogenize(ins.qcqp));
      const GridResult grid = grid_search(ins.qcqp, ins.cons, 21);
      const double sampled = best_random_feasible(ins.qcqp, ins.cons, random_twists, rng);
      const Twist xi = randomize_extract(rel.Z, ins.qcqp, 200, rng);
      const double f = ins.qcqp.objective(xi);
      const double scale = std::max(std::abs(grid.value), 1e-300);
      worst_gap = std::max(worst_gap, rel.gap);
      // Positive means a feasible twist beats the bound.
      worst_bound = std::max(worst_bound, (std::max(sampled, grid.value) - rel.upper_bound) / scale);
      worst_feas = std::max(worst_feas, ins.qcqp.max_violation(xi));
      worst_ratio = std::max(worst_ratio, (grid.value - f) / scale);
      ok = ok && rel.gap < 1e-7 && rel.upper_bound >= sampled && rel.upper_bound >= grid.value - 1e-9 * scale &&
           ins.qcqp.max_violation(xi) <= 1e-9 && f >= grid.value - 0.05 * scale;
    }
    out.passed = ok;
    out.detail = "gap=" + detail::format_error(worst_gap) + " bound_excess=" + detail::format_error(worst_bound) +
                 " violation=" + detail::format_error(std::max(worst_feas, 0.0)) +
                 " shortfall_vs_grid=" + detail::format_error(worst_ratio) + " (" + std::to_string(instances) +
                 " instances)";
  });
}

/// Woodbury information step against the block recursion, and the bound
/// staying below the prior covariance through a full episode.
inline Outcome cpcrb_battery(int instances, std::uint64_t seed, const ScenarioConfig& episode_cfg) {
  return timed("cpcrb recursion", [&](Outcome& out) {
    detail::Rng rng(seed);
    std::normal_distribution<double> normal;
    double worst = 0;
    for (int i = 0; i < instances; ++i) {
      auto spd = [&](double floor) {
        Matrix6 A;
        for (int r = 0; r < 6; ++r)
          for (int c = 0; c < 6; ++c) A(r, c) = normal(rng);
        return Matrix6(A * A.transpose() + floor * Matrix6::Identity());
      };
      const Matrix6 I0 = spd(0.5);
      const Matrix6 F = jac_state_F(make_twist(detail::random_vec3(rng, 4.0), detail::random_axis_angle(rng, 0.3)), 0.25);
      Eigen::MatrixXd H(10, 6);
      for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 6; ++c) H(r, c) = normal(rng);
      const Covariance6 Q = spd(0.5) * 0.05;
      const double c = detail::uniform(rng, 0.1, 3.0);
      const Matrix6 a = fim_step(I0, F, H, Q, c).I;
      const Matrix6 b = fim_step_blocks(I0, F, H, Q, c);
      worst = std::max(worst, (a - b).norm() / a.norm());
    }

    const EpisodeTrace tr = run_episode(episode_cfg, split_seed(episode_cfg.seed, 0));
    double min_gap = 1e300;
    for (const EpochRecord& r : tr.epochs) {
      const Covariance6 diff = r.prior_cov - r.cpcrb_T;
      const double lmin = Eigen::SelfAdjointEigenSolver<Matrix6>(0.5 * (diff + diff.transpose())).eigenvalues()(0);
      min_gap = std::min(min_gap, lmin / r.prior_cov.norm());
    }
    out.passed = worst < 1e-9 && !tr.failed && min_gap >= -1e-12;
    out.detail = "max rel diff " + detail::format_error(worst) + ", min eig(E^-1 - CPCRB)/|E^-1| " +
                 detail::format_error(min_gap) + " over " + std::to_string(tr.epochs.size()) + " epochs" +
                 (tr.failed ? " (episode failed: " + tr.failure + ")" : "");
  });
}

/// Average NEES over `episodes` default-noise episodes and a noiseless tracking check.
inline Outcome nees_battery(ScenarioConfig cfg, int episodes, int threads) {
  return timed("filter consistency", [&](Outcome& out) {
    cfg.mc_runs = episodes;
    const MonteCarloResult r = monte_carlo(cfg, threads);
    double mean = 0;
    for (double v : r.nees) mean += v;
    mean /= static_cast<double>(r.nees.size());

    ScenarioConfig quiet = cfg;
    quiet.sample_noise = false;
    quiet.r_wp_hat0 = quiet.T_wp0.r();
    const EpisodeTrace tr = run_episode(quiet, split_seed(quiet.seed, 0));
    double worst = tr.failed ? 1e300 : 0.0;
    for (const EpochRecord& e : tr.epochs) worst = std::max(worst, (e.T_hat.r() - e.T_sp.r()).norm());

    out.passed = mean >= 3.0 && mean <= 12.0 && worst < 1e-6;
    out.detail = "mean NEES " + detail::format_error(mean) + " (target 6, band [3, 12]) over " +
                 std::to_string(episodes - r.failures) + " episodes; noiseless max position error " +
                 detail::format_error(worst) + " m";
  });
}

}  // namespace uavisac::verify
