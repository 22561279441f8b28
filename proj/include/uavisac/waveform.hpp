#pragma once

// UPA steering vectors, the OFDM resource-element grid, the LOS channel
// vector and measurement synthesis. Channel vectors are laid out as
// omega (x) conj(a_T) (x) a_R, i.e. index m * (N_T N_R) + t * N_R + r.

#include <cmath>
#include <complex>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "uavisac/errors.hpp"

namespace uavisac {

using Complex = std::complex<double>;
using VectorXc = Eigen::VectorXcd;
using MatrixXc = Eigen::MatrixXcd;

inline constexpr double kSpeedOfLight = 299792458.0;

struct UpaConfig {
  int nt_x = 2;
  int nt_y = 2;
  int nr_x = 2;
  int nr_y = 2;

  [[nodiscard]] int n_tx() const { return nt_x * nt_y; }
  [[nodiscard]] int n_rx() const { return nr_x * nr_y; }

  void validate() const {
    if (nt_x < 1 || nt_y < 1 || nr_x < 1 || nr_y < 1) {
      throw Error(ErrorKind::Config, "UPA antenna counts must be >= 1");
    }
  }
};

/// Sensing resource elements (subcarrier l_m, symbol k_m) and OFDM numerology.
struct ReGrid {
  std::vector<std::pair<int, int>> res;
  double f0 = 15e3;               // subcarrier spacing [Hz]
  double Ts = 1.0 / 15e3 / 0.93;  // symbol duration incl. cyclic prefix [s]
  double fc = 2.4e9;              // carrier [Hz]

  [[nodiscard]] int size() const { return static_cast<int>(res.size()); }
  [[nodiscard]] double wavelength() const { return kSpeedOfLight / fc; }

  void validate() const {
    if (res.empty()) throw Error(ErrorKind::Config, "RE grid must contain at least one element");
    std::set<std::pair<int, int>> seen(res.begin(), res.end());
    if (seen.size() != res.size()) throw Error(ErrorKind::Config, "RE grid contains duplicates");
    if (!(f0 > 0.0) || !(Ts > 1.0 / f0)) {
      throw Error(ErrorKind::Config, "symbol duration must exceed 1/f0");
    }
    if (!(fc > 0.0)) throw Error(ErrorKind::Config, "carrier frequency must be positive");
  }

  /// n_re elements on a diagonal lattice over an L x K grid: l = m mod L, k = m mod K.
  /// The cyclic prefix is guard_fraction of the full symbol duration.
  static ReGrid diagonal(int L, int K, int n_re, double f0, double guard_fraction, double fc) {
    if (L < 1 || K < 1 || n_re < 1 || n_re > L * K) {
      throw Error(ErrorKind::Config, "diagonal RE lattice needs 1 <= n_re <= L*K");
    }
    ReGrid g;
    g.f0 = f0;
    g.Ts = (1.0 / f0) / (1.0 - guard_fraction);
    g.fc = fc;
    std::set<std::pair<int, int>> used;
    int shift = 0;
    for (int m = 0; static_cast<int>(g.res.size()) < n_re; ++m) {
      std::pair<int, int> re{m % L, (m + shift) % K};
      if (m > 0 && m % (L * K) == 0) ++shift;
      if (used.insert(re).second) g.res.push_back(re);
      if (m > 4 * L * K) break;
    }
    if (g.size() != n_re) throw Error(ErrorKind::Config, "could not place distinct REs");
    return g;
  }
};

/// zeta = [tau, phi, theta, mu] plus the complex gain b.
struct PhysicalParams {
  double tau = 0.0;    // [s]
  double phi = 0.0;    // azimuth [rad], (-pi, pi]
  double theta = 0.0;  // polar angle [rad], [0, pi]
  double mu = 0.0;     // Doppler [Hz]
  Complex b{1.0, 0.0};

  [[nodiscard]] Eigen::Vector4d zeta() const { return {tau, phi, theta, mu}; }
};

/// Block-diagonal pilot X = blkdiag(x_1^T, ..., x_M^T), stored as M rows of length N_T.
struct PilotMatrix {
  MatrixXc rows;
  double power = 1.0;
};

/// sqrt(lambda_c^2 sigma_rcs / (4 pi)^3).
inline double radar_constant(double fc, double sigma_rcs) {
  const double lambda = kSpeedOfLight / fc;
  return std::sqrt(lambda * lambda * sigma_rcs / std::pow(4.0 * kPi, 3));
}

/// One axis of the UPA response: [1, -e^{j pi n u}, ...] / sqrt(N), n >= 1.
inline VectorXc axis_response(double u, int n) {
  VectorXc a(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  a(0) = scale;
  for (int i = 1; i < n; ++i) a(i) = -scale * std::polar(1.0, kPi * i * u);
  return a;
}

/// a = a_y (x) a_x, unit norm.
inline VectorXc steering_vector(double theta, double phi, int nx, int ny) {
  const double st = std::sin(theta);
  const VectorXc ax = axis_response(st * std::cos(phi), nx);
  const VectorXc ay = axis_response(st * std::sin(phi), ny);
  VectorXc a(nx * ny);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) a(iy * nx + ix) = ay(iy) * ax(ix);
  }
  return a;
}

inline VectorXc omega_vector(double tau, double mu, const ReGrid& grid) {
  VectorXc w(grid.size());
  for (int m = 0; m < grid.size(); ++m) {
    const auto [l, k] = grid.res[m];
    w(m) = std::polar(1.0, -2.0 * kPi * l * grid.f0 * tau) * std::polar(1.0, 2.0 * kPi * mu * k * grid.Ts);
  }
  return w;
}

inline Complex channel_gain(double rho, double phase, double a_const) {
  if (rho < 1e-3) throw Error(ErrorKind::DegenerateRange, "range below 1 mm");
  return std::polar(a_const / (rho * rho), phase);
}

/// h = b * omega (x) conj(a_T) (x) a_R; a single (theta, phi) feeds both arrays.
inline VectorXc channel_vector(const PhysicalParams& z, const UpaConfig& upa, const ReGrid& grid) {
  const VectorXc w = omega_vector(z.tau, z.mu, grid);
  const VectorXc aT = steering_vector(z.theta, z.phi, upa.nt_x, upa.nt_y).conjugate();
  const VectorXc aR = steering_vector(z.theta, z.phi, upa.nr_x, upa.nr_y);
  const int nt = upa.n_tx();
  const int nr = upa.n_rx();
  VectorXc h(grid.size() * nt * nr);
  for (int m = 0; m < grid.size(); ++m) {
    for (int t = 0; t < nt; ++t) {
      const Complex wt = z.b * w(m) * aT(t);
      for (int r = 0; r < nr; ++r) h((m * nt + t) * nr + r) = wt * aR(r);
    }
  }
  return h;
}

/// (X (x) I_{N_R}) v for any v laid out like a channel vector.
inline VectorXc apply_pilots(const PilotMatrix& X, const VectorXc& v, const UpaConfig& upa) {
  const int M = static_cast<int>(X.rows.rows());
  const int nt = upa.n_tx();
  const int nr = upa.n_rx();
  if (X.rows.cols() != nt || v.size() != static_cast<Eigen::Index>(M) * nt * nr) {
    throw Error(ErrorKind::ShapeMismatch, "pilot matrix and channel vector sizes disagree");
  }
  VectorXc y = VectorXc::Zero(static_cast<Eigen::Index>(M) * nr);
  for (int m = 0; m < M; ++m) {
    for (int t = 0; t < nt; ++t) {
      const Complex x = X.rows(m, t);
      y.segment(m * nr, nr) += x * v.segment((m * nt + t) * nr, nr);
    }
  }
  return y;
}

/// Column-wise apply_pilots.
inline MatrixXc apply_pilots(const PilotMatrix& X, const MatrixXc& V, const UpaConfig& upa) {
  MatrixXc out(X.rows.rows() * upa.n_rx(), V.cols());
  for (Eigen::Index c = 0; c < V.cols(); ++c) out.col(c) = apply_pilots(X, VectorXc(V.col(c)), upa);
  return out;
}

/// Circularly-symmetric CN(0, sigma^2 I) draw.
template <class Rng>
VectorXc complex_noise(Eigen::Index n, double sigma, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sigma / std::sqrt(2.0));
  VectorXc z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = normal(rng);
    const double im = normal(rng);
    z(i) = {re, im};
  }
  return z;
}

template <class Rng>
VectorXc synthesize_measurement(const VectorXc& h, const PilotMatrix& X, const UpaConfig& upa, double sigma_z,
                                Rng& rng) {
  VectorXc y = apply_pilots(X, h, upa);
  if (sigma_z > 0.0) y += complex_noise(y.size(), sigma_z, rng);
  return y;
}

/// [Re(y); Im(y)].
inline Eigen::VectorXd augment(const VectorXc& y) {
  Eigen::VectorXd out(2 * y.size());
  out << y.real(), y.imag();
  return out;
}

inline Eigen::MatrixXd augment(const MatrixXc& J) {
  Eigen::MatrixXd out(2 * J.rows(), J.cols());
  out << J.real(), J.imag();
  return out;
}

/// Per-RE pilots uniform on the complex sphere of radius sqrt(power).
template <class Rng>
PilotMatrix build_pilot_matrix(const UpaConfig& upa, const ReGrid& grid, double power, Rng& rng) {
  if (!(power > 0.0)) throw Error(ErrorKind::Config, "pilot power must be positive");
  PilotMatrix X;
  X.power = power;
  X.rows.resize(grid.size(), upa.n_tx());
  for (int m = 0; m < grid.size(); ++m) {
    VectorXc g = complex_noise(upa.n_tx(), 1.0, rng);
    while (g.norm() < 1e-12) g = complex_noise(upa.n_tx(), 1.0, rng);
    X.rows.row(m) = (std::sqrt(power) / g.norm()) * g.transpose();
  }
  return X;
}

}  // namespace uavisac
