#pragma once

// Dense primal-dual interior-point solver for small semidefinite programs in
// standard form
//   min <C, X>  s.t.  <A_i, X> = b_i,  X >= 0,
// with dual  max b^T y  s.t.  S = C - sum_i y_i A_i >= 0.
// Search direction is HKM; the centering parameter is fixed at one half.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "uavisac/errors.hpp"

namespace uavisac {

struct SdpProblem {
  Eigen::MatrixXd C;
  std::vector<Eigen::MatrixXd> A;
  Eigen::VectorXd b;
};

struct SdpOptions {
  double tol = 1e-9;         // relative duality gap
  double feas_tol = 1e-10;   // relative primal/dual residuals
  int max_iterations = 100;
  double sigma = 0.5;        // centering: target mu shrinks by this factor
  double step_fraction = 0.95;
  double divergence = 1e12;  // |y| or trace(X) beyond this signals infeasibility
};

struct SdpSolution {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd S;
  double primal = 0.0;  // <C, X>
  double dual = 0.0;    // b^T y
  double gap = 0.0;     // relative duality gap
  int iterations = 0;
};

namespace detail {

inline double frob(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) { return (A.array() * B.array()).sum(); }

/// Largest alpha in (0, 1] with X + alpha dX still positive definite, times frac.
inline double max_step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& dX, double frac) {
  const Eigen::LLT<Eigen::MatrixXd> llt(X);
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::MatrixXd Linv = L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(X.rows(), X.cols()));
  Eigen::MatrixXd M = Linv * dX * Linv.transpose();
  M = 0.5 * (M + M.transpose());
  const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(M, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (lmin >= 0.0) return 1.0;
  return std::min(1.0, frac * (-1.0 / lmin));
}

inline Eigen::MatrixXd sym(const Eigen::MatrixXd& A) { return 0.5 * (A + A.transpose()); }

}  // namespace detail

inline SdpSolution solve_sdp(const SdpProblem& p, const SdpOptions& opt = {}) {
  const Eigen::Index n = p.C.rows();
  const Eigen::Index m = static_cast<Eigen::Index>(p.A.size());
  if (p.C.cols() != n || p.b.size() != m) throw Error(ErrorKind::ShapeMismatch, "SDP data sizes disagree");
  for (const auto& Ai : p.A) {
    if (Ai.rows() != n || Ai.cols() != n) throw Error(ErrorKind::ShapeMismatch, "constraint matrix size");
  }

  const double b_scale = 1.0 + p.b.norm();
  const double c_scale = 1.0 + p.C.norm();
  Eigen::MatrixXd X = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd S = Eigen::MatrixXd::Identity(n, n) * std::max(1.0, std::sqrt(c_scale));
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  auto apply_A = [&](const Eigen::MatrixXd& Z) {
    Eigen::VectorXd out(m);
    for (Eigen::Index i = 0; i < m; ++i) out(i) = detail::frob(p.A[i], Z);
    return out;
  };
  auto apply_At = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < m; ++i) out += v(i) * p.A[i];
    return out;
  };

  SdpSolution sol;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd rp = p.b - apply_A(X);
    const Eigen::MatrixXd Rd = p.C - apply_At(y) - S;
    const double primal = detail::frob(p.C, X);
    const double dual = p.b.dot(y);
    const double gap = std::abs(primal - dual) / (1.0 + std::abs(primal) + std::abs(dual));
    const double mu = detail::frob(X, S) / static_cast<double>(n);

    sol.iterations = it;
    if (gap < opt.tol && rp.norm() / b_scale < opt.feas_tol && Rd.norm() / c_scale < opt.feas_tol &&
        mu * n / (1.0 + std::abs(primal)) < opt.tol) {
      sol.X = X;
      sol.y = y;
      sol.S = S;
      sol.primal = primal;
      sol.dual = dual;
      sol.gap = gap;
      return sol;
    }
    if (y.norm() > opt.divergence || X.trace() > opt.divergence) {
      throw Error(ErrorKind::Infeasible, "interior-point iterates diverged");
    }

    const Eigen::LLT<Eigen::MatrixXd> Sllt(S);
    const Eigen::MatrixXd Sinv = Sllt.solve(Eigen::MatrixXd::Identity(n, n));

    // Schur complement M_ij = tr(A_i X A_j S^-1).
    std::vector<Eigen::MatrixXd> XAS(m);
    for (Eigen::Index j = 0; j < m; ++j) XAS[j] = X * p.A[j] * Sinv;
    Eigen::MatrixXd M(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) M(i, j) = detail::frob(p.A[i], XAS[j].transpose());

    const Eigen::MatrixXd target = opt.sigma * mu * Sinv - X - X * Rd * Sinv;
    const Eigen::VectorXd rhs = rp - apply_A(detail::sym(target));
    const Eigen::VectorXd dy = M.partialPivLu().solve(rhs);
    const Eigen::MatrixXd dS = Rd - apply_At(dy);
    const Eigen::MatrixXd dX = detail::sym(opt.sigma * mu * Sinv - X - X * dS * Sinv);

    const double ap = detail::max_step(X, dX, opt.step_fraction);
    const double ad = detail::max_step(S, dS, opt.step_fraction);
    X = detail::sym(X + ap * dX);
    y += ad * dy;
    S = detail::sym(S + ad * dS);
    if (!X.allFinite() || !S.allFinite() || !y.allFinite()) {
      throw Error(ErrorKind::Infeasible, "interior-point iterates became non-finite");
    }
  }

  const Eigen::VectorXd rp = p.b - apply_A(X);
  if (rp.norm() / b_scale > 1e-6) throw Error(ErrorKind::Infeasible, "primal residual did not vanish");
  throw Error(ErrorKind::MaxIterations, "interior-point method did not reach the requested gap");
}

}  // namespace uavisac
