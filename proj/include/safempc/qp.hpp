#pragma once

#include "safempc/solve_report.hpp"

namespace safempc {

/// Convex quadratic program
///   min  0.5 u'Qu + q'u
///   s.t. G u <= h
/// with Q symmetric positive semidefinite.
struct QpProblem {
  Mat Q;
  Vec q;
  Mat G;
  Vec h;

  int num_vars() const { return static_cast<int>(q.size()); }
  int num_ineq() const { return static_cast<int>(G.rows()); }

  /// Throws std::invalid_argument on bad dimensions, asymmetric or
  /// indefinite Q. Q = 0 is accepted only with allow_zero_hessian.
  void validate(bool allow_zero_hessian = false) const;
};

/// Operator-splitting (ADMM) settings, OSQP-style with over-relaxation,
/// adaptive rho and an active-set polish pass for high-accuracy duals.
struct QpSettings {
  double tol = 1e-8;
  int max_iter = 50000;
  double rho = 0.1;
  bool adaptive_rho = true;
  double sigma = 1e-6;
  double alpha = 1.6;  // over-relaxation
  bool polish = true;
  bool allow_zero_hessian = false;
  int check_every = 20;
};

SolveReport solve_qp(const QpProblem& p, const QpSettings& settings);

SolveReport solve_qp(const QpProblem& p, double tol = 1e-8);

/// KKT residuals (stationarity, primal violation, complementarity) of a
/// primal/dual pair; used both for convergence checks and by tests.
struct KktResidual {
  double stationarity;
  double primal;
  double complementarity;
  double max() const { return std::max({stationarity, primal, complementarity}); }
};

KktResidual kkt_residual(const QpProblem& p, const Vec& u, const Vec& lam);

}  // namespace safempc
