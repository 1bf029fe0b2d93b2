#pragma once

#include <optional>

#include "safempc/solve_report.hpp"

namespace safempc {

/// Linear program
///   min  c'x
///   s.t. G x <= h,  Aeq x = beq (optional, 0 rows when absent).
struct LpProblem {
  Vec c;
  Mat G;
  Vec h;
  Mat Aeq;
  Vec beq;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_ineq() const { return static_cast<int>(G.rows()); }
  int num_eq() const { return static_cast<int>(Aeq.rows()); }

  /// Throws std::invalid_argument on inconsistent dimensions or k = 0.
  void validate() const;
};

struct LpSettings {
  double tol = 1e-9;
  int max_iter = 50000;      // hard cap; stagnation exits much earlier
  double step_fraction = 0.99;
  double divergence_norm = 1e10;
};

/// Primal-dual interior-point solver (Mehrotra predictor-corrector) for
/// dense small/medium LPs. Infeasibility and unboundedness are detected
/// from diverging iterates and confirmed against the standard Farkas /
/// ray certificates; the certificate ray is returned in `dual` / `x`.
SolveReport solve_lp(const LpProblem& p, const LpSettings& settings,
                     const std::optional<Vec>& x0 = std::nullopt);

SolveReport solve_lp(const LpProblem& p, double tol = 1e-9);

}  // namespace safempc
