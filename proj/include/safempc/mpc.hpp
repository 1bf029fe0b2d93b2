#pragma once

#include <memory>

#include "safempc/polytope.hpp"
#include "safempc/solve_report.hpp"

namespace safempc {

/// Differentiable cost callback; non-quadratic costs plug in here for the
/// training loop. The online QP oracle requires the quadratic default.
struct CostFunction {
  virtual ~CostFunction() = default;
  virtual double stage(const Vec& x, const Vec& u) const = 0;
  virtual double terminal(const Vec& x) const = 0;
  virtual Vec stage_dx(const Vec& x, const Vec& u) const = 0;
  virtual Vec stage_du(const Vec& x, const Vec& u) const = 0;
  virtual Vec terminal_dx(const Vec& x) const = 0;
};

/// l(x,u) = ||x||^2 + c1 ||u||^2,  l_F(x) = c2 ||x||^2.
struct QuadraticCost final : CostFunction {
  double c1 = 1.0;
  double c2 = 1.0;
  QuadraticCost(double c1_, double c2_) : c1(c1_), c2(c2_) {}
  double stage(const Vec& x, const Vec& u) const override {
    return x.squaredNorm() + c1 * u.squaredNorm();
  }
  double terminal(const Vec& x) const override { return c2 * x.squaredNorm(); }
  Vec stage_dx(const Vec& x, const Vec&) const override { return 2.0 * x; }
  Vec stage_du(const Vec&, const Vec& u) const override { return 2.0 * c1 * u; }
  Vec terminal_dx(const Vec& x) const override { return 2.0 * c2 * x; }
};

double stage_cost(const Vec& x, const Vec& u, double c1);
double terminal_cost(const Vec& x, double c2);

/// Discrete-time constrained system x+ = Ax + Bu + d with state set X,
/// input set U, disturbance set D, robust control invariant set S and
/// target set T = tighten(S, D) (recomputed and checked at construction).
struct LinearSystem {
  Mat A, B;
  Polytope X, U, D, S, T;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }

  /// Builds T = tighten(S, D); throws if dimensions clash or S is not
  /// contained in X.
  static LinearSystem make(Mat A, Mat B, Polytope X, Polytope U, Polytope D, Polytope S);
};

/// Horizon-condensed MPC data: stacked prediction x_stack = M0 x0 + Mu u
/// over x_1..x_tau and the polytopic constraint blocks of the feasible set.
struct CondensedMpc {
  int horizon = 0;
  int n = 0, m = 0;
  Mat A, B;
  double c1 = 1.0, c2 = 1.0;
  std::shared_ptr<const CostFunction> cost;

  Mat M0;        ///< (n tau) x n stacked transition map
  Mat Mu;        ///< (n tau) x (m tau) lower-block-triangular input map
  Mat Hs, Hu;    ///< block-diagonal replications of F_s (target) and F_u
  Vec hs_tilde;  ///< stacked tightened target offsets
  Vec hu;        ///< stacked input offsets

  // Cached products for per-state work: one GEMV each.
  Mat HsM0;      ///< Hs * M0
  Mat Gu;        ///< [Hs * Mu; Hu], the u-space constraint matrix
  Mat Qqp;       ///< condensed quadratic cost Hessian (quadratic default)
  Mat q_of_x0;   ///< linear-term map: q(x0) = q_of_x0 * x0
  Mat P0;        ///< constant-term map: const(x0) = x0' P0 x0

  int seq_dim() const { return m * horizon; }
  /// Stacked constraint offset h(x0) = [hs_tilde - HsM0 x0; hu].
  Vec constraint_offset(const Vec& x0) const;
};

/// Builds the condensed matrices from the system's target/input sets.
CondensedMpc condense(const LinearSystem& sys, int horizon, double c1, double c2,
                      std::shared_ptr<const CostFunction> cost = nullptr);

/// F(x0) = {u | Gu u <= h(x0)} as a polytope in R^{m tau}.
Polytope feasible_set(const CondensedMpc& mpc, const Vec& x0);

/// Nominal rollout x_{k+1} = A x_k + B u_k for the stacked input sequence.
/// Returns x_1..x_tau stacked.
Vec predict_states(const CondensedMpc& mpc, const Vec& x0, const Vec& useq);

/// Sum of stage costs over k = 0..tau-1 plus terminal cost, by nominal
/// rollout through the cost callback.
double trajectory_cost(const CondensedMpc& mpc, const Vec& x0, const Vec& useq);

struct OracleResult {
  Vec useq;
  double cost = 0.0;
  SolveReport report;
};

/// Ground-truth receding-horizon solution: the condensed QP over F(x0).
/// Requires the quadratic default cost.
OracleResult solve_mpc_oracle(const CondensedMpc& mpc, const Vec& x0, double tol = 1e-8);

}  // namespace safempc
