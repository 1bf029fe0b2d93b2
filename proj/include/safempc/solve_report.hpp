#pragma once

#include <string>

#include "safempc/linalg.hpp"

namespace safempc {

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

std::string to_string(SolveStatus s);

/// Outcome of an LP/QP solve. `x`, `objective` and the duals are only
/// meaningful for status Optimal; for Infeasible/Unbounded, `x` holds the
/// (normalized) certificate ray.
struct SolveReport {
  SolveStatus status = SolveStatus::MaxIter;
  Vec x;
  double objective = 0.0;
  Vec dual;     ///< multipliers of the inequality rows (>= 0)
  Vec dual_eq;  ///< multipliers of the equality rows (empty when none)
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  double seconds = 0.0;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

}  // namespace safempc
