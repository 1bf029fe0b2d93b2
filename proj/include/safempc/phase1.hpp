#pragma once

#include <optional>

#include <nlohmann/json_fwd.hpp>

#include "safempc/mpc.hpp"

namespace safempc {

/// Affine feasibility policy u = W x + w with a certified strict margin:
/// the max-violation objective is at most `margin` (< 0) everywhere on S.
struct AffinePhaseOne {
  Mat W;
  Vec w;
  double margin = 0.0;

  Vec eval(const Vec& x) const { return W * x + w; }

  nlohmann::json to_json() const;
  static AffinePhaseOne from_json(const nlohmann::json& j);
};

/// Strictly interior point of F(x0) together with its per-constraint slack.
struct PhaseOneResult {
  Vec mu0;     ///< stacked inputs in R^{m tau}
  Vec slack;   ///< h(x0) - Gu mu0, all positive
  double margin = 0.0;  ///< min slack
};

/// One-step feasibility LP: min s over (u, s) subject to
///   F_s (A x0 + B u) <= g~_s + s 1,   F_u u <= g_u + s 1.
/// Negative s certifies an interior point of the safe action set.
std::pair<Vec, double> max_violation_lp(const LinearSystem& sys, const Vec& x0,
                                        double tol = 1e-9);

/// The same objective evaluated at a fixed u (no optimization).
double evaluate_violation(const LinearSystem& sys, const Vec& x0, const Vec& u);

/// Affine-policy synthesis: min s over (W, w, s) subject to the polytope
/// containment S subset Y(s), encoded as an LP with a nonnegative
/// multiplier matrix. Returns nullopt when the optimum is not strictly
/// negative (no affine Phase I policy exists).
std::optional<AffinePhaseOne> synthesize_affine(const LinearSystem& sys, double tol = 1e-9);

/// Certified max-violation of a fixed affine policy over all of S (the
/// containment LP with (W, w) frozen); used to validate external policies.
double certify_affine(const LinearSystem& sys, const Mat& W, const Vec& w);

/// Rolls the affine policy through the nominal dynamics for tau steps and
/// stacks the inputs; by construction the result is strictly inside F(x0).
/// Throws std::runtime_error if the margin is not positive (a certification
/// bug upstream).
PhaseOneResult rollout_phase1(const CondensedMpc& mpc, const LinearSystem& sys,
                              const AffinePhaseOne& p1, const Vec& x0);

/// Per-step feasibility LPs along the nominal rollout; the fallback when no
/// affine policy exists. Throws std::runtime_error when some step has no
/// strictly safe action (x0 outside S, or S is not an RCI).
PhaseOneResult phase1_fallback_lp(const CondensedMpc& mpc, const LinearSystem& sys,
                                  const Vec& x0);

}  // namespace safempc
