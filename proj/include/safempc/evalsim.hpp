#pragma once

#include <functional>
#include <random>
#include <string>

#include "safempc/mpc.hpp"

namespace safempc {

/// Autoregressive disturbance d_{t+1} = alpha d_t + (1 - alpha) d_hat with
/// d_hat drawn uniformly over D; every iterate stays in D by convexity.
class DisturbanceProcess {
 public:
  DisturbanceProcess(Polytope D, double alpha, std::uint64_t seed);

  /// Advances the recursion and returns the new disturbance.
  Vec step();

  const Vec& current() const { return d_; }
  double alpha() const { return alpha_; }

 private:
  Vec sample_uniform_d();

  Polytope D_;
  double alpha_;
  Vec d_;
  Vec lo_, hi_;
  std::mt19937_64 rng_;
};

/// State-feedback callable returning the applied input u_t = policy(x_t).
using FirstActionPolicy = std::function<Vec(const Vec&)>;

struct ClosedLoopResult {
  std::vector<Vec> states;   ///< x_0..x_T
  std::vector<Vec> inputs;   ///< u_0..u_{T-1}
  double cost = 0.0;         ///< sum of stage costs plus terminal cost
  std::vector<double> step_seconds;  ///< wall time of each policy call
  int violations = 0;        ///< states with F_s x > g_s + 1e-7 on any row
  bool failed = false;
  std::string failure;
};

/// Simulates x_{t+1} = A x_t + B u_t + d_t for T steps. Only the policy
/// call is timed; cost uses the realized (disturbed) trajectory. A policy
/// exception marks the trajectory failed and stops the rollout.
ClosedLoopResult run_closed_loop(const FirstActionPolicy& policy, const LinearSystem& sys,
                                 const CostFunction& cost, const Vec& x0, int T,
                                 DisturbanceProcess& proc, bool timing);

/// A named policy entry for the benchmark table: the closed-loop action map
/// plus the open-loop sequence map used for the suboptimality column.
struct BenchPolicy {
  std::string name;
  FirstActionPolicy act;
  std::function<Vec(const Vec&)> sequence;
};

struct BenchRow {
  std::string policy;
  std::uint64_t seed = 0;
  double trajectory_cost = 0.0;
  double mean_action_seconds = 0.0;
  int violations = 0;
  double delta_open_loop = 0.0;
  bool failed = false;
};

struct BenchSummary {
  std::string policy;
  double cost_q1 = 0.0, cost_median = 0.0, cost_q3 = 0.0;
  double mean_action_seconds = 0.0;
  double delta_open_loop = 0.0;
  int total_violations = 0;
};

/// Runs n_traj closed-loop trajectories of length T per policy from shared
/// initial conditions, computes the open-loop delta on an N=100 validation
/// set, and returns one row per (policy, trajectory). With timing disabled
/// all timing columns are exactly 0 so the table is seed-deterministic;
/// with timing enabled a warmup call per policy precedes measurement.
std::vector<BenchRow> benchmark_suite(const std::vector<BenchPolicy>& policies,
                                      const LinearSystem& sys, const CondensedMpc& mpc,
                                      int n_traj, int T, std::uint64_t seed, bool timing,
                                      std::vector<BenchSummary>* summaries = nullptr);

}  // namespace safempc
