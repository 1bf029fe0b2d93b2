#pragma once

#include <functional>
#include <string>

#include "safempc/gauge_policy.hpp"

namespace safempc {

enum class PolicyKind { Gauge, Penalty, Projection };

std::string to_string(PolicyKind k);
PolicyKind policy_kind_from_string(const std::string& s);

struct TrainConfig {
  PolicyKind kind = PolicyKind::Gauge;
  int width = 64;
  int hidden_layers = 2;
  double lr = 1e-3;
  int batch = 256;  ///< M, fresh initial conditions per iteration
  int iters = 2000;
  std::uint64_t seed = 0;
  double beta = 10.0;  ///< penalty weight (penalty kind)
  int n_val = 100;
  int val_every = 50;
  Squash squash = Squash::Tanh;
  double qp_tol = 1e-6;  ///< projection-layer tolerance inside training
};

struct TrainTrace {
  std::vector<double> loss;        ///< training objective per iteration
  std::vector<int> val_iteration;  ///< checkpoint iterations
  std::vector<double> val_delta;   ///< fraction suboptimality per checkpoint
  std::vector<double> seconds;     ///< cumulative wall time per checkpoint
  double max_constraint_residual = 0.0;  ///< safety spot-checks (gauge/projection)
  int resampled_validation = 0;
  int ls_fallbacks = 0;  ///< projection backward rank-deficiency count
};

struct TrainResult {
  MlpParams params;  ///< best-validation parameters
  TrainTrace trace;
  double best_delta = 0.0;
};

/// Unsupervised training loop: per iteration, sample a fresh batch from S,
/// push it through the policy, roll the nominal dynamics, average the
/// horizon cost, backpropagate, take an Adam step. Throws on non-finite loss.
/// `p1` is required for the gauge kind and ignored otherwise.
TrainResult train(const LinearSystem& sys, const CondensedMpc& mpc,
                  const AffinePhaseOne* p1, const TrainConfig& cfg);

/// Penalty-baseline objective on a batch: mean horizon cost plus beta times
/// the summed positive part of the target-set violations along the nominal
/// rollouts. Policy outputs are squashed onto the input box by scaled tanh.
/// Rejects systems whose input set is not an axis-aligned box.
double penalty_loss(const std::vector<Vec>& batch, const MlpParams& params, double beta,
                    const LinearSystem& sys, const CondensedMpc& mpc);

struct ProjectionCache {
  Vec v;        ///< raw network output
  Vec useq;     ///< projected point
  Vec lam;      ///< projection multipliers
  Vec offsets;  ///< constraint offsets h(x0)
  bool ls_fallback = false;
};

/// Euclidean projection of the raw output v onto F(x0) via the QP layer.
Vec projection_forward(const CondensedMpc& mpc, const Vec& x0, const Vec& v,
                       double qp_tol, ProjectionCache* cache = nullptr);

/// Implicit differentiation through the projection KKT system at the active
/// set (slack threshold 1e-7); falls back to a least-squares solve when the
/// active constraint gradients are rank deficient (flagged on the cache).
Vec projection_backward(const CondensedMpc& mpc, ProjectionCache& cache,
                        const Vec& upstream);

/// Open-loop input sequence of a trained policy of any kind.
Vec policy_sequence(const MlpParams& params, PolicyKind kind, Squash squash,
                    const LinearSystem& sys, const CondensedMpc& mpc,
                    const AffinePhaseOne* p1, const Vec& x0, double qp_tol = 1e-8);

struct ValidationSet {
  std::vector<Vec> x0;
  std::vector<double> oracle_cost;
  int resampled = 0;
};

/// Samples N_val states from S and solves the oracle on each; states whose
/// oracle solve fails are resampled (counted).
ValidationSet make_validation_set(const LinearSystem& sys, const CondensedMpc& mpc,
                                  int n_val, std::uint64_t seed);

/// Fraction suboptimality delta = (mean policy cost - mean oracle cost) /
/// mean oracle cost over the validation set.
double validate(const MlpParams& params, PolicyKind kind, Squash squash,
                const LinearSystem& sys, const CondensedMpc& mpc,
                const AffinePhaseOne* p1, const ValidationSet& vs);

/// Convenience overload building the validation set from (n_val, seed).
double validate(const MlpParams& params, PolicyKind kind, const LinearSystem& sys,
                const CondensedMpc& mpc, const AffinePhaseOne* p1, int n_val,
                std::uint64_t seed);

/// Deterministic derived stream seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace safempc
