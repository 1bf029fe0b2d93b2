#pragma once

#include "safempc/mlp.hpp"
#include "safempc/phase1.hpp"

namespace safempc {

enum class Squash { Tanh, HardClamp };

/// Elementwise squash onto the closed unit cube.
Vec apply_squash(Squash mode, const Vec& raw);
/// Diagonal of the squash Jacobian (0 in hard-clamp dead zones).
Vec squash_derivative(Squash mode, const Vec& raw);

/// Safe policy head shared by the standalone forward pass and the batched
/// training loop: raw network output -> squash onto B_inf -> gauge map into
/// the shifted feasible set -> shift back by the Phase I point.
struct GaugeHeadCache {
  Squash mode = Squash::Tanh;
  Vec raw;
  Vec psi;
  Vec mu0;
  Vec offsets;  ///< F~(x0) offsets h(x0) - Gu mu0, floored at 1e-12
};

/// Maps a raw network output to a point of F(x0). Throws std::runtime_error
/// if the Phase I margin is not strictly positive at x0.
Vec gauge_head_forward(const CondensedMpc& mpc, const AffinePhaseOne& p1, Squash mode,
                       const Vec& x0, const Vec& raw, GaugeHeadCache* cache = nullptr);

/// Pulls an upstream gradient in u-space back to the raw network output.
/// mu0 and F~(x0) are constants with respect to the parameters.
Vec gauge_head_backward(const CondensedMpc& mpc, const GaugeHeadCache& cache,
                        const Vec& upstream);

/// Complete policy of the gauge network: MLP composed with the safe head.
struct GaugePolicy {
  MlpParams mlp;
  Squash squash = Squash::Tanh;
};

struct GaugeForwardCache {
  MlpCache mlp;
  GaugeHeadCache head;
};

/// u-sequence in F(x0); requires x0 in S (checked at 1e-9).
Vec policy_forward(const GaugePolicy& p, const CondensedMpc& mpc, const LinearSystem& sys,
                   const AffinePhaseOne& p1, const Vec& x0,
                   GaugeForwardCache* cache = nullptr);

/// Parameter gradient for an upstream u-space gradient, chained through the
/// gauge head and the MLP.
MlpGrads policy_backward(const GaugePolicy& p, const CondensedMpc& mpc,
                         const GaugeForwardCache& cache, const Vec& upstream);

/// First m components of a stacked input sequence.
Vec extract_first_action(const Vec& useq, int m);

}  // namespace safempc
