#include "safempc/gauge_policy.hpp"

#include <cmath>
#include <stdexcept>

namespace safempc {

Vec apply_squash(Squash mode, const Vec& raw) {
  if (mode == Squash::Tanh) return raw.array().tanh();
  return raw.cwiseMax(-1.0).cwiseMin(1.0);
}

Vec squash_derivative(Squash mode, const Vec& raw) {
  if (mode == Squash::Tanh) {
    return 1.0 - raw.array().tanh().square();
  }
  Vec d(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    d[i] = (raw[i] > -1.0 && raw[i] < 1.0) ? 1.0 : 0.0;
  return d;
}

namespace {

// Phase I point by the affine closed loop; no set-membership check here,
// the margin guard below catches states the certificate does not cover.
Vec phase1_point(const CondensedMpc& mpc, const AffinePhaseOne& p1, const Vec& x0) {
  Vec mu0(mpc.seq_dim());
  Vec x = x0;
  for (int k = 0; k < mpc.horizon; ++k) {
    const Vec u = p1.eval(x);
    mu0.segment(k * mpc.m, mpc.m) = u;
    x = mpc.A * x + mpc.B * u;
  }
  return mu0;
}

// gamma for the shifted feasible set {v | Gu v <= offsets}.
double shifted_gauge(const CondensedMpc& mpc, const Vec& offsets, const Vec& v, int* arg) {
  const Vec num = mpc.Gu * v;
  double best = 0.0;
  int best_i = -1;
  for (Eigen::Index i = 0; i < num.size(); ++i) {
    const double val = num[i] / offsets[i];
    if (val > best) {
      best = val;
      best_i = static_cast<int>(i);
    }
  }
  if (arg) *arg = best_i;
  return best;
}

}  // namespace

Vec gauge_head_forward(const CondensedMpc& mpc, const AffinePhaseOne& p1, Squash mode,
                       const Vec& x0, const Vec& raw, GaugeHeadCache* cache) {
  if (raw.size() != mpc.seq_dim())
    throw std::invalid_argument("gauge_head_forward: raw output length mismatch");
  const Vec psi = apply_squash(mode, raw);
  const Vec mu0 = phase1_point(mpc, p1, x0);
  Vec offsets = mpc.constraint_offset(x0) - mpc.Gu * mu0;
  if (offsets.minCoeff() <= 0.0)
    throw std::runtime_error("gauge_head_forward: nonpositive Phase I margin at x0");
  offsets = offsets.cwiseMax(1e-12);

  const double gp = inf_norm(psi);  // gauge of the unit cube
  Vec out;
  if (gp == 0.0) {
    out = mu0;
  } else {
    const double gq = shifted_gauge(mpc, offsets, psi, nullptr);
    out = (gp / gq) * psi + mu0;
  }
  if (cache) {
    cache->mode = mode;
    cache->raw = raw;
    cache->psi = psi;
    cache->mu0 = mu0;
    cache->offsets = offsets;
  }
  return out;
}

Vec gauge_head_backward(const CondensedMpc& mpc, const GaugeHeadCache& cache,
                        const Vec& upstream) {
  const Vec& psi = cache.psi;
  Vec dpsi;
  const double gp = inf_norm(psi);
  if (gp == 0.0) {
    // Deterministic subgradient at the origin, consistent with the
    // lowest-index-row convention of gauge_map_vjp.
    const double rq = mpc.Gu.row(0).norm() / cache.offsets[0];
    dpsi = (1.0 / rq) * upstream;
  } else {
    int iq = -1;
    const double gq = shifted_gauge(mpc, cache.offsets, psi, &iq);
    // Active row of the cube gauge with the canonical [I; -I] ordering:
    // positive rows first, matching the lowest-index tie rule.
    int ip = -1;
    double sign = 1.0;
    for (Eigen::Index i = 0; i < psi.size() && ip < 0; ++i) {
      if (psi[i] == gp) ip = static_cast<int>(i);
    }
    if (ip < 0) {
      sign = -1.0;
      for (Eigen::Index i = 0; i < psi.size() && ip < 0; ++i) {
        if (-psi[i] == gp) ip = static_cast<int>(i);
      }
    }
    Vec p = Vec::Zero(psi.size());
    p[ip] = sign;
    const Vec q = mpc.Gu.row(iq).transpose() / cache.offsets[iq];
    const double ratio = gp / gq;
    const Vec lin = p / gq - (ratio / gq) * q;
    dpsi = ratio * upstream + lin * psi.dot(upstream);
  }
  return dpsi.cwiseProduct(squash_derivative(cache.mode, cache.raw));
}

Vec policy_forward(const GaugePolicy& p, const CondensedMpc& mpc, const LinearSystem& sys,
                   const AffinePhaseOne& p1, const Vec& x0, GaugeForwardCache* cache) {
  if (!sys.S.contains(x0, 1e-9))
    throw std::invalid_argument("policy_forward: x0 outside S");
  GaugeForwardCache local;
  GaugeForwardCache* c = cache ? cache : &local;
  const Mat raw = mlp_forward(p.mlp, x0, &c->mlp);
  return gauge_head_forward(mpc, p1, p.squash, x0, raw.col(0), &c->head);
}

MlpGrads policy_backward(const GaugePolicy& p, const CondensedMpc& mpc,
                         const GaugeForwardCache& cache, const Vec& upstream) {
  const Vec draw = gauge_head_backward(mpc, cache.head, upstream);
  return mlp_backward(p.mlp, cache.mlp, draw);
}

Vec extract_first_action(const Vec& useq, int m) {
  if (m <= 0 || useq.size() % m != 0)
    throw std::invalid_argument("extract_first_action: length not a multiple of m");
  return useq.head(m);
}

}  // namespace safempc
