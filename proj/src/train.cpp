#include "safempc/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "safempc/qp.hpp"

namespace safempc {

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::Gauge: return "gauge";
    case PolicyKind::Penalty: return "penalty";
    case PolicyKind::Projection: return "projection";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "gauge") return PolicyKind::Gauge;
  if (s == "penalty") return PolicyKind::Penalty;
  if (s == "projection") return PolicyKind::Projection;
  throw std::invalid_argument("unknown policy kind: " + s);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined word
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

// Scaled-tanh output map onto the stacked input box U^tau.
struct BoxSquash {
  Vec mid, half;  // length m*tau

  static BoxSquash make(const LinearSystem& sys, const CondensedMpc& mpc) {
    const auto box = as_box(sys.U);
    if (!box)
      throw std::invalid_argument(
          "penalty baseline requires an axis-aligned box input set");
    const auto& [lo, hi] = *box;
    BoxSquash b;
    b.mid = Vec(mpc.seq_dim());
    b.half = Vec(mpc.seq_dim());
    for (int k = 0; k < mpc.horizon; ++k) {
      b.mid.segment(k * mpc.m, mpc.m) = 0.5 * (lo + hi);
      b.half.segment(k * mpc.m, mpc.m) = 0.5 * (hi - lo);
    }
    return b;
  }

  Vec forward(const Vec& raw) const {
    return mid + half.cwiseProduct(raw.array().tanh().matrix());
  }
  Vec backward(const Vec& raw, const Vec& upstream) const {
    const Vec d = (1.0 - raw.array().tanh().square()).matrix();
    return upstream.cwiseProduct(half).cwiseProduct(d);
  }
};

// Horizon cost (and optional target-violation penalty) of a stacked input
// sequence, with the gradient w.r.t. the inputs by an adjoint rollout.
double rollout_loss_grad(const CondensedMpc& mpc, const Vec& x0, const Vec& useq,
                         double beta, const Polytope* T, double* penalty_out,
                         Vec* dldu) {
  const int n = mpc.n, m = mpc.m, tau = mpc.horizon;
  std::vector<Vec> xs(tau + 1);
  xs[0] = x0;
  double loss = 0.0, penalty = 0.0;
  for (int k = 0; k < tau; ++k) {
    const Vec u = useq.segment(k * m, m);
    loss += mpc.cost->stage(xs[k], u);
    xs[k + 1] = mpc.A * xs[k] + mpc.B * u;
  }
  loss += mpc.cost->terminal(xs[tau]);

  auto pen_grad = [&](const Vec& x) -> Vec {
    const Vec viol = T->F() * x - T->g();
    penalty += viol.cwiseMax(0.0).sum();
    Vec g = Vec::Zero(n);
    for (Eigen::Index i = 0; i < viol.size(); ++i)
      if (viol[i] > 0.0) g += T->F().row(i).transpose();
    return g;
  };

  if (dldu) {
    dldu->resize(m * tau);
    Vec lambda = mpc.cost->terminal_dx(xs[tau]);
    if (T) lambda += beta * pen_grad(xs[tau]);
    for (int k = tau - 1; k >= 0; --k) {
      const Vec u = useq.segment(k * m, m);
      dldu->segment(k * m, m) = mpc.cost->stage_du(xs[k], u) + mpc.B.transpose() * lambda;
      if (k >= 1) {
        lambda = mpc.cost->stage_dx(xs[k], u) + mpc.A.transpose() * lambda;
        if (T) lambda += beta * pen_grad(xs[k]);
      }
    }
  } else if (T) {
    for (int k = 1; k <= tau; ++k) pen_grad(xs[k]);
  }
  if (penalty_out) *penalty_out = penalty;
  return loss;
}

}  // namespace

Vec projection_forward(const CondensedMpc& mpc, const Vec& x0, const Vec& v,
                       double qp_tol, ProjectionCache* cache) {
  QpProblem qp;
  const int d = mpc.seq_dim();
  qp.Q = Mat::Identity(d, d);
  qp.q = -v;
  qp.G = mpc.Gu;
  qp.h = mpc.constraint_offset(x0);
  QpSettings st;
  st.tol = qp_tol;
  const SolveReport rep = solve_qp(qp, st);
  if (!rep.optimal())
    throw std::runtime_error("projection_forward: QP failed with status " +
                             to_string(rep.status));
  if (cache) {
    cache->v = v;
    cache->useq = rep.x;
    cache->lam = rep.dual;
    cache->offsets = qp.h;
    cache->ls_fallback = false;
  }
  return rep.x;
}

Vec projection_backward(const CondensedMpc& mpc, ProjectionCache& cache,
                        const Vec& upstream) {
  const Vec slack = cache.offsets - mpc.Gu * cache.useq;
  std::vector<int> act;
  for (Eigen::Index i = 0; i < slack.size(); ++i)
    if (slack[i] <= 1e-7) act.push_back(static_cast<int>(i));
  if (act.empty()) return upstream;  // interior projection: identity
  const int ka = static_cast<int>(act.size());
  Mat Ga(ka, mpc.seq_dim());
  for (int i = 0; i < ka; ++i) Ga.row(i) = mpc.Gu.row(act[i]);
  // VJP of u = (I - Ga'(Ga Ga')^{-1} Ga) v on the active manifold.
  const Mat GG = Ga * Ga.transpose();
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(GG);
  const Vec xi = cod.solve(Ga * upstream);
  cache.ls_fallback = cod.rank() < ka;
  return upstream - Ga.transpose() * xi;
}

double penalty_loss(const std::vector<Vec>& batch, const MlpParams& params, double beta,
                    const LinearSystem& sys, const CondensedMpc& mpc) {
  const BoxSquash box = BoxSquash::make(sys, mpc);
  double total = 0.0;
  for (const Vec& x0 : batch) {
    const Mat raw = mlp_forward(params, x0);
    const Vec useq = box.forward(raw.col(0));
    double pen = 0.0;
    const double loss =
        rollout_loss_grad(mpc, x0, useq, beta, &sys.T, &pen, nullptr);
    total += loss + beta * pen;
  }
  return total / static_cast<double>(batch.size());
}

Vec policy_sequence(const MlpParams& params, PolicyKind kind, Squash squash,
                    const LinearSystem& sys, const CondensedMpc& mpc,
                    const AffinePhaseOne* p1, const Vec& x0, double qp_tol) {
  const Mat raw = mlp_forward(params, x0);
  switch (kind) {
    case PolicyKind::Gauge: {
      if (!p1) throw std::invalid_argument("policy_sequence: gauge kind needs Phase I");
      return gauge_head_forward(mpc, *p1, squash, x0, raw.col(0));
    }
    case PolicyKind::Penalty:
      return BoxSquash::make(sys, mpc).forward(raw.col(0));
    case PolicyKind::Projection:
      return projection_forward(mpc, x0, raw.col(0), qp_tol);
  }
  throw std::logic_error("policy_sequence: unreachable");
}

ValidationSet make_validation_set(const LinearSystem& sys, const CondensedMpc& mpc,
                                  int n_val, std::uint64_t seed) {
  ValidationSet vs;
  int attempt = 0;
  while (static_cast<int>(vs.x0.size()) < n_val) {
    const Vec x0 = sample_uniform(sys.S, 1, mix_seed(seed, 7000 + attempt)).front();
    ++attempt;
    const OracleResult orc = solve_mpc_oracle(mpc, x0);
    if (!orc.report.optimal()) {
      ++vs.resampled;
      continue;
    }
    vs.x0.push_back(x0);
    vs.oracle_cost.push_back(orc.cost);
  }
  return vs;
}

double validate(const MlpParams& params, PolicyKind kind, Squash squash,
                const LinearSystem& sys, const CondensedMpc& mpc,
                const AffinePhaseOne* p1, const ValidationSet& vs) {
  double c_nn = 0.0, c_mpc = 0.0;
  for (size_t j = 0; j < vs.x0.size(); ++j) {
    const Vec useq = policy_sequence(params, kind, squash, sys, mpc, p1, vs.x0[j]);
    c_nn += trajectory_cost(mpc, vs.x0[j], useq);
    c_mpc += vs.oracle_cost[j];
  }
  return (c_nn - c_mpc) / c_mpc;
}

double validate(const MlpParams& params, PolicyKind kind, const LinearSystem& sys,
                const CondensedMpc& mpc, const AffinePhaseOne* p1, int n_val,
                std::uint64_t seed) {
  const ValidationSet vs = make_validation_set(sys, mpc, n_val, seed);
  return validate(params, kind, Squash::Tanh, sys, mpc, p1, vs);
}

TrainResult train(const LinearSystem& sys, const CondensedMpc& mpc,
                  const AffinePhaseOne* p1, const TrainConfig& cfg) {
  if (cfg.kind == PolicyKind::Gauge && !p1)
    throw std::invalid_argument("train: gauge kind requires a Phase I policy");
  const auto t0 = std::chrono::steady_clock::now();
  const int n = sys.state_dim();

  MlpParams params = MlpParams::init(n, cfg.width, cfg.hidden_layers, mpc.seq_dim(),
                                     mix_seed(cfg.seed, 1));
  AdamState adam = AdamState::zeros_like(params);
  const ValidationSet vs = make_validation_set(sys, mpc, cfg.n_val, mix_seed(cfg.seed, 2));

  std::optional<BoxSquash> box;
  if (cfg.kind == PolicyKind::Penalty) box = BoxSquash::make(sys, mpc);

  TrainResult result;
  result.trace.resampled_validation = vs.resampled;
  result.best_delta = std::numeric_limits<double>::infinity();
  MlpParams best = params;

  const double inv_m = 1.0 / static_cast<double>(cfg.batch);
  for (int iter = 0; iter < cfg.iters; ++iter) {
    const auto batch =
        sample_uniform(sys.S, cfg.batch, mix_seed(cfg.seed, 1000 + iter));
    Mat X(n, cfg.batch);
    for (int j = 0; j < cfg.batch; ++j) X.col(j) = batch[j];

    MlpCache cache;
    const Mat raw = mlp_forward(params, X, &cache);
    Mat draw(raw.rows(), raw.cols());
    double objective = 0.0;
    const bool spot_check = (iter % 100 == 0);

    for (int j = 0; j < cfg.batch; ++j) {
      const Vec raw_j = raw.col(j);
      Vec useq, dldu;
      double pen = 0.0;
      switch (cfg.kind) {
        case PolicyKind::Gauge: {
          GaugeHeadCache head;
          useq = gauge_head_forward(mpc, *p1, cfg.squash, batch[j], raw_j, &head);
          objective += rollout_loss_grad(mpc, batch[j], useq, 0.0, nullptr, nullptr,
                                         &dldu) * inv_m;
          draw.col(j) = gauge_head_backward(mpc, head, dldu) * inv_m;
          break;
        }
        case PolicyKind::Penalty: {
          useq = box->forward(raw_j);
          const double loss = rollout_loss_grad(mpc, batch[j], useq, cfg.beta, &sys.T,
                                                &pen, &dldu);
          objective += (loss + cfg.beta * pen) * inv_m;
          draw.col(j) = box->backward(raw_j, dldu) * inv_m;
          break;
        }
        case PolicyKind::Projection: {
          ProjectionCache pc;
          useq = projection_forward(mpc, batch[j], raw_j, cfg.qp_tol, &pc);
          objective += rollout_loss_grad(mpc, batch[j], useq, 0.0, nullptr, nullptr,
                                         &dldu) * inv_m;
          draw.col(j) = projection_backward(mpc, pc, dldu) * inv_m;
          if (pc.ls_fallback) ++result.trace.ls_fallbacks;
          break;
        }
      }
      if (spot_check && cfg.kind != PolicyKind::Penalty) {
        const double resid =
            (mpc.Gu * useq - mpc.constraint_offset(batch[j])).maxCoeff();
        result.trace.max_constraint_residual =
            std::max(result.trace.max_constraint_residual, resid);
      }
    }

    if (!std::isfinite(objective))
      throw std::runtime_error("train: objective diverged at iteration " +
                               std::to_string(iter));
    const MlpGrads grads = mlp_backward(params, cache, draw);
    adam_step(params, grads, adam, cfg.lr);
    result.trace.loss.push_back(objective);

    if ((iter + 1) % cfg.val_every == 0 || iter + 1 == cfg.iters) {
      const double delta = validate(params, cfg.kind, cfg.squash, sys, mpc, p1, vs);
      result.trace.val_iteration.push_back(iter + 1);
      result.trace.val_delta.push_back(delta);
      result.trace.seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      if (delta < result.best_delta) {
        result.best_delta = delta;
        best = params;
      }
    }
  }
  result.params = std::move(best);
  return result;
}

}  // namespace safempc
