#include "safempc/evalsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "safempc/train.hpp"

namespace safempc {

DisturbanceProcess::DisturbanceProcess(Polytope D, double alpha, std::uint64_t seed)
    : D_(std::move(D)), alpha_(alpha), rng_(seed) {
  // alpha = 0 degenerates to i.i.d. sampling and is allowed for tests
  if (alpha < 0.0 || alpha >= 1.0)
    throw std::invalid_argument("DisturbanceProcess: alpha must lie in [0,1)");
  const auto [lo, hi] = bounding_box(D_);
  if (!lo.allFinite() || !hi.allFinite())
    throw std::invalid_argument("DisturbanceProcess: unbounded disturbance set");
  lo_ = lo;
  hi_ = hi;
  d_ = Vec::Zero(D_.dim());
  if (!D_.contains(d_, 1e-12))
    throw std::invalid_argument("DisturbanceProcess: d0 = 0 not in D");
}

Vec DisturbanceProcess::sample_uniform_d() {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec x(D_.dim());
  for (;;) {
    for (int i = 0; i < D_.dim(); ++i) x[i] = lo_[i] + (hi_[i] - lo_[i]) * unit(rng_);
    if (D_.contains(x, 1e-12)) return x;
  }
}

Vec DisturbanceProcess::step() {
  d_ = alpha_ * d_ + (1.0 - alpha_) * sample_uniform_d();
  return d_;
}

ClosedLoopResult run_closed_loop(const FirstActionPolicy& policy, const LinearSystem& sys,
                                 const CostFunction& cost, const Vec& x0, int T,
                                 DisturbanceProcess& proc, bool timing) {
  ClosedLoopResult res;
  res.states.push_back(x0);
  Vec x = x0;
  if ((sys.S.F() * x - sys.S.g()).maxCoeff() > 1e-7) ++res.violations;
  for (int t = 0; t < T; ++t) {
    Vec u;
    try {
      if (timing) {
        const auto c0 = std::chrono::steady_clock::now();
        u = policy(x);
        res.step_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count());
      } else {
        u = policy(x);
        res.step_seconds.push_back(0.0);
      }
    } catch (const std::exception& e) {
      res.failed = true;
      res.failure = e.what();
      return res;
    }
    res.cost += cost.stage(x, u);
    const Vec d = proc.step();
    x = sys.A * x + sys.B * u + d;
    res.inputs.push_back(u);
    res.states.push_back(x);
    if ((sys.S.F() * x - sys.S.g()).maxCoeff() > 1e-7) ++res.violations;
  }
  res.cost += cost.terminal(x);
  return res;
}

namespace {

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const size_t i = static_cast<size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(i);
  return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

}  // namespace

std::vector<BenchRow> benchmark_suite(const std::vector<BenchPolicy>& policies,
                                      const LinearSystem& sys, const CondensedMpc& mpc,
                                      int n_traj, int T, std::uint64_t seed, bool timing,
                                      std::vector<BenchSummary>* summaries) {
  const auto starts = sample_uniform(sys.S, n_traj, mix_seed(seed, 11));
  const ValidationSet vset = make_validation_set(sys, mpc, 100, mix_seed(seed, 12));

  std::vector<BenchRow> rows;
  if (summaries) summaries->clear();
  for (const auto& pol : policies) {
    // open-loop suboptimality on the shared validation set
    double c_nn = 0.0, c_or = 0.0;
    for (size_t j = 0; j < vset.x0.size(); ++j) {
      c_nn += trajectory_cost(mpc, vset.x0[j], pol.sequence(vset.x0[j]));
      c_or += vset.oracle_cost[j];
    }
    const double delta = (c_nn - c_or) / c_or;

    if (timing) pol.act(starts.front());  // warmup, excluded from means

    std::vector<double> costs;
    double time_sum = 0.0;
    long time_count = 0;
    int total_viol = 0;
    for (int tr = 0; tr < n_traj; ++tr) {
      const std::uint64_t traj_seed = mix_seed(seed, 100 + tr);
      DisturbanceProcess proc(sys.D, 0.9, traj_seed);
      const ClosedLoopResult cl =
          run_closed_loop(pol.act, sys, *mpc.cost, starts[tr], T, proc, timing);
      BenchRow row;
      row.policy = pol.name;
      row.seed = traj_seed;
      row.trajectory_cost = cl.cost;
      row.violations = cl.violations;
      row.delta_open_loop = delta;
      row.failed = cl.failed;
      if (timing && !cl.step_seconds.empty()) {
        const double s = std::accumulate(cl.step_seconds.begin(), cl.step_seconds.end(), 0.0);
        row.mean_action_seconds = s / static_cast<double>(cl.step_seconds.size());
        time_sum += s;
        time_count += static_cast<long>(cl.step_seconds.size());
      }
      total_viol += cl.violations;
      if (!cl.failed) costs.push_back(cl.cost);
      rows.push_back(std::move(row));
    }
    if (summaries) {
      BenchSummary s;
      s.policy = pol.name;
      s.cost_q1 = quantile(costs, 0.25);
      s.cost_median = quantile(costs, 0.5);
      s.cost_q3 = quantile(costs, 0.75);
      s.mean_action_seconds = time_count > 0 ? time_sum / static_cast<double>(time_count) : 0.0;
      s.delta_open_loop = delta;
      s.total_violations = total_viol;
      summaries->push_back(std::move(s));
    }
  }
  return rows;
}

}  // namespace safempc
