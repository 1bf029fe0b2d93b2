// Command-line driver: Phase I synthesis, policy training, open-loop
// evaluation, closed-loop benchmarking and invariant-set computation for
// constrained linear systems defined by a JSON config.
//
// Exit codes: 0 success, 1 usage/config/I-O error, 2 infeasible synthesis or
// empty invariant set, 3 solver/numerical failure, 4 certification failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "safempc/config.hpp"
#include "safempc/evalsim.hpp"
#include "safempc/train.hpp"

using namespace safempc;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitSolver = 3;
constexpr int kExitCertification = 4;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_file(path, j.dump(2) + "\n");
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "runs";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool json_summary = false;
  bool timing = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "system config JSON");
  if (needs_config) c->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "override the config seed")
      ->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_flag("--json", opts.json_summary, "print a machine-readable summary line");
  cmd->add_flag("--timing", opts.timing,
                "measure wall times (timing columns are 0 otherwise)");
  cmd->add_option("--threads", opts.threads,
                  "compute threads (this build runs single-threaded)");
}

std::uint64_t effective_seed(const CommonOpts& opts, const SystemConfig& cfg) {
  return opts.seed_set ? opts.seed : cfg.seed;
}

void emit_summary(const CommonOpts& opts, const nlohmann::json& j) {
  if (opts.json_summary) std::cout << j.dump() << "\n";
}

AffinePhaseOne load_or_synthesize_phase1(const std::string& phase1_path,
                                         const LinearSystem& sys) {
  if (!phase1_path.empty()) {
    std::ifstream in(phase1_path);
    if (!in) throw std::runtime_error("cannot open " + phase1_path);
    nlohmann::json j;
    in >> j;
    return AffinePhaseOne::from_json(j);
  }
  auto p1 = synthesize_affine(sys);
  if (!p1)
    throw std::runtime_error(
        "no affine feasibility policy exists for this system; per-state LP "
        "fallback is available for rollouts but the gauge policy needs the "
        "affine form");
  return *p1;
}

// ---------------------------------------------------------------------------
// phase1

int cmd_phase1(const CommonOpts& opts) {
  const SystemConfig cfg = SystemConfig::load(opts.config_path);
  const LinearSystem sys = cfg.build();
  const auto t0 = std::chrono::steady_clock::now();
  const auto p1 = synthesize_affine(sys);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!p1) {
    std::cerr << "phase1: synthesis infeasible (optimal margin >= 0); "
                 "use per-state LP fallback policies\n";
    emit_summary(opts, {{"command", "phase1"}, {"status", "infeasible"}});
    return kExitInfeasible;
  }

  // sampled certification statistics
  const std::uint64_t seed = effective_seed(opts, cfg);
  const auto samples = sample_uniform(sys.S, 10000, mix_seed(seed, 40));
  double worst = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const Vec& x0 : samples) {
    const double v = evaluate_violation(sys, x0, p1->eval(x0));
    worst = std::max(worst, v);
    sum += v;
  }

  const fs::path out(opts.out_dir);
  write_json(out / "phase1.json", p1->to_json());
  nlohmann::json report{{"margin", p1->margin},
                        {"samples", samples.size()},
                        {"sampled_max_violation", worst},
                        {"sampled_mean_violation", sum / samples.size()},
                        {"wall_seconds", wall},
                        {"seed", seed}};
  write_json(out / "phase1_report.json", report);
  std::cout << "phase1: certified margin " << p1->margin << ", sampled max violation "
            << worst << " over " << samples.size() << " states\n";
  emit_summary(opts, {{"command", "phase1"},
                      {"status", "ok"},
                      {"margin", p1->margin},
                      {"sampled_max_violation", worst}});
  if (worst > 0.0) return kExitCertification;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// rci

int cmd_rci(const CommonOpts& opts, double shrink_u, double inflate_d, int max_iter,
            bool from_reference, bool update_config) {
  SystemConfig cfg = SystemConfig::load(opts.config_path);
  const Polytope U_used =
      shrink_u == 1.0 ? cfg.U : Polytope(cfg.U.F(), Vec(shrink_u * cfg.U.g()));
  const Polytope D_used =
      inflate_d == 1.0 ? cfg.D : Polytope(cfg.D.F(), Vec(inflate_d * cfg.D.g()));

  RciResult res;
  if (from_reference) {
    if (!cfg.reference_policy)
      throw std::runtime_error("rci --from-reference needs reference_policy in the config");
    res = invariant_set_affine(cfg.X, U_used, D_used, cfg.A, cfg.B,
                               cfg.reference_policy->W, cfg.reference_policy->w, max_iter);
  } else {
    res = rci_iterate(cfg.X, U_used, D_used, cfg.A, cfg.B, max_iter);
  }
  if (!res.set) {
    std::cerr << "rci: no invariant set found within X\n";
    emit_summary(opts, {{"command", "rci"}, {"status", "empty"}});
    return kExitInfeasible;
  }

  // certification against the ORIGINAL sets: every sampled state has a
  // strictly safe one-step action
  const LinearSystem sys = LinearSystem::make(cfg.A, cfg.B, cfg.X, cfg.U, cfg.D, *res.set);
  const std::uint64_t seed = effective_seed(opts, cfg);
  const auto samples = sample_uniform(*res.set, 1000, mix_seed(seed, 41));
  double worst = -std::numeric_limits<double>::infinity();
  for (const Vec& x0 : samples) {
    worst = std::max(worst, max_violation_lp(sys, x0).second);
  }

  const fs::path out(opts.out_dir);
  nlohmann::json j = res.set->to_json();
  j["certified_fixed_point"] = res.certified;
  j["iterations"] = res.iterations;
  j["rows"] = res.set->rows();
  j["sampled_max_phase1_objective"] = worst;
  j["shrink_u"] = shrink_u;
  j["inflate_d"] = inflate_d;
  write_json(out / "rci.json", j);
  std::cout << "rci: " << res.set->rows() << " rows after " << res.iterations
            << " iterations (fixed point: " << (res.certified ? "yes" : "no")
            << "), sampled max phase-1 objective " << worst << "\n";

  if (update_config) {
    cfg.S = res.set;
    cfg.save(opts.config_path);
    std::cout << "rci: wrote S back into " << opts.config_path << "\n";
  }
  emit_summary(opts, {{"command", "rci"},
                      {"status", "ok"},
                      {"rows", res.set->rows()},
                      {"certified_fixed_point", res.certified},
                      {"sampled_max_phase1_objective", worst}});
  if (worst >= 0.0) return kExitCertification;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string policy = "gauge";
  std::string phase1_path;
  bool table1 = false;
  TrainConfig cfg;
};

int cmd_train(const CommonOpts& opts, TrainOpts& topts) {
  const SystemConfig cfg = SystemConfig::load(opts.config_path);
  const LinearSystem sys = cfg.build();
  const CondensedMpc mpc = condense(sys, cfg.horizon, cfg.c1, cfg.c2);
  topts.cfg.kind = policy_kind_from_string(topts.policy);
  topts.cfg.seed = effective_seed(opts, cfg);
  if (topts.table1) {
    // tuned presets for the bundled system
    switch (topts.cfg.kind) {
      case PolicyKind::Gauge:
        topts.cfg.width = 859;
        topts.cfg.lr = 4.7e-4;
        topts.cfg.batch = 1655;
        break;
      case PolicyKind::Penalty:
        topts.cfg.width = 318;
        topts.cfg.lr = 8.7e-4;
        topts.cfg.batch = 133;
        break;
      case PolicyKind::Projection:
        topts.cfg.width = 956;
        topts.cfg.lr = 9.0e-5;
        topts.cfg.batch = 813;
        break;
    }
  }

  std::optional<AffinePhaseOne> p1;
  if (topts.cfg.kind == PolicyKind::Gauge)
    p1 = load_or_synthesize_phase1(topts.phase1_path, sys);

  const TrainResult res = train(sys, mpc, p1 ? &*p1 : nullptr, topts.cfg);

  const fs::path out(opts.out_dir);
  const std::string name = to_string(topts.cfg.kind);
  nlohmann::json weights = res.params.to_json();
  weights["policy"] = name;
  weights["squash"] = topts.cfg.squash == Squash::Tanh ? "tanh" : "clamp";
  weights["best_delta"] = res.best_delta;
  write_json(out / ("weights_" + name + ".json"), weights);

  std::string csv = "iteration,loss,delta,seconds\n";
  size_t ckpt = 0;
  for (size_t i = 0; i < res.trace.loss.size(); ++i) {
    csv += std::to_string(i + 1) + "," + fmt17(res.trace.loss[i]);
    if (ckpt < res.trace.val_iteration.size() &&
        res.trace.val_iteration[ckpt] == static_cast<int>(i + 1)) {
      csv += "," + fmt17(res.trace.val_delta[ckpt]);
      csv += opts.timing ? "," + fmt17(res.trace.seconds[ckpt]) : ",";
      ++ckpt;
    } else {
      csv += ",,";
    }
    csv += "\n";
  }
  write_file(out / ("trace_" + name + ".csv"), csv);

  std::cout << "train[" << name << "]: best validation delta " << res.best_delta
            << " over " << topts.cfg.iters << " iterations\n";
  emit_summary(opts, {{"command", "train"},
                      {"policy", name},
                      {"status", "ok"},
                      {"best_delta", res.best_delta},
                      {"iterations", topts.cfg.iters}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const CommonOpts& opts, const std::string& policy,
             const std::string& weights_path, const std::string& phase1_path, int n_val) {
  const SystemConfig cfg = SystemConfig::load(opts.config_path);
  const LinearSystem sys = cfg.build();
  const CondensedMpc mpc = condense(sys, cfg.horizon, cfg.c1, cfg.c2);
  const std::uint64_t seed = effective_seed(opts, cfg);

  const PolicyKind kind = policy_kind_from_string(policy);
  std::ifstream in(weights_path);
  if (!in) throw std::runtime_error("cannot open " + weights_path);
  nlohmann::json jw;
  in >> jw;
  const MlpParams params = MlpParams::from_json(jw);
  const Squash squash =
      jw.value("squash", "tanh") == std::string("clamp") ? Squash::HardClamp : Squash::Tanh;

  std::optional<AffinePhaseOne> p1;
  if (kind == PolicyKind::Gauge) p1 = load_or_synthesize_phase1(phase1_path, sys);

  const ValidationSet vs = make_validation_set(sys, mpc, n_val, mix_seed(seed, 2));
  const double delta = validate(params, kind, squash, sys, mpc, p1 ? &*p1 : nullptr, vs);

  const fs::path out(opts.out_dir);
  nlohmann::json report{{"policy", policy},
                        {"delta", delta},
                        {"n_val", n_val},
                        {"seed", seed},
                        {"resampled", vs.resampled}};
  write_json(out / ("eval_" + policy + ".json"), report);
  std::cout << "eval[" << policy << "]: delta = " << delta << " on " << n_val
            << " validation states\n";
  emit_summary(opts, {{"command", "eval"}, {"policy", policy}, {"delta", delta}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(const CommonOpts& opts, const std::vector<std::string>& policy_names,
              const std::string& weights_dir, const std::string& phase1_path, int n_traj,
              int horizon_T) {
  const SystemConfig cfg = SystemConfig::load(opts.config_path);
  const LinearSystem sys = cfg.build();
  const CondensedMpc mpc = condense(sys, cfg.horizon, cfg.c1, cfg.c2);
  const std::uint64_t seed = effective_seed(opts, cfg);

  std::optional<AffinePhaseOne> p1;
  auto need_p1 = [&]() -> const AffinePhaseOne& {
    if (!p1) p1 = load_or_synthesize_phase1(phase1_path, sys);
    return *p1;
  };

  std::vector<BenchPolicy> policies;
  // shared_ptr captures keep loaded weights alive inside the lambdas
  for (const std::string& name : policy_names) {
    if (name == "oracle") {
      policies.push_back(BenchPolicy{
          "oracle",
          [&mpc](const Vec& x) {
            return extract_first_action(solve_mpc_oracle(mpc, x).useq, mpc.m);
          },
          [&mpc](const Vec& x) { return solve_mpc_oracle(mpc, x).useq; }});
      continue;
    }
    if (name == "phase1") {
      const AffinePhaseOne& aff = need_p1();
      auto seq = [&sys, &mpc, aff](const Vec& x) {
        return rollout_phase1(mpc, sys, aff, x).mu0;
      };
      policies.push_back(BenchPolicy{
          "phase1",
          [seq, &mpc](const Vec& x) { return extract_first_action(seq(x), mpc.m); }, seq});
      continue;
    }
    const PolicyKind kind = policy_kind_from_string(name);
    const fs::path wpath = fs::path(weights_dir) / ("weights_" + name + ".json");
    std::ifstream in(wpath);
    if (!in) throw std::runtime_error("cannot open " + wpath.string());
    nlohmann::json jw;
    in >> jw;
    auto params = std::make_shared<MlpParams>(MlpParams::from_json(jw));
    const Squash squash =
        jw.value("squash", "tanh") == std::string("clamp") ? Squash::HardClamp : Squash::Tanh;
    const AffinePhaseOne* aff = kind == PolicyKind::Gauge ? &need_p1() : nullptr;
    auto seq = [params, kind, squash, &sys, &mpc, aff](const Vec& x) {
      return policy_sequence(*params, kind, squash, sys, mpc, aff, x);
    };
    policies.push_back(BenchPolicy{
        name, [seq, &mpc](const Vec& x) { return extract_first_action(seq(x), mpc.m); },
        seq});
  }

  std::vector<BenchSummary> summaries;
  const auto rows =
      benchmark_suite(policies, sys, mpc, n_traj, horizon_T, seed, opts.timing, &summaries);

  std::string csv = "policy,seed,trajectory_cost,mean_action_seconds,violations,delta_open_loop\n";
  for (const auto& r : rows) {
    csv += r.policy + "," + std::to_string(r.seed) + "," + fmt17(r.trajectory_cost) + "," +
           fmt17(r.mean_action_seconds) + "," + std::to_string(r.violations) + "," +
           fmt17(r.delta_open_loop) + "\n";
  }
  const fs::path out(opts.out_dir);
  write_file(out / "bench.csv", csv);

  std::string sum_csv =
      "policy,cost_q1,cost_median,cost_q3,mean_action_seconds,delta_open_loop,total_violations\n";
  for (const auto& s : summaries) {
    sum_csv += s.policy + "," + fmt17(s.cost_q1) + "," + fmt17(s.cost_median) + "," +
               fmt17(s.cost_q3) + "," + fmt17(s.mean_action_seconds) + "," +
               fmt17(s.delta_open_loop) + "," + std::to_string(s.total_violations) + "\n";
  }
  write_file(out / "bench_summary.csv", sum_csv);

  for (const auto& s : summaries) {
    std::cout << "bench[" << s.policy << "]: median cost " << s.cost_median
              << ", mean action seconds " << s.mean_action_seconds << ", delta "
              << s.delta_open_loop << ", violations " << s.total_violations << "\n";
  }
  emit_summary(opts, {{"command", "bench"},
                      {"status", "ok"},
                      {"rows", rows.size()},
                      {"policies", policy_names}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// hpsearch

int cmd_hpsearch(const CommonOpts& opts, const std::string& policy, int trials, int iters) {
  const SystemConfig cfg = SystemConfig::load(opts.config_path);
  const LinearSystem sys = cfg.build();
  const CondensedMpc mpc = condense(sys, cfg.horizon, cfg.c1, cfg.c2);
  const std::uint64_t seed = effective_seed(opts, cfg);
  const PolicyKind kind = policy_kind_from_string(policy);

  std::optional<AffinePhaseOne> p1;
  if (kind == PolicyKind::Gauge) p1 = load_or_synthesize_phase1("", sys);

  std::mt19937_64 rng(mix_seed(seed, 90));
  std::uniform_int_distribution<int> width_dist(64, 1024);
  std::uniform_int_distribution<int> batch_dist(100, 3000);
  std::uniform_real_distribution<double> log_lr(std::log(1e-5), std::log(1e-3));

  std::string csv = "trial,width,batch,lr,delta\n";
  double best_delta = std::numeric_limits<double>::infinity();
  nlohmann::json best;
  for (int t = 0; t < trials; ++t) {
    TrainConfig tc;
    tc.kind = kind;
    tc.width = width_dist(rng);
    tc.batch = batch_dist(rng);
    tc.lr = std::exp(log_lr(rng));
    tc.iters = iters;
    tc.n_val = 100;
    tc.val_every = std::max(1, iters / 4);
    tc.seed = mix_seed(seed, 91 + t);
    const TrainResult res = train(sys, mpc, p1 ? &*p1 : nullptr, tc);
    csv += std::to_string(t) + "," + std::to_string(tc.width) + "," +
           std::to_string(tc.batch) + "," + fmt17(tc.lr) + "," + fmt17(res.best_delta) + "\n";
    std::cout << "hpsearch trial " << t << ": width " << tc.width << " batch " << tc.batch
              << " lr " << tc.lr << " -> delta " << res.best_delta << "\n";
    if (res.best_delta < best_delta) {
      best_delta = res.best_delta;
      best = {{"width", tc.width}, {"batch", tc.batch}, {"lr", tc.lr},
              {"delta", res.best_delta}};
    }
  }
  const fs::path out(opts.out_dir);
  write_file(out / ("hpsearch_" + policy + ".csv"), csv);
  write_json(out / ("hpsearch_" + policy + "_best.json"), best);
  std::cout << "hpsearch: best delta " << best_delta << "\n";
  emit_summary(opts, {{"command", "hpsearch"}, {"best", best}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learning-based explicit MPC with feasibility-preserving policies"};
  app.require_subcommand(1);

  CommonOpts phase1_opts;
  auto* phase1_cmd = app.add_subcommand("phase1", "synthesize the affine feasibility policy");
  add_common(phase1_cmd, phase1_opts);

  CommonOpts rci_opts;
  double shrink_u = 1.0, inflate_d = 1.0;
  int rci_max_iter = 50;
  bool rci_from_reference = false, rci_update_config = false;
  auto* rci_cmd = app.add_subcommand("rci", "compute a robust control invariant set");
  add_common(rci_cmd, rci_opts);
  rci_cmd->add_option("--shrink-u", shrink_u, "scale the input set during iteration");
  rci_cmd->add_option("--inflate-d", inflate_d, "scale the disturbance set during iteration");
  rci_cmd->add_option("--max-iter", rci_max_iter, "iteration cap");
  rci_cmd->add_flag("--from-reference", rci_from_reference,
                    "invariant set of the config's reference affine policy");
  rci_cmd->add_flag("--update-config", rci_update_config, "write S back into the config");

  CommonOpts train_opts;
  TrainOpts topts;
  auto* train_cmd = app.add_subcommand("train", "train a policy network");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--policy", topts.policy, "gauge | penalty | projection")->required();
  train_cmd->add_option("--phase1", topts.phase1_path, "Phase I JSON (default: synthesize)");
  train_cmd->add_option("--width", topts.cfg.width, "hidden width");
  train_cmd->add_option("--lr", topts.cfg.lr, "learning rate");
  train_cmd->add_option("--batch", topts.cfg.batch, "batch size M");
  train_cmd->add_option("--iters", topts.cfg.iters, "iteration count");
  train_cmd->add_option("--beta", topts.cfg.beta, "penalty weight");
  train_cmd->add_option("--n-val", topts.cfg.n_val, "validation set size");
  train_cmd->add_option("--val-every", topts.cfg.val_every, "validation interval");
  train_cmd->add_flag("--table1", topts.table1, "use the tuned width/LR/batch presets");

  CommonOpts eval_opts;
  std::string eval_policy, eval_weights, eval_phase1;
  int eval_nval = 100;
  auto* eval_cmd = app.add_subcommand("eval", "open-loop suboptimality of trained weights");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--policy", eval_policy, "gauge | penalty | projection")->required();
  eval_cmd->add_option("--weights", eval_weights, "weights JSON")->required();
  eval_cmd->add_option("--phase1", eval_phase1, "Phase I JSON (default: synthesize)");
  eval_cmd->add_option("--n-val", eval_nval, "validation set size");

  CommonOpts bench_opts;
  std::vector<std::string> bench_policies{"gauge", "projection", "oracle"};
  std::string bench_weights_dir = "runs", bench_phase1;
  int bench_ntraj = 100, bench_T = 50;
  auto* bench_cmd = app.add_subcommand("bench", "closed-loop benchmark table");
  add_common(bench_cmd, bench_opts);
  bench_cmd->add_option("--policies", bench_policies,
                        "subset of gauge, penalty, projection, oracle, phase1");
  bench_cmd->add_option("--weights-dir", bench_weights_dir, "directory with weights_*.json");
  bench_cmd->add_option("--phase1", bench_phase1, "Phase I JSON (default: synthesize)");
  bench_cmd->add_option("--n-traj", bench_ntraj, "trajectories per policy");
  bench_cmd->add_option("--T", bench_T, "closed-loop length");

  CommonOpts hp_opts;
  std::string hp_policy = "gauge";
  int hp_trials = 30, hp_iters = 300;
  auto* hp_cmd = app.add_subcommand("hpsearch", "random hyperparameter search");
  add_common(hp_cmd, hp_opts);
  hp_cmd->add_option("--policy", hp_policy, "gauge | penalty | projection");
  hp_cmd->add_option("--trials", hp_trials, "search iterations");
  hp_cmd->add_option("--iters", hp_iters, "training iterations per trial");

  CLI11_PARSE(app, argc, argv);

  try {
    if (phase1_cmd->parsed()) return cmd_phase1(phase1_opts);
    if (rci_cmd->parsed())
      return cmd_rci(rci_opts, shrink_u, inflate_d, rci_max_iter, rci_from_reference,
                     rci_update_config);
    if (train_cmd->parsed()) return cmd_train(train_opts, topts);
    if (eval_cmd->parsed())
      return cmd_eval(eval_opts, eval_policy, eval_weights, eval_phase1, eval_nval);
    if (bench_cmd->parsed())
      return cmd_bench(bench_opts, bench_policies, bench_weights_dir, bench_phase1,
                       bench_ntraj, bench_T);
    if (hp_cmd->parsed()) return cmd_hpsearch(hp_opts, hp_policy, hp_trials, hp_iters);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    std::cerr << "error: " << what << "\n";
    if (what.find("infeasible") != std::string::npos ||
        what.find("no affine") != std::string::npos)
      return kExitInfeasible;
    if (what.find("cannot open") != std::string::npos ||
        what.find("cannot write") != std::string::npos ||
        what.find("config") != std::string::npos)
      return kExitUsage;
    return kExitSolver;
  }
  return kExitUsage;
}
