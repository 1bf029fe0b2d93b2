#include <doctest.h>

#include "fixtures.hpp"
#include "safempc/evalsim.hpp"
#include "safempc/train.hpp"

using namespace safempc;

TEST_CASE("disturbance: near-unity alpha moves slowly") {
  const Polytope D = Polytope::inf_ball(3, 0.1);
  DisturbanceProcess proc(D, 0.999, 1);
  Vec prev = proc.current();
  const double diam = 0.2;  // inf-ball diameter
  for (int t = 0; t < 200; ++t) {
    const Vec d = proc.step();
    CHECK((d - prev).cwiseAbs().maxCoeff() <= 0.001 * diam + 1e-15);
    prev = d;
  }
}

TEST_CASE("disturbance: alpha zero is fresh uniform sampling") {
  const Polytope D = Polytope::inf_ball(2, 0.1);
  DisturbanceProcess proc(D, 0.0, 2);
  Vec mean = Vec::Zero(2);
  for (int t = 0; t < 10000; ++t) mean += proc.step();
  mean /= 10000.0;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("disturbance: iterates stay in D over a long run") {
  const Polytope D = Polytope::inf_ball(3, 0.1);
  DisturbanceProcess proc(D, 0.9, 3);
  for (int t = 0; t < 10000; ++t) {
    const Vec d = proc.step();
    CHECK(d.cwiseAbs().maxCoeff() <= 0.1 + 1e-12);
  }
}

TEST_CASE("disturbance: alpha validation") {
  const Polytope D = Polytope::inf_ball(2, 0.1);
  CHECK_THROWS_AS(DisturbanceProcess(D, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(DisturbanceProcess(D, -0.1, 0), std::invalid_argument);
}

TEST_CASE("closed loop: undisturbed oracle rollout reaches the target set") {
  const auto& sys = fixtures::bundled_system();
  const auto& mpc = fixtures::bundled_mpc();
  // zero-disturbance process over a degenerate set
  const Polytope D0 = Polytope::box(Vec::Zero(3), Vec::Zero(3));
  DisturbanceProcess proc(D0, 0.9, 4);
  const Vec x0 = sample_uniform(sys.S, 1, 5).front();
  const FirstActionPolicy oracle_policy = [&](const Vec& x) {
    return extract_first_action(solve_mpc_oracle(mpc, x).useq, mpc.m);
  };
  const auto res = run_closed_loop(oracle_policy, sys, *mpc.cost, x0, 20, proc, false);
  REQUIRE(!res.failed);
  CHECK(res.violations == 0);
  CHECK(std::isfinite(res.cost));
  for (size_t t = 1; t < res.states.size(); ++t) {
    CHECK((sys.T.F() * res.states[t] - sys.T.g()).maxCoeff() <= 1e-7);
  }
}

TEST_CASE("closed loop: zero horizon cost is the terminal cost") {
  const auto& sys = fixtures::bundled_system();
  const auto& mpc = fixtures::bundled_mpc();
  DisturbanceProcess proc(sys.D, 0.9, 6);
  Vec x0(3);
  x0 << 0.5, -0.25, 1.0;
  const auto res = run_closed_loop([](const Vec&) { return Vec::Zero(2); }, sys,
                                   *mpc.cost, x0, 0, proc, false);
  CHECK(res.cost == doctest::Approx(mpc.cost->terminal(x0)));
  CHECK(res.states.size() == 1);
}

TEST_CASE("closed loop: policy exceptions mark the trajectory failed") {
  const auto& sys = fixtures::bundled_system();
  const auto& mpc = fixtures::bundled_mpc();
  DisturbanceProcess proc(sys.D, 0.9, 7);
  const auto res = run_closed_loop(
      [](const Vec&) -> Vec { throw std::runtime_error("boom"); }, sys, *mpc.cost,
      Vec::Zero(3), 5, proc, false);
  CHECK(res.failed);
  CHECK(res.failure == "boom");
}

TEST_CASE("closed loop: gauge policy never leaves S under disturbances") {
  const auto& sys = fixtures::bundled_system();
  const auto& mpc = fixtures::bundled_mpc();
  const AffinePhaseOne p1 = *synthesize_affine(sys);
  GaugePolicy pol;
  pol.mlp = MlpParams::init(3, 16, 2, mpc.seq_dim(), 99);
  const FirstActionPolicy act = [&](const Vec& x) {
    return extract_first_action(policy_forward(pol, mpc, sys, p1, x), mpc.m);
  };
  for (int tr = 0; tr < 10; ++tr) {
    DisturbanceProcess proc(sys.D, 0.9, 100 + tr);
    const Vec x0 = sample_uniform(sys.S, 1, 200 + tr).front();
    const auto res = run_closed_loop(act, sys, *mpc.cost, x0, 50, proc, false);
    REQUIRE(!res.failed);
    CHECK(res.violations == 0);
  }
}

TEST_CASE("benchmark: deterministic without timing and row bookkeeping") {
  const auto& sys = fixtures::bundled_system();
  const auto& mpc = fixtures::bundled_mpc();
  const AffinePhaseOne p1 = *synthesize_affine(sys);
  std::vector<BenchPolicy> policies;
  policies.push_back(BenchPolicy{
      "phase1",
      [&](const Vec& x) { return extract_first_action(rollout_phase1(mpc, sys, p1, x).mu0, mpc.m); },
      [&](const Vec& x) { return rollout_phase1(mpc, sys, p1, x).mu0; }});
  policies.push_back(BenchPolicy{
      "oracle",
      [&](const Vec& x) { return extract_first_action(solve_mpc_oracle(mpc, x).useq, mpc.m); },
      [&](const Vec& x) { return solve_mpc_oracle(mpc, x).useq; }});

  std::vector<BenchSummary> sum_a, sum_b;
  const auto rows_a = benchmark_suite(policies, sys, mpc, 5, 10, 42, false, &sum_a);
  const auto rows_b = benchmark_suite(policies, sys, mpc, 5, 10, 42, false, &sum_b);
  REQUIRE(rows_a.size() == 10);  // 2 policies x 5 trajectories
  for (size_t i = 0; i < rows_a.size(); ++i) {
    CHECK(rows_a[i].trajectory_cost == rows_b[i].trajectory_cost);
    CHECK(rows_a[i].mean_action_seconds == 0.0);
    CHECK(rows_a[i].delta_open_loop == rows_b[i].delta_open_loop);
  }
  REQUIRE(sum_a.size() == 2);
  CHECK(sum_a[0].policy == "phase1");
  CHECK(sum_a[1].delta_open_loop == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(sum_a[0].cost_q1 <= sum_a[0].cost_median);
  CHECK(sum_a[0].cost_median <= sum_a[0].cost_q3);
}

TEST_CASE("benchmark: timing produces positive per-action means") {
  const auto& sys = fixtures::bundled_system();
  const auto& mpc = fixtures::bundled_mpc();
  std::vector<BenchPolicy> policies;
  policies.push_back(BenchPolicy{
      "oracle",
      [&](const Vec& x) { return extract_first_action(solve_mpc_oracle(mpc, x).useq, mpc.m); },
      [&](const Vec& x) { return solve_mpc_oracle(mpc, x).useq; }});
  std::vector<BenchSummary> sums;
  benchmark_suite(policies, sys, mpc, 2, 5, 1, true, &sums);
  REQUIRE(sums.size() == 1);
  CHECK(sums[0].mean_action_seconds > 0.0);
}
