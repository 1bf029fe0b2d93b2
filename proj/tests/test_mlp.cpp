#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "safempc/finite_diff.hpp"
#include "safempc/mlp.hpp"

using namespace safempc;

TEST_CASE("mlp: zero weights expose the output bias") {
  MlpParams p = MlpParams::init(3, 8, 2, 4, 0);
  for (auto& W : p.W) W.setZero();
  p.b.back() << 0.1, -0.2, 0.3, -0.4;
  const Mat y = mlp_forward(p, Vec::Zero(3));
  CHECK((y.col(0) - p.b.back()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp: single linear layer is exactly affine") {
  MlpParams p;
  p.W.push_back(Mat(2, 2));
  p.W[0] << 1, 2, 3, 4;
  p.b.push_back(Vec(2));
  p.b[0] << -1, 1;
  Vec x(2);
  x << 0.5, -0.25;
  const Mat y = mlp_forward(p, x);
  CHECK((y.col(0) - (p.W[0] * x + p.b[0])).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp: backward matches finite differences") {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> normal(0.0, 1.0);
  MlpParams p = MlpParams::init(3, 6, 2, 2, 11);
  Mat X(3, 4);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = normal(rng);
  Mat up(2, 4);
  for (Eigen::Index i = 0; i < up.size(); ++i) up.data()[i] = normal(rng);

  MlpCache cache;
  mlp_forward(p, X, &cache);
  const Vec analytic = mlp_backward(p, cache, up).flatten();

  MlpParams probe = p;
  const Vec theta = p.flatten();
  const Vec numeric = finite_diff_grad(
      [&](const Vec& th) {
        probe.unflatten(th);
        return (mlp_forward(probe, X).array() * up.array()).sum();
      },
      theta, 1e-6);
  CHECK((analytic - numeric).norm() / numeric.norm() < 1e-4);
}

TEST_CASE("adam: zero gradients from rest leave parameters fixed") {
  MlpParams p = MlpParams::init(2, 4, 1, 1, 3);
  const Vec before = p.flatten();
  AdamState st = AdamState::zeros_like(p);
  adam_step(p, MlpGrads::zeros_like(p), st, 1e-2);
  CHECK((p.flatten() - before).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam: zero gradients decay accumulated moments") {
  MlpParams p = MlpParams::init(2, 4, 1, 1, 3);
  AdamState st = AdamState::zeros_like(p);
  st.mW[0].setConstant(0.5);
  st.vW[0].setConstant(0.25);
  adam_step(p, MlpGrads::zeros_like(p), st, 1e-2);
  CHECK(st.mW[0](0, 0) == doctest::Approx(0.9 * 0.5));
  CHECK(st.vW[0](0, 0) == doctest::Approx(0.999 * 0.25));
}

TEST_CASE("adam: first step moves by -lr sign(g)") {
  MlpParams p = MlpParams::init(2, 4, 1, 1, 5);
  const Vec before = p.flatten();
  MlpGrads g = MlpGrads::zeros_like(p);
  for (auto& dW : g.dW) dW.setConstant(0.37);
  for (auto& db : g.db) db.setConstant(-0.11);
  AdamState st = AdamState::zeros_like(p);
  const double lr = 1e-3;
  adam_step(p, g, st, lr);
  const Vec after = p.flatten();
  for (Eigen::Index i = 0; i < before.size(); ++i) {
    const double step = after[i] - before[i];
    CHECK(std::abs(std::abs(step) - lr) < 1e-6 * lr + 1e-10);
  }
}

TEST_CASE("adam: optimizes a quadratic bowl") {
  // one linear neuron fitting y = 0: loss (w'x)^2 on fixed inputs
  MlpParams p;
  p.W.push_back(Mat(1, 2));
  p.W[0] << 2.0, -3.0;
  p.b.push_back(Vec::Zero(1));
  AdamState st = AdamState::zeros_like(p);
  Mat X(2, 8);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = normal(rng);
  std::vector<double> losses;
  for (int iter = 0; iter < 500; ++iter) {
    MlpCache cache;
    const Mat y = mlp_forward(p, X, &cache);
    losses.push_back(y.squaredNorm());
    const MlpGrads g = mlp_backward(p, cache, 2.0 * y);
    adam_step(p, g, st, 5e-2);
  }
  CHECK(losses.back() < 1e-4);
  // monotone decrease after warmup until the constant-step noise floor
  size_t floor_idx = losses.size();
  for (size_t i = 0; i < losses.size(); ++i) {
    if (losses[i] < 1e-8 * losses[0]) {
      floor_idx = i;
      break;
    }
  }
  REQUIRE(floor_idx > 120);
  for (size_t i = 100; i < floor_idx; ++i) CHECK(losses[i] <= losses[i - 1] + 1e-12);
}

TEST_CASE("mlp: flatten/unflatten and json round trips") {
  MlpParams p = MlpParams::init(3, 5, 2, 4, 123);
  MlpParams q = MlpParams::init(3, 5, 2, 4, 999);
  q.unflatten(p.flatten());
  CHECK((p.flatten() - q.flatten()).cwiseAbs().maxCoeff() == 0.0);
  const MlpParams r = MlpParams::from_json(p.to_json());
  CHECK((p.flatten() - r.flatten()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp: seeded init is deterministic") {
  const MlpParams a = MlpParams::init(3, 16, 2, 10, 42);
  const MlpParams b = MlpParams::init(3, 16, 2, 10, 42);
  CHECK((a.flatten() - b.flatten()).cwiseAbs().maxCoeff() == 0.0);
}
