#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "safempc/linalg.hpp"

namespace safempc {

/// Fully connected ReLU network; columns of the data matrices are samples.
struct MlpParams {
  std::vector<Mat> W;
  std::vector<Vec> b;

  /// n inputs -> `hidden` hidden ReLU layers of size `width` -> out (linear).
  static MlpParams init(int in, int width, int hidden, int out, std::uint64_t seed);

  int layers() const { return static_cast<int>(W.size()); }
  int input_dim() const { return static_cast<int>(W.front().cols()); }
  int output_dim() const { return static_cast<int>(W.back().rows()); }
  int param_count() const;

  Vec flatten() const;
  void unflatten(const Vec& theta);

  nlohmann::json to_json() const;
  static MlpParams from_json(const nlohmann::json& j);
};

struct MlpCache {
  Mat input;
  std::vector<Mat> pre;   ///< pre-activations per layer
  std::vector<Mat> post;  ///< post-activations (ReLU outputs); last entry linear
};

/// Gradient container mirroring MlpParams.
struct MlpGrads {
  std::vector<Mat> dW;
  std::vector<Vec> db;

  static MlpGrads zeros_like(const MlpParams& p);
  void add_scaled(const MlpGrads& other, double scale);
  Vec flatten() const;
};

/// Batched forward pass: X is (in x batch), returns (out x batch).
Mat mlp_forward(const MlpParams& p, const Mat& X, MlpCache* cache = nullptr);

/// Reverse pass for the batched forward; `upstream` is (out x batch).
/// Gradients sum over the batch (callers scale upstream for means).
MlpGrads mlp_backward(const MlpParams& p, const MlpCache& cache, const Mat& upstream);

struct AdamState {
  std::vector<Mat> mW, vW;
  std::vector<Vec> mb, vb;
  long t = 0;

  static AdamState zeros_like(const MlpParams& p);
};

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st, double lr,
               const AdamSettings& cfg = {});

}  // namespace safempc
