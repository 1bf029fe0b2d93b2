#include "safempc/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace safempc {

MlpParams MlpParams::init(int in, int width, int hidden, int out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MlpParams p;
  std::vector<int> dims;
  dims.push_back(in);
  for (int i = 0; i < hidden; ++i) dims.push_back(width);
  dims.push_back(out);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const bool last = (l + 2 == dims.size());
    const double scale = last ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
    Mat W(dims[l + 1], dims[l]);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = scale * normal(rng);
    p.W.push_back(std::move(W));
    p.b.push_back(Vec::Zero(dims[l + 1]));
  }
  return p;
}

int MlpParams::param_count() const {
  int n = 0;
  for (int l = 0; l < layers(); ++l) n += static_cast<int>(W[l].size() + b[l].size());
  return n;
}

Vec MlpParams::flatten() const {
  Vec theta(param_count());
  Eigen::Index at = 0;
  for (int l = 0; l < layers(); ++l) {
    theta.segment(at, W[l].size()) = Eigen::Map<const Vec>(W[l].data(), W[l].size());
    at += W[l].size();
    theta.segment(at, b[l].size()) = b[l];
    at += b[l].size();
  }
  return theta;
}

void MlpParams::unflatten(const Vec& theta) {
  if (theta.size() != param_count())
    throw std::invalid_argument("MlpParams::unflatten: size mismatch");
  Eigen::Index at = 0;
  for (int l = 0; l < layers(); ++l) {
    Eigen::Map<Vec>(W[l].data(), W[l].size()) = theta.segment(at, W[l].size());
    at += W[l].size();
    b[l] = theta.segment(at, b[l].size());
    at += b[l].size();
  }
}

nlohmann::json MlpParams::to_json() const {
  nlohmann::json layers_json = nlohmann::json::array();
  for (int l = 0; l < layers(); ++l) {
    nlohmann::json jW = nlohmann::json::array();
    for (Eigen::Index i = 0; i < W[l].rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < W[l].cols(); ++j) row.push_back(W[l](i, j));
      jW.push_back(row);
    }
    nlohmann::json jb = nlohmann::json::array();
    for (Eigen::Index i = 0; i < b[l].size(); ++i) jb.push_back(b[l][i]);
    layers_json.push_back({{"W", jW}, {"b", jb}});
  }
  return {{"format", "mlp-v1"}, {"layers", layers_json}};
}

MlpParams MlpParams::from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != "mlp-v1")
    throw std::invalid_argument("MlpParams::from_json: unknown format");
  MlpParams p;
  for (const auto& layer : j.at("layers")) {
    const auto& jW = layer.at("W");
    const int rows = static_cast<int>(jW.size());
    const int cols = static_cast<int>(jW[0].size());
    Mat W(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int c = 0; c < cols; ++c) W(i, c) = jW[i][c].get<double>();
    Vec b(rows);
    for (int i = 0; i < rows; ++i) b[i] = layer.at("b")[i].get<double>();
    p.W.push_back(std::move(W));
    p.b.push_back(std::move(b));
  }
  return p;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  MlpGrads g;
  for (int l = 0; l < p.layers(); ++l) {
    g.dW.push_back(Mat::Zero(p.W[l].rows(), p.W[l].cols()));
    g.db.push_back(Vec::Zero(p.b[l].size()));
  }
  return g;
}

void MlpGrads::add_scaled(const MlpGrads& other, double scale) {
  for (size_t l = 0; l < dW.size(); ++l) {
    dW[l] += scale * other.dW[l];
    db[l] += scale * other.db[l];
  }
}

Vec MlpGrads::flatten() const {
  Eigen::Index total = 0;
  for (size_t l = 0; l < dW.size(); ++l) total += dW[l].size() + db[l].size();
  Vec v(total);
  Eigen::Index at = 0;
  for (size_t l = 0; l < dW.size(); ++l) {
    v.segment(at, dW[l].size()) = Eigen::Map<const Vec>(dW[l].data(), dW[l].size());
    at += dW[l].size();
    v.segment(at, db[l].size()) = db[l];
    at += db[l].size();
  }
  return v;
}

Mat mlp_forward(const MlpParams& p, const Mat& X, MlpCache* cache) {
  if (X.rows() != p.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  Mat z = X;
  if (cache) {
    cache->input = X;
    cache->pre.clear();
    cache->post.clear();
  }
  const int L = p.layers();
  for (int l = 0; l < L; ++l) {
    Mat a = p.W[l] * z;
    a.colwise() += p.b[l];
    if (l + 1 < L) {
      z = a.cwiseMax(0.0);  // ReLU
    } else {
      z = a;
    }
    if (cache) {
      cache->pre.push_back(std::move(a));
      cache->post.push_back(z);
    }
  }
  return z;
}

MlpGrads mlp_backward(const MlpParams& p, const MlpCache& cache, const Mat& upstream) {
  const int L = p.layers();
  MlpGrads g = MlpGrads::zeros_like(p);
  Mat delta = upstream;
  for (int l = L - 1; l >= 0; --l) {
    if (l < L - 1) {
      // ReLU mask; derivative 0 at exactly 0
      delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    }
    const Mat& below = (l == 0) ? cache.input : cache.post[l - 1];
    g.dW[l] = delta * below.transpose();
    g.db[l] = delta.rowwise().sum();
    if (l > 0) delta = p.W[l].transpose() * delta;
  }
  return g;
}

AdamState AdamState::zeros_like(const MlpParams& p) {
  AdamState s;
  for (int l = 0; l < p.layers(); ++l) {
    s.mW.push_back(Mat::Zero(p.W[l].rows(), p.W[l].cols()));
    s.vW.push_back(Mat::Zero(p.W[l].rows(), p.W[l].cols()));
    s.mb.push_back(Vec::Zero(p.b[l].size()));
    s.vb.push_back(Vec::Zero(p.b[l].size()));
  }
  return s;
}

void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st, double lr,
               const AdamSettings& cfg) {
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (int l = 0; l < p.layers(); ++l) {
    st.mW[l] = cfg.beta1 * st.mW[l] + (1.0 - cfg.beta1) * g.dW[l];
    st.vW[l] = cfg.beta2 * st.vW[l].array().matrix() +
               (1.0 - cfg.beta2) * g.dW[l].array().square().matrix();
    st.mb[l] = cfg.beta1 * st.mb[l] + (1.0 - cfg.beta1) * g.db[l];
    st.vb[l] = cfg.beta2 * st.vb[l].array().matrix() +
               (1.0 - cfg.beta2) * g.db[l].array().square().matrix();
    p.W[l].array() -= lr * (st.mW[l].array() / bc1) /
                      ((st.vW[l].array() / bc2).sqrt() + cfg.eps);
    p.b[l].array() -= lr * (st.mb[l].array() / bc1) /
                      ((st.vb[l].array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace safempc
