#include "safempc/config.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace safempc {

namespace {

nlohmann::json matrix_to_json(const Mat& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

Mat matrix_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  if (rows == 0) throw std::invalid_argument("config: empty matrix");
  const int cols = static_cast<int>(j[0].size());
  Mat M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) M(i, c) = j[i][c].get<double>();
  return M;
}

}  // namespace

nlohmann::json SystemConfig::to_json() const {
  nlohmann::json j;
  j["A"] = matrix_to_json(A);
  j["B"] = matrix_to_json(B);
  j["X"] = X.to_json();
  j["U"] = U.to_json();
  j["D"] = D.to_json();
  if (S) j["S"] = S->to_json();
  if (reference_policy) j["reference_policy"] = reference_policy->to_json();
  j["horizon"] = horizon;
  j["c1"] = c1;
  j["c2"] = c2;
  j["seed"] = seed;
  return j;
}

SystemConfig SystemConfig::from_json(const nlohmann::json& j) {
  SystemConfig cfg;
  cfg.A = matrix_from_json(j.at("A"));
  cfg.B = matrix_from_json(j.at("B"));
  cfg.X = Polytope::from_json(j.at("X"));
  cfg.U = Polytope::from_json(j.at("U"));
  cfg.D = Polytope::from_json(j.at("D"));
  if (j.contains("S")) cfg.S = Polytope::from_json(j.at("S"));
  if (j.contains("reference_policy"))
    cfg.reference_policy = AffinePhaseOne::from_json(j.at("reference_policy"));
  cfg.horizon = j.at("horizon").get<int>();
  cfg.c1 = j.at("c1").get<double>();
  cfg.c2 = j.at("c2").get<double>();
  cfg.seed = j.value("seed", 0ULL);
  return cfg;
}

SystemConfig SystemConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

void SystemConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << to_json().dump(2) << "\n";
}

LinearSystem SystemConfig::build() const {
  if (!S)
    throw std::runtime_error(
        "config: no invariant set S in this file (run the rci command first)");
  return LinearSystem::make(A, B, X, U, D, *S);
}

}  // namespace safempc
