#pragma once

#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "safempc/phase1.hpp"

namespace safempc {

/// On-disk system definition: dynamics, constraint polytopes, horizon and
/// cost weights. S may be absent until an invariant set has been computed;
/// reference_policy optionally records a known-good affine feasibility
/// policy for the shipped system.
struct SystemConfig {
  Mat A, B;
  Polytope X{Mat::Identity(1, 1), Vec::Ones(1)};
  Polytope U{Mat::Identity(1, 1), Vec::Ones(1)};
  Polytope D{Mat::Identity(1, 1), Vec::Ones(1)};
  std::optional<Polytope> S;
  std::optional<AffinePhaseOne> reference_policy;
  int horizon = 5;
  double c1 = 1.0;
  double c2 = 1.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SystemConfig from_json(const nlohmann::json& j);

  static SystemConfig load(const std::string& path);
  void save(const std::string& path) const;

  /// Builds the LinearSystem; throws when S is missing.
  LinearSystem build() const;
};

}  // namespace safempc
