#include <doctest.h>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "safempc/config.hpp"

using namespace safempc;

TEST_CASE("config: parse -> serialize -> parse is the identity") {
  const SystemConfig& cfg = fixtures::bundled_config();
  const nlohmann::json once = cfg.to_json();
  const SystemConfig reparsed = SystemConfig::from_json(once);
  const nlohmann::json twice = reparsed.to_json();
  CHECK(once == twice);
  CHECK((reparsed.A - cfg.A).cwiseAbs().maxCoeff() == 0.0);
  CHECK((reparsed.S->g() - cfg.S->g()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config: missing S blocks system construction") {
  SystemConfig cfg = fixtures::bundled_config();
  cfg.S.reset();
  CHECK_THROWS_WITH_AS(cfg.build(), doctest::Contains("rci"), std::runtime_error);
}

TEST_CASE("config: bundled system invariants hold at load") {
  const LinearSystem sys = fixtures::bundled_config().build();
  CHECK(subset_of(sys.S, sys.X));
  CHECK(sys.T.g().minCoeff() > 0.0);
  // T is exactly the disturbance-tightened S
  const Polytope T2 = tighten(sys.S, sys.D);
  CHECK((sys.T.g() - T2.g()).cwiseAbs().maxCoeff() < 1e-12);
}
