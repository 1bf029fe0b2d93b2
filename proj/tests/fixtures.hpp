#pragma once

// Shared fixtures: the bundled 3-state benchmark system and a small
// hand-checkable double integrator style toy.

#include "safempc/config.hpp"
#include "safempc/mpc.hpp"

#ifndef SAFEMPC_CONFIG_DIR
#define SAFEMPC_CONFIG_DIR "configs"
#endif

namespace fixtures {

using namespace safempc;

inline const SystemConfig& bundled_config() {
  static const SystemConfig cfg =
      SystemConfig::load(std::string(SAFEMPC_CONFIG_DIR) + "/zeilinger3.json");
  return cfg;
}

inline const LinearSystem& bundled_system() {
  static const LinearSystem sys = bundled_config().build();
  return sys;
}

inline const CondensedMpc& bundled_mpc() {
  static const CondensedMpc mpc =
      condense(bundled_system(), bundled_config().horizon, bundled_config().c1,
               bundled_config().c2);
  return mpc;
}

/// Contractive 2-state toy: A = 0.5 I, B = I, S = B_inf is trivially an RCI.
inline LinearSystem toy_system(double disturbance = 0.05) {
  Mat A = 0.5 * Mat::Identity(2, 2);
  Mat B = Mat::Identity(2, 2);
  return LinearSystem::make(A, B, Polytope::inf_ball(2, 5.0), Polytope::inf_ball(2, 1.0),
                            Polytope::inf_ball(2, disturbance), Polytope::inf_ball(2, 1.0));
}

inline CondensedMpc toy_mpc(int horizon = 3) {
  static const LinearSystem sys = toy_system();
  return condense(sys, horizon, 1.0, 1.0);
}

}  // namespace fixtures
