#pragma once

#include <Eigen/Dense>

namespace safempc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Largest entry of v, 0 for an empty vector.
inline double max_coeff_or(const Vec& v, double fallback) {
  return v.size() == 0 ? fallback : v.maxCoeff();
}

}  // namespace safempc
