#pragma once

#include <functional>

#include "safempc/linalg.hpp"

namespace safempc {

/// Central-difference gradient of a scalar field; the reference oracle for
/// every analytic gradient in this project.
inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                            double eps = 1e-5) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + eps;
    const double fp = f(xp);
    xp[i] = xi - eps;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace safempc
