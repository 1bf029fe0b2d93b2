#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "safempc/linalg.hpp"

namespace safempc {

/// Halfspace-representation polytope {z | F z <= g}. Immutable after
/// construction; all operations are pure.
class Polytope {
 public:
  Polytope(Mat F, Vec g);

  const Mat& F() const { return F_; }
  const Vec& g() const { return g_; }
  int dim() const { return static_cast<int>(F_.cols()); }
  int rows() const { return static_cast<int>(F_.rows()); }

  /// Axis-aligned box {lo <= z <= hi}.
  static Polytope box(const Vec& lo, const Vec& hi);
  /// radius * B_inf in dimension n.
  static Polytope inf_ball(int n, double radius = 1.0);

  bool contains(const Vec& z, double tol = 1e-9) const;
  /// g - F z, one entry per face.
  Vec slack(const Vec& z) const;

  /// C-set precondition used by the gauge operations: every offset strictly
  /// positive (origin interior). Boundedness is certified separately.
  bool origin_interior(double tol = 0.0) const { return g_.minCoeff() > tol; }

  /// Same set with unit-norm rows.
  Polytope normalized() const;

  nlohmann::json to_json() const;
  static Polytope from_json(const nlohmann::json& j);

 private:
  Mat F_;
  Vec g_;
};

struct CSetCertificate {
  Vec center;
  double radius = 0.0;
  bool bounded = false;
};

/// Gauge function gamma_P(v) = max_i F^(i)'v / g^(i), clamped at 0.
/// Requires all g^(i) > 0 (throws otherwise).
double gauge(const Polytope& P, const Vec& v);

/// Index of the maximizing row (lowest index on ties); -1 for v with
/// nonpositive gauge.
int gauge_active_row(const Polytope& P, const Vec& v);

/// Gauge map G(v | P, Q) = (gamma_P(v)/gamma_Q(v)) v, the bijection taking
/// level sets of gamma_P onto level sets of gamma_Q. Defined as 0 at v = 0.
/// Requires gamma_P(v) <= 1 + 1e-9.
Vec gauge_map(const Polytope& P, const Polytope& Q, const Vec& v);

/// Vector-Jacobian product of gauge_map at v. Where the maximizing rows of
/// both gauges are unique this is the exact Jacobian transpose applied to
/// `upstream`; at ties the lowest-index row is used.
Vec gauge_map_vjp(const Polytope& P, const Polytope& Q, const Vec& v, const Vec& upstream);

/// Support function max_{z in P} d'z; +inf when unbounded in direction d.
double support(const Polytope& P, const Vec& d);

/// Pontryagin-style row tightening: {x | F_S x <= g_S - h_D(F_S rows)}.
/// One support LP per row of S.
Polytope tighten(const Polytope& S, const Polytope& D);

bool contains_point(const Polytope& P, const Vec& z, double tol = 1e-9);

/// (lo, hi) when every row of P is axis-aligned (one nonzero per row) and
/// every axis is bounded both ways; nullopt otherwise.
std::optional<std::pair<Vec, Vec>> as_box(const Polytope& P);

/// Chebyshev center/radius (largest inscribed ball) plus a boundedness
/// certificate from the 2n axis LPs.
CSetCertificate chebyshev(const Polytope& P);

/// Per-axis bounds (lo, hi); entries are +-inf when unbounded.
std::pair<Vec, Vec> bounding_box(const Polytope& P);

/// Rejection sampling from the bounding box; approximately uniform.
/// Throws if the acceptance rate over a probe run drops below 1e-6.
std::vector<Vec> sample_uniform(const Polytope& P, int count, std::uint64_t seed);

/// Drops coincident rows, then rows whose halfspace is implied by the
/// others (per-row LP). The result has unit-norm rows.
Polytope remove_redundancy(const Polytope& P, double tol = 1e-9);

/// P subset of Q, certified by one support LP per row of Q.
bool subset_of(const Polytope& P, const Polytope& Q, double tol = 1e-7);

Polytope intersect(const Polytope& P, const Polytope& Q);

/// {x | exists u in U : A x + B u + c in T}, computed by Fourier-Motzkin
/// elimination of u with LP pruning after each eliminated coordinate.
/// Empty result is signalled by nullopt.
std::optional<Polytope> pre_set(const Polytope& T, const Polytope& U, const Mat& A,
                                const Mat& B, const Vec& c);

struct RciResult {
  std::optional<Polytope> set;  ///< nullopt when no invariant set exists in X
  bool certified = false;       ///< fixed point reached before max_iter
  int iterations = 0;
};

/// Backward-reachability iteration S_{k+1} = Pre(tighten(S_k, D)) /\ X for
/// the maximal robust control invariant subset of X.
RciResult rci_iterate(const Polytope& X, const Polytope& U, const Polytope& D,
                      const Mat& A, const Mat& B, int max_iter);

/// Maximal invariant set of the affine loop x+ = (A + B W)x + B w + d inside
/// X /\ {W x + w in U}; used to seed systems around a known feasible policy.
RciResult invariant_set_affine(const Polytope& X, const Polytope& U, const Polytope& D,
                               const Mat& A, const Mat& B, const Mat& W, const Vec& w,
                               int max_iter);

}  // namespace safempc
