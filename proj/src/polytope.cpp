#include "safempc/polytope.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "safempc/lp.hpp"

namespace safempc {

Polytope::Polytope(Mat F, Vec g) : F_(std::move(F)), g_(std::move(g)) {
  if (F_.rows() == 0 || F_.cols() == 0)
    throw std::invalid_argument("Polytope: empty halfspace system");
  if (F_.rows() != g_.size())
    throw std::invalid_argument("Polytope: F/g row mismatch");
  for (Eigen::Index i = 0; i < F_.rows(); ++i) {
    if (F_.row(i).norm() < 1e-14)
      throw std::invalid_argument("Polytope: zero row in F");
  }
}

Polytope Polytope::box(const Vec& lo, const Vec& hi) {
  const int n = static_cast<int>(lo.size());
  Mat F(2 * n, n);
  Vec g(2 * n);
  F.topRows(n) = Mat::Identity(n, n);
  F.bottomRows(n) = -Mat::Identity(n, n);
  g.head(n) = hi;
  g.tail(n) = -lo;
  return Polytope(std::move(F), std::move(g));
}

Polytope Polytope::inf_ball(int n, double radius) {
  return box(Vec::Constant(n, -radius), Vec::Constant(n, radius));
}

bool Polytope::contains(const Vec& z, double tol) const {
  return (F_ * z - g_).maxCoeff() <= tol;
}

Vec Polytope::slack(const Vec& z) const { return g_ - F_ * z; }

Polytope Polytope::normalized() const {
  Mat F = F_;
  Vec g = g_;
  for (Eigen::Index i = 0; i < F.rows(); ++i) {
    const double nr = F.row(i).norm();
    F.row(i) /= nr;
    g[i] /= nr;
  }
  return Polytope(std::move(F), std::move(g));
}

nlohmann::json Polytope::to_json() const {
  nlohmann::json jF = nlohmann::json::array();
  for (Eigen::Index i = 0; i < F_.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < F_.cols(); ++j) row.push_back(F_(i, j));
    jF.push_back(row);
  }
  nlohmann::json jg = nlohmann::json::array();
  for (Eigen::Index i = 0; i < g_.size(); ++i) jg.push_back(g_[i]);
  return {{"F", jF}, {"g", jg}};
}

Polytope Polytope::from_json(const nlohmann::json& j) {
  const auto& jF = j.at("F");
  const auto& jg = j.at("g");
  const int k = static_cast<int>(jF.size());
  if (k == 0) throw std::invalid_argument("Polytope::from_json: empty F");
  const int n = static_cast<int>(jF[0].size());
  Mat F(k, n);
  Vec g(k);
  for (int i = 0; i < k; ++i) {
    for (int c = 0; c < n; ++c) F(i, c) = jF[i][c].get<double>();
    g[i] = jg[i].get<double>();
  }
  return Polytope(std::move(F), std::move(g));
}

double gauge(const Polytope& P, const Vec& v) {
  if (!P.origin_interior())
    throw std::invalid_argument("gauge: polytope is not a C-set (some g <= 0)");
  double m = 0.0;
  for (int i = 0; i < P.rows(); ++i) {
    m = std::max(m, P.F().row(i).dot(v) / P.g()[i]);
  }
  return m;
}

int gauge_active_row(const Polytope& P, const Vec& v) {
  double best = 0.0;
  int arg = -1;
  for (int i = 0; i < P.rows(); ++i) {
    const double val = P.F().row(i).dot(v) / P.g()[i];
    if (val > best) {
      best = val;
      arg = i;
    }
  }
  return arg;
}

Vec gauge_map(const Polytope& P, const Polytope& Q, const Vec& v) {
  const double gp = gauge(P, v);
  const double gq = gauge(Q, v);
  if (gp > 1.0 + 1e-9)
    throw std::invalid_argument("gauge_map: v outside source set (gamma_P > 1)");
  if (gp == 0.0 || gq == 0.0) return Vec::Zero(v.size());
  return (gp / gq) * v;
}

Vec gauge_map_vjp(const Polytope& P, const Polytope& Q, const Vec& v, const Vec& upstream) {
  const double gp = gauge(P, v);
  const double gq = gauge(Q, v);
  if (gp > 1.0 + 1e-9)
    throw std::invalid_argument("gauge_map_vjp: v outside source set");
  if (gp == 0.0 || gq == 0.0) {
    // Origin: rank-one term vanishes with v; keep the deterministic
    // lowest-index-row ratio so that P = Q still yields the identity.
    const double rp = P.F().row(0).norm() / P.g()[0];
    const double rq = Q.F().row(0).norm() / Q.g()[0];
    return (rp / rq) * upstream;
  }
  const int ip = gauge_active_row(P, v);
  const int iq = gauge_active_row(Q, v);
  const Vec p = P.F().row(ip).transpose() / P.g()[ip];
  const Vec q = Q.F().row(iq).transpose() / Q.g()[iq];
  // J = (gp/gq) I + v (p/gq - gp q/gq^2)'; return J'u.
  const double ratio = gp / gq;
  const Vec lin = p / gq - (ratio / gq) * q;
  return ratio * upstream + lin * v.dot(upstream);
}

double support(const Polytope& P, const Vec& d) {
  LpProblem lp;
  lp.c = -d;
  lp.G = P.F();
  lp.h = P.g();
  const SolveReport rep = solve_lp(lp, 1e-10);
  if (rep.status == SolveStatus::Unbounded)
    return std::numeric_limits<double>::infinity();
  if (!rep.optimal()) {
#ifdef SAFEMPC_DUMP_FAILED_LP
    {
      std::ofstream f("/tmp/support_fail.txt");
      f.precision(17);
      f << lp.G.rows() << " " << lp.G.cols() << "\n";
      for (Eigen::Index r = 0; r < lp.G.rows(); ++r) {
        for (Eigen::Index c = 0; c < lp.G.cols(); ++c) f << lp.G(r, c) << " ";
        f << lp.h[r] << "\n";
      }
      for (Eigen::Index c = 0; c < lp.c.size(); ++c) f << lp.c[c] << " ";
      f << "\n";
      f.flush();
    }
#endif
    throw std::runtime_error("support: LP failed with status " + to_string(rep.status));
  }
  return -rep.objective;
}

Polytope tighten(const Polytope& S, const Polytope& D) {
  Vec g = S.g();
  for (int i = 0; i < S.rows(); ++i) {
    const double sup = support(D, S.F().row(i).transpose());
    if (!std::isfinite(sup)) throw std::invalid_argument("tighten: unbounded disturbance set");
    g[i] -= sup;
  }
  return Polytope(S.F(), std::move(g));
}

bool contains_point(const Polytope& P, const Vec& z, double tol) { return P.contains(z, tol); }

std::optional<std::pair<Vec, Vec>> as_box(const Polytope& P) {
  const int n = P.dim();
  const double inf = std::numeric_limits<double>::infinity();
  Vec lo = Vec::Constant(n, -inf), hi = Vec::Constant(n, inf);
  for (int i = 0; i < P.rows(); ++i) {
    int nz = -1;
    for (int c = 0; c < n; ++c) {
      if (std::abs(P.F()(i, c)) > 1e-12) {
        if (nz >= 0) return std::nullopt;  // two nonzeros: not axis-aligned
        nz = c;
      }
    }
    const double a = P.F()(i, nz);
    const double bound = P.g()[i] / a;
    if (a > 0.0) hi[nz] = std::min(hi[nz], bound);
    else lo[nz] = std::max(lo[nz], bound);
  }
  if (!lo.allFinite() || !hi.allFinite()) return std::nullopt;
  return std::make_pair(lo, hi);
}

std::pair<Vec, Vec> bounding_box(const Polytope& P) {
  const int n = P.dim();
  Vec lo(n), hi(n);
  Vec e = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    e[i] = 1.0;
    hi[i] = support(P, e);
    e[i] = -1.0;
    lo[i] = -support(P, e);
    e[i] = 0.0;
  }
  return {lo, hi};
}

namespace {

// Chebyshev LP with signed radius: negative values certify an empty set.
std::pair<Vec, double> signed_chebyshev(const Polytope& P) {
  const int n = P.dim();
  const int k = P.rows();
  // max r  s.t.  F^(i)'c + r ||F^(i)|| <= g^(i)
  LpProblem lp;
  lp.c = Vec::Zero(n + 1);
  lp.c[n] = -1.0;
  lp.G = Mat(k, n + 1);
  lp.h = P.g();
  for (int i = 0; i < k; ++i) {
    lp.G.row(i).head(n) = P.F().row(i);
    lp.G(i, n) = P.F().row(i).norm();
  }
  const SolveReport rep = solve_lp(lp, 1e-10);
  if (rep.status == SolveStatus::Unbounded)
    return {Vec::Zero(n), std::numeric_limits<double>::infinity()};
  if (!rep.optimal())
    throw std::runtime_error("chebyshev: LP failed with status " + to_string(rep.status));
  return {rep.x.head(n), rep.x[n]};
}

}  // namespace

CSetCertificate chebyshev(const Polytope& P) {
  CSetCertificate cert;
  const auto [lo, hi] = bounding_box(P);
  cert.bounded = lo.allFinite() && hi.allFinite();
  auto [center, r] = signed_chebyshev(P);
  cert.center = std::move(center);
  cert.radius = std::max(0.0, r);
  return cert;
}

std::vector<Vec> sample_uniform(const Polytope& P, int count, std::uint64_t seed) {
  std::vector<Vec> out;
  if (count <= 0) return out;
  const auto [lo, hi] = bounding_box(P);
  if (!lo.allFinite() || !hi.allFinite())
    throw std::invalid_argument("sample_uniform: unbounded polytope");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = P.dim();
  Vec x(n);
  std::int64_t attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    for (int i = 0; i < n; ++i) x[i] = lo[i] + (hi[i] - lo[i]) * unit(rng);
    ++attempts;
    if (P.contains(x, 1e-12)) out.push_back(x);
    if (attempts >= 1000000 && out.empty())
      throw std::runtime_error("sample_uniform: acceptance rate below 1e-6");
  }
  return out;
}

namespace {

// Drops coincident rows (same unit normal within 1e-9), keeping the
// tightest offset. Fourier-Motzkin output is full of these and they make
// the redundancy LPs dual-degenerate.
Polytope dedup_rows(const Polytope& P) {
  const Polytope N = P.normalized();
  std::vector<int> kept;
  Vec g = N.g();
  for (int i = 0; i < N.rows(); ++i) {
    bool duplicate = false;
    for (int j : kept) {
      if ((N.F().row(i) - N.F().row(j)).cwiseAbs().maxCoeff() < 1e-9) {
        g[j] = std::min(g[j], N.g()[i]);
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(i);
  }
  if (static_cast<int>(kept.size()) == N.rows()) return N;
  Mat F(kept.size(), N.dim());
  Vec go(kept.size());
  for (size_t r = 0; r < kept.size(); ++r) {
    F.row(r) = N.F().row(kept[r]);
    go[r] = g[kept[r]];
  }
  return Polytope(std::move(F), std::move(go));
}

}  // namespace

Polytope remove_redundancy(const Polytope& Pin, double tol) {
  const Polytope P = dedup_rows(Pin);
  const int k = P.rows();
  std::vector<bool> keep(k, true);
  for (int i = 0; i < k; ++i) {
    // test row i against the others still kept
    std::vector<int> rest;
    for (int j = 0; j < k; ++j)
      if (j != i && keep[j]) rest.push_back(j);
    if (rest.empty()) continue;
    Mat Fr(rest.size(), P.dim());
    Vec gr(rest.size());
    for (size_t r = 0; r < rest.size(); ++r) {
      Fr.row(r) = P.F().row(rest[r]);
      gr[r] = P.g()[rest[r]];
    }
    const double sup = support(Polytope(Fr, gr), P.F().row(i).transpose());
    if (sup <= P.g()[i] + tol) keep[i] = false;
  }
  int kept = 0;
  for (int i = 0; i < k; ++i) kept += keep[i];
  if (kept == 0) return P;
  Mat F(kept, P.dim());
  Vec g(kept);
  int r = 0;
  for (int i = 0; i < k; ++i) {
    if (!keep[i]) continue;
    F.row(r) = P.F().row(i);
    g[r] = P.g()[i];
    ++r;
  }
  return Polytope(std::move(F), std::move(g));
}

bool subset_of(const Polytope& P, const Polytope& Q, double tol) {
  for (int i = 0; i < Q.rows(); ++i) {
    if (support(P, Q.F().row(i).transpose()) > Q.g()[i] + tol) return false;
  }
  return true;
}

Polytope intersect(const Polytope& P, const Polytope& Q) {
  Mat F(P.rows() + Q.rows(), P.dim());
  Vec g(P.rows() + Q.rows());
  F.topRows(P.rows()) = P.F();
  F.bottomRows(Q.rows()) = Q.F();
  g.head(P.rows()) = P.g();
  g.tail(Q.rows()) = Q.g();
  return Polytope(std::move(F), std::move(g));
}

namespace {

// One Fourier-Motzkin step: eliminate the last coordinate. Returns nullopt
// when the projected system is provably empty (0 <= negative).
std::optional<Polytope> fm_eliminate_last(const Mat& F, const Vec& g) {
  const int n = static_cast<int>(F.cols());
  std::vector<int> pos, neg, zer;
  for (Eigen::Index i = 0; i < F.rows(); ++i) {
    const double a = F(i, n - 1);
    if (a > 1e-11) pos.push_back(static_cast<int>(i));
    else if (a < -1e-11) neg.push_back(static_cast<int>(i));
    else zer.push_back(static_cast<int>(i));
  }
  std::vector<Vec> rows;
  std::vector<double> rhs;
  for (int i : zer) {
    rows.emplace_back(F.row(i).head(n - 1));
    rhs.push_back(g[i]);
  }
  for (int i : pos) {
    for (int j : neg) {
      const double ai = F(i, n - 1), aj = F(j, n - 1);
      Vec row = F.row(i).head(n - 1) / ai - F.row(j).head(n - 1) / aj;
      const double b = g[i] / ai - g[j] / aj;
      if (row.norm() < 1e-11) {
        if (b < -1e-9) return std::nullopt;  // empty projection
        continue;
      }
      rows.push_back(std::move(row));
      rhs.push_back(b);
    }
  }
  if (rows.empty()) {
    // projection is unconstrained; stand in with an enormous box
    return Polytope::inf_ball(n - 1, 1e15);
  }
  Mat Fo(rows.size(), n - 1);
  Vec go(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    Fo.row(i) = rows[i].transpose();
    go[i] = rhs[i];
  }
  return Polytope(std::move(Fo), std::move(go)).normalized();
}

bool is_empty(const Polytope& P) {
  const auto [center, r] = signed_chebyshev(P);
  return std::isfinite(r) && r < -1e-9;
}

}  // namespace

std::optional<Polytope> pre_set(const Polytope& T, const Polytope& U, const Mat& A,
                                const Mat& B, const Vec& c) {
  const int n = static_cast<int>(A.cols());
  const int m = static_cast<int>(B.cols());
  Mat F(T.rows() + U.rows(), n + m);
  Vec g(T.rows() + U.rows());
  F.topLeftCorner(T.rows(), n) = T.F() * A;
  F.topRightCorner(T.rows(), m) = T.F() * B;
  g.head(T.rows()) = T.g() - T.F() * c;
  F.bottomLeftCorner(U.rows(), n).setZero();
  F.bottomRightCorner(U.rows(), m) = U.F();
  g.tail(U.rows()) = U.g();

  Polytope cur(std::move(F), std::move(g));
  for (int e = 0; e < m; ++e) {
    auto next = fm_eliminate_last(cur.F(), cur.g());
    if (!next) return std::nullopt;
    cur = remove_redundancy(*next);
  }
  if (is_empty(cur)) return std::nullopt;
  return cur;
}

RciResult rci_iterate(const Polytope& X, const Polytope& U, const Polytope& D,
                      const Mat& A, const Mat& B, int max_iter) {
  RciResult res;
  Polytope S = remove_redundancy(X.normalized());
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    Polytope T = tighten(S, D);
    if (T.g().minCoeff() < -1e-12) return res;  // disturbance swallows the set
    auto pre = pre_set(T, U, A, B, Vec::Zero(A.rows()));
    if (!pre) return res;
    Polytope next = remove_redundancy(intersect(*pre, S).normalized());
    if (is_empty(next)) return res;
    if (subset_of(S, next)) {
      res.set = next;
      res.certified = true;
      return res;
    }
    S = next;
  }
  res.set = S;
  res.certified = false;
  return res;
}

namespace {

// Stack [base; Fr x <= gr] dropping vacuous zero rows; false when a zero row
// is plainly infeasible (0 <= negative).
std::optional<Polytope> stack_rows(const Polytope& base, const Mat& Fr, const Vec& gr) {
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < Fr.rows(); ++i) {
    if (Fr.row(i).norm() < 1e-12) {
      if (gr[i] < -1e-12) return std::nullopt;
      continue;
    }
    keep.push_back(static_cast<int>(i));
  }
  Mat F(base.rows() + keep.size(), base.dim());
  Vec g(base.rows() + keep.size());
  F.topRows(base.rows()) = base.F();
  g.head(base.rows()) = base.g();
  for (size_t r = 0; r < keep.size(); ++r) {
    F.row(base.rows() + r) = Fr.row(keep[r]);
    g[base.rows() + r] = gr[keep[r]];
  }
  return Polytope(std::move(F), std::move(g));
}

}  // namespace

RciResult invariant_set_affine(const Polytope& X, const Polytope& U, const Polytope& D,
                               const Mat& A, const Mat& B, const Mat& W, const Vec& w,
                               int max_iter) {
  RciResult res;
  const Mat Acl = A + B * W;
  const Vec bcl = B * w;
  auto seeded = stack_rows(X, U.F() * W, U.g() - U.F() * w);
  if (!seeded) return res;  // input offset alone violates U
  Polytope S = remove_redundancy(seeded->normalized());
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    Polytope T = tighten(S, D);
    if (T.g().minCoeff() < -1e-12) return res;
    auto stacked = stack_rows(S, T.F() * Acl, T.g() - T.F() * bcl);
    if (!stacked) return res;
    Polytope next = remove_redundancy(stacked->normalized());
    if (is_empty(next)) return res;
    if (subset_of(S, next)) {
      res.set = next;
      res.certified = true;
      return res;
    }
    S = next;
  }
  res.set = S;
  res.certified = false;
  return res;
}

}  // namespace safempc
