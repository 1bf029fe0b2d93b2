#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "safempc/finite_diff.hpp"
#include "safempc/phase1.hpp"
#include "safempc/polytope.hpp"

using namespace safempc;

namespace {

// Random bounded C-set: a box plus extra random faces, offsets in [0.5, 2].
Polytope random_cset(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> offset(0.5, 2.0);
  const int extra = dim + 2;
  Mat F(2 * dim + extra, dim);
  Vec g(2 * dim + extra);
  F.topRows(dim) = Mat::Identity(dim, dim);
  F.middleRows(dim, dim) = -Mat::Identity(dim, dim);
  for (int i = 0; i < 2 * dim; ++i) g[i] = offset(rng);
  for (int i = 0; i < extra; ++i) {
    Vec a(dim);
    for (int j = 0; j < dim; ++j) a[j] = normal(rng);
    if (a.norm() < 0.1) a[0] = 1.0;
    F.row(2 * dim + i) = a.transpose();
    g[2 * dim + i] = offset(rng) * a.norm();
  }
  return Polytope(F, g);
}

Vec random_interior_point(const Polytope& P, std::mt19937_64& rng) {
  // random point of gauge at most ~0.95
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(P.dim());
  for (int j = 0; j < P.dim(); ++j) v[j] = normal(rng);
  const double gamma = gauge(P, v);
  std::uniform_real_distribution<double> scale(0.05, 0.95);
  return v * (scale(rng) / std::max(gamma, 1e-12));
}

}  // namespace

TEST_CASE("gauge: inf-ball gauge is the max norm") {
  const Polytope B = Polytope::inf_ball(2);
  Vec v(2);
  v << 0.5, -0.25;
  CHECK(gauge(B, v) == doctest::Approx(0.5));
  CHECK(gauge(B, Vec::Zero(2)) == 0.0);
}

TEST_CASE("gauge: componentwise ratio on a box") {
  Vec lo(2), hi(2);
  lo << -2, -1;
  hi << 2, 1;
  const Polytope P = Polytope::box(lo, hi);
  Vec v(2);
  v << 1, 1;
  CHECK(gauge(P, v) == doctest::Approx(1.0));
}

TEST_CASE("gauge: rejects non-C-sets") {
  Mat F(2, 1);
  F << 1, -1;
  Vec g(2);
  g << 1, 0;  // origin on the boundary
  CHECK_THROWS_AS(gauge(Polytope(F, g), Vec::Ones(1)), std::invalid_argument);
}

TEST_CASE("gauge: positive homogeneity") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.0, 3.0);
  const Polytope P = random_cset(3, rng);
  for (int t = 0; t < 50; ++t) {
    Vec v(3);
    for (int j = 0; j < 3; ++j) v[j] = normal(rng);
    const double a = scale(rng);
    CHECK(gauge(P, a * v) == doctest::Approx(a * gauge(P, v)).epsilon(1e-10));
  }
}

TEST_CASE("gauge: sublevel set matches membership") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Polytope P = random_cset(3, rng);
  for (int t = 0; t < 100; ++t) {
    Vec v(3);
    for (int j = 0; j < 3; ++j) v[j] = 2.0 * normal(rng);
    CHECK((gauge(P, v) <= 1.0) == contains_point(P, v, 1e-12));
  }
}

TEST_CASE("gauge_map: identity when source equals target") {
  std::mt19937_64 rng(7);
  const Polytope P = random_cset(3, rng);
  const Vec v = random_interior_point(P, rng);
  CHECK((gauge_map(P, P, v) - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gauge_map: pure scaling between nested balls") {
  const Polytope B = Polytope::inf_ball(2);
  const Polytope B2 = Polytope::inf_ball(2, 2.0);
  Vec v(2);
  v << 1, 0;
  const Vec out = gauge_map(B, B2, v);
  CHECK(out[0] == doctest::Approx(2.0));
  CHECK(out[1] == doctest::Approx(0.0));
}

TEST_CASE("gauge_map: zero maps to zero and out-of-set input is rejected") {
  const Polytope B = Polytope::inf_ball(3);
  const Polytope B2 = Polytope::inf_ball(3, 2.0);
  CHECK(gauge_map(B, B2, Vec::Zero(3)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(gauge_map(B, B2, Vec::Constant(3, 1.5)), std::invalid_argument);
}

TEST_CASE("gauge_map: bijective round trips on random C-set pairs") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 2 + static_cast<int>(trial % 5);
    const Polytope P = random_cset(dim, rng);
    const Polytope Q = random_cset(dim, rng);
    const Vec v = random_interior_point(P, rng);
    const Vec out = gauge_map(P, Q, v);
    CHECK(gauge(Q, out) == doctest::Approx(gauge(P, v)).epsilon(1e-10));
    CHECK(gauge(Q, out) <= 1.0 + 1e-9);
    const Vec back = gauge_map(Q, P, out);
    CHECK((back - v).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("gauge_map_vjp: identity pair passes upstream through") {
  std::mt19937_64 rng(9);
  const Polytope P = random_cset(3, rng);
  const Vec v = random_interior_point(P, rng);
  Vec up(3);
  up << 0.3, -1.1, 0.7;
  CHECK((gauge_map_vjp(P, P, v, up) - up).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gauge_map_vjp: matches finite differences at smooth points") {
  std::mt19937_64 rng(10);
  int checked = 0;
  for (int trial = 0; trial < 40 && checked < 20; ++trial) {
    const int dim = 2 + static_cast<int>(trial % 4);
    const Polytope P = random_cset(dim, rng);
    const Polytope Q = random_cset(dim, rng);
    const Vec v = random_interior_point(P, rng);

    // skip near-ties of the active rows (kinks of the max)
    auto top_gap = [&](const Polytope& R) {
      std::vector<double> vals;
      for (int i = 0; i < R.rows(); ++i) vals.push_back(R.F().row(i).dot(v) / R.g()[i]);
      std::sort(vals.begin(), vals.end(), std::greater<double>());
      return vals[0] - vals[1];
    };
    if (top_gap(P) < 1e-3 || top_gap(Q) < 1e-3 || gauge(P, v) < 0.05) continue;
    ++checked;

    Vec up(dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int j = 0; j < dim; ++j) up[j] = normal(rng);

    const Vec analytic = gauge_map_vjp(P, Q, v, up);
    const Vec numeric = finite_diff_grad(
        [&](const Vec& z) { return up.dot((gauge(P, z) / gauge(Q, z)) * z); }, v, 1e-6);
    CHECK((analytic - numeric).norm() / std::max(1.0, numeric.norm()) < 1e-4);
  }
  CHECK(checked >= 10);
}

TEST_CASE("gauge_map_vjp: scaling pair against finite differences") {
  const Polytope B = Polytope::inf_ball(2);
  const Polytope B2 = Polytope::inf_ball(2, 2.0);
  Vec v(2);
  v << 0.6, 0.2;
  Vec up(2);
  up << 1.0, -0.5;
  const Vec analytic = gauge_map_vjp(B, B2, v, up);
  const Vec numeric = finite_diff_grad(
      [&](const Vec& z) { return up.dot((gauge(B, z) / gauge(B2, z)) * z); }, v, 1e-6);
  CHECK((analytic - numeric).norm() / numeric.norm() < 1e-5);
}

TEST_CASE("tighten: inf-ball disturbance pulls every face in by its radius") {
  const Polytope S = Polytope::inf_ball(3, 5.0);
  const Polytope D = Polytope::inf_ball(3, 0.1);
  const Polytope T = tighten(S, D);
  CHECK((T.g().array() - 4.9).abs().maxCoeff() < 1e-9);
}

TEST_CASE("tighten: zero disturbance set leaves S unchanged") {
  const Polytope S = Polytope::inf_ball(2, 3.0);
  const Polytope D = Polytope::box(Vec::Zero(2), Vec::Zero(2));
  const Polytope T = tighten(S, D);
  CHECK((T.g() - S.g()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("tighten: rows match 2-D vertex enumeration of the disturbance set") {
  std::mt19937_64 rng(11);
  const Polytope S = random_cset(2, rng);
  const Polytope D = random_cset(2, rng);
  // enumerate D's vertices by pairwise intersections
  std::vector<Vec> verts;
  for (int i = 0; i < D.rows(); ++i) {
    for (int j = i + 1; j < D.rows(); ++j) {
      Mat A(2, 2);
      A.row(0) = D.F().row(i);
      A.row(1) = D.F().row(j);
      if (std::abs(A.determinant()) < 1e-10) continue;
      Vec b(2);
      b << D.g()[i], D.g()[j];
      const Vec v = A.partialPivLu().solve(b);
      if (D.contains(v, 1e-8)) verts.push_back(v);
    }
  }
  REQUIRE(!verts.empty());
  const Polytope T = tighten(S, D);
  for (int i = 0; i < S.rows(); ++i) {
    double sup = -std::numeric_limits<double>::infinity();
    for (const Vec& v : verts) sup = std::max(sup, S.F().row(i).dot(v));
    CHECK(T.g()[i] == doctest::Approx(S.g()[i] - sup).epsilon(1e-7));
  }
  // monotonicity: tighten(S, D) is contained in S row-wise
  CHECK(((S.g() - T.g()).array() >= -1e-12).all());
}

TEST_CASE("chebyshev: unit box") {
  const Polytope P = Polytope::inf_ball(3);
  const auto cert = chebyshev(P);
  CHECK(cert.bounded);
  CHECK(cert.radius == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(cert.center.cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("chebyshev: center is contained with radius-scaled slack") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 10; ++t) {
    const Polytope P = random_cset(3, rng);
    const auto cert = chebyshev(P);
    REQUIRE(cert.bounded);
    REQUIRE(cert.radius > 0.0);
    double min_norm = std::numeric_limits<double>::infinity();
    for (int i = 0; i < P.rows(); ++i) min_norm = std::min(min_norm, P.F().row(i).norm());
    const double slack = P.slack(cert.center).minCoeff();
    CHECK(slack >= cert.radius * min_norm - 1e-7);
  }
}

TEST_CASE("contains_point: boundary point accepted at tolerance") {
  const Polytope P = Polytope::inf_ball(3, 5.0);
  CHECK(contains_point(P, Vec::Constant(3, 5.0), 1e-9));
  CHECK(!contains_point(P, Vec::Constant(3, 5.1), 1e-9));
}

TEST_CASE("bounding_box: flags unbounded directions") {
  Mat F(3, 2);
  F << 1, 0, -1, 0, 0, 1;  // y unbounded below
  Vec g = Vec::Ones(3);
  const auto [lo, hi] = bounding_box(Polytope(F, g));
  CHECK(lo[0] == doctest::Approx(-1.0));
  CHECK(hi[0] == doctest::Approx(1.0));
  CHECK(hi[1] == doctest::Approx(1.0));
  CHECK(!std::isfinite(lo[1]));
  CHECK(!chebyshev(Polytope(F, g)).bounded);
}

TEST_CASE("sample_uniform: unit box statistics and membership") {
  const Polytope P = Polytope::inf_ball(2);
  const auto pts = sample_uniform(P, 10000, 123);
  REQUIRE(pts.size() == 10000);
  Vec mean = Vec::Zero(2);
  for (const auto& p : pts) {
    CHECK(P.contains(p, 1e-12));
    mean += p;
  }
  mean /= 10000.0;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("sample_uniform: empty request and seed determinism") {
  const Polytope P = Polytope::inf_ball(2);
  CHECK(sample_uniform(P, 0, 1).empty());
  const auto a = sample_uniform(P, 32, 77);
  const auto b = sample_uniform(P, 32, 77);
  for (size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_uniform: bundled invariant set membership sweep") {
  const auto& sys = fixtures::bundled_system();
  const auto pts = sample_uniform(sys.S, 1000, 42);
  for (const auto& p : pts) CHECK((sys.S.F() * p - sys.S.g()).maxCoeff() <= 1e-12);
}

TEST_CASE("as_box: detects boxes and rejects general polytopes") {
  Vec lo(2), hi(2);
  lo << -1, -2;
  hi << 3, 4;
  const auto box = as_box(Polytope::box(lo, hi));
  REQUIRE(box.has_value());
  CHECK((box->first - lo).cwiseAbs().maxCoeff() == 0.0);
  CHECK((box->second - hi).cwiseAbs().maxCoeff() == 0.0);
  Mat F(3, 2);
  F << 1, 1, -1, 0, 0, -1;
  CHECK(!as_box(Polytope(F, Vec::Ones(3))).has_value());
}

TEST_CASE("remove_redundancy and subset_of") {
  Mat F(5, 2);
  F << 1, 0, -1, 0, 0, 1, 0, -1, 1, 0;
  Vec g(5);
  g << 1, 1, 1, 1, 2;  // last row dominated
  const Polytope P(F, g);
  const Polytope R = remove_redundancy(P);
  CHECK(R.rows() == 4);
  CHECK(subset_of(R, P));
  CHECK(subset_of(P, R));
  CHECK(subset_of(Polytope::inf_ball(2, 0.5), P));
  CHECK(!subset_of(Polytope::inf_ball(2, 2.0), P));
}

TEST_CASE("rci_iterate: one-step controllable scalar system keeps X") {
  const Mat A = 0.5 * Mat::Identity(1, 1);
  const Mat B = Mat::Identity(1, 1);
  const Polytope X = Polytope::inf_ball(1);
  const Polytope U = Polytope::inf_ball(1);
  const Polytope D = Polytope::box(Vec::Zero(1), Vec::Zero(1));
  const RciResult res = rci_iterate(X, U, D, A, B, 20);
  REQUIRE(res.set.has_value());
  CHECK(res.certified);
  CHECK(subset_of(X, *res.set));
  CHECK(subset_of(*res.set, X));
}

TEST_CASE("rci_iterate: overwhelming disturbance yields no invariant set") {
  const Mat A = Mat::Identity(1, 1);
  const Mat B = Mat::Identity(1, 1);
  const Polytope X = Polytope::inf_ball(1);
  const Polytope U = Polytope::inf_ball(1, 0.1);
  const Polytope D = Polytope::inf_ball(1, 10.0);
  const RciResult res = rci_iterate(X, U, D, A, B, 20);
  CHECK(!res.set.has_value());
}

TEST_CASE("rci_iterate: bundled system set passes sampled certification") {
  const auto& cfg = fixtures::bundled_config();
  const RciResult res = rci_iterate(cfg.X, cfg.U, cfg.D, cfg.A, cfg.B, 30);
  REQUIRE(res.set.has_value());
  CHECK(res.certified);
  // certification: every sampled state has a strictly safe action w.r.t.
  // the tightened iterate
  const LinearSystem sys =
      LinearSystem::make(cfg.A, cfg.B, cfg.X, cfg.U, cfg.D, *res.set);
  const auto pts = sample_uniform(*res.set, 1000, 7);
  for (const auto& x : pts) {
    const auto [u, s] = max_violation_lp(sys, x);
    CHECK(s < 0.0);
  }
}

TEST_CASE("polytope json round trip") {
  std::mt19937_64 rng(13);
  const Polytope P = random_cset(3, rng);
  const Polytope Q = Polytope::from_json(P.to_json());
  CHECK((P.F() - Q.F()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((P.g() - Q.g()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("polytope validation") {
  CHECK_THROWS_AS(Polytope(Mat::Zero(1, 2), Vec::Ones(1)), std::invalid_argument);
  CHECK_THROWS_AS(Polytope(Mat::Identity(2, 2), Vec::Ones(3)), std::invalid_argument);
}
