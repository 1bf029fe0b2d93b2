#include "safempc/lp.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace safempc {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIter: return "max_iter";
  }
  return "unknown";
}

void LpProblem::validate() const {
  const int n = num_vars();
  if (n <= 0) throw std::invalid_argument("LpProblem: empty cost vector");
  if (G.rows() == 0) throw std::invalid_argument("LpProblem: needs at least one inequality");
  if (G.cols() != n || h.size() != G.rows())
    throw std::invalid_argument("LpProblem: inconsistent inequality dimensions");
  if (Aeq.rows() > 0 && (Aeq.cols() != n || beq.size() != Aeq.rows()))
    throw std::invalid_argument("LpProblem: inconsistent equality dimensions");
}

namespace {

struct IpmState {
  Vec x, s, lam, nu;
};

// Fraction-to-boundary step for z + alpha*dz >= 0.
double max_step(const Vec& z, const Vec& dz, double frac) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (dz[i] < 0.0) alpha = std::min(alpha, -frac * z[i] / dz[i]);
  }
  return alpha;
}

// Validates a Farkas certificate of primal infeasibility:
//   lam >= 0, ||G'lam + Aeq'nu|| ~ 0, h'lam + beq'nu < 0.
bool is_infeasibility_certificate(const LpProblem& p, const Vec& lam, const Vec& nu) {
  const double scale = std::max(inf_norm(lam), nu.size() ? inf_norm(nu) : 0.0);
  if (scale <= 0.0) return false;
  const Vec lam_n = lam / scale;
  const Vec nu_n = nu.size() ? Vec(nu / scale) : nu;
  Vec atey = p.G.transpose() * lam_n;
  if (p.num_eq() > 0) atey += p.Aeq.transpose() * nu_n;
  double gap = p.h.dot(lam_n);
  if (p.num_eq() > 0) gap += p.beq.dot(nu_n);
  return inf_norm(atey) <= 1e-7 && gap <= -1e-9;
}

// Validates an unboundedness ray: G d <= ~0, Aeq d ~ 0, c'd < 0.
bool is_unbounded_ray(const LpProblem& p, const Vec& d) {
  const double scale = inf_norm(d);
  if (scale <= 0.0) return false;
  const Vec dn = d / scale;
  if (max_coeff_or(p.G * dn, 0.0) > 1e-7) return false;
  if (p.num_eq() > 0 && inf_norm(p.Aeq * dn) > 1e-7) return false;
  return p.c.dot(dn) <= -1e-9;
}

}  // namespace

SolveReport solve_lp(const LpProblem& p, double tol) {
  LpSettings s;
  s.tol = tol;
  return solve_lp(p, s);
}

SolveReport solve_lp(const LpProblem& p, const LpSettings& st,
                     const std::optional<Vec>& x0) {
  p.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int n = p.num_vars();
  const int k = p.num_ineq();
  const int ke = p.num_eq();

  IpmState it;
  if (x0 && x0->size() == n) {
    it.x = *x0;
  } else if (ke > 0) {
    it.x = p.Aeq.completeOrthogonalDecomposition().solve(p.beq);
  } else {
    it.x = Vec::Zero(n);
  }
  const Vec r0 = p.G * it.x - p.h;
  it.s = Vec(k);
  for (int i = 0; i < k; ++i) it.s[i] = std::max(1.0, 1.5 * std::abs(r0[i]));
  it.lam = Vec::Ones(k);
  it.nu = Vec::Zero(ke);

  SolveReport rep;
  auto finish = [&](SolveStatus status) {
    rep.status = status;
    rep.x = it.x;
    rep.objective = p.c.dot(it.x);
    rep.dual = it.lam;
    rep.dual_eq = it.nu;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  };

  // epsilon-optimality certificate: primal/dual feasibility plus the
  // algebraic primal-dual gap (robust to degenerate complementarity
  // products on coincident rows)
  auto kkt_measures = [&](const IpmState& state) {
    const Vec r_dual = p.c + p.G.transpose() * state.lam +
                       (ke > 0 ? Vec(p.Aeq.transpose() * state.nu) : Vec::Zero(n));
    const double pr =
        std::max(max_coeff_or(p.G * state.x - p.h, 0.0),
                 ke > 0 ? inf_norm(p.Aeq * state.x - p.beq) : 0.0);
    const double dr = inf_norm(r_dual);
    double gap_cert = p.c.dot(state.x) + p.h.dot(state.lam);
    if (ke > 0) gap_cert += p.beq.dot(state.nu);
    return std::tuple<double, double, double>{pr, dr, std::abs(gap_cert)};
  };
  auto certified_optimal = [&](const IpmState& state) {
    const auto [pr, dr, gap_cert] = kkt_measures(state);
    return pr <= st.tol && dr <= st.tol * (1.0 + inf_norm(p.c)) &&
           gap_cert <= st.tol * (1.0 + std::abs(p.c.dot(state.x))) &&
           state.lam.minCoeff() >= 0.0;
  };

  double best_merit = std::numeric_limits<double>::infinity();
  double halving_ref = std::numeric_limits<double>::infinity();
  IpmState best = it;
  int stall = 0;
  auto finish_best = [&]() {
    it = best;
    const auto [pr, dr, gap_cert] = kkt_measures(it);
    rep.primal_residual = pr;
    rep.dual_residual = dr;
    return finish(certified_optimal(it) ? SolveStatus::Optimal : SolveStatus::MaxIter);
  };

  for (int iter = 0; iter < st.max_iter; ++iter) {
    rep.iterations = iter;
#ifdef SAFEMPC_LP_TRACE
    {
      const auto [tpr, tdr, tgc] = kkt_measures(it);
      fprintf(stderr, "[lp] it=%d pr=%.3e dr=%.3e gap=%.3e gapc=%.3e obj=%.10f finite=%d%d%d lam_min=%.3e\n",
              iter, tpr, tdr, it.s.dot(it.lam), tgc, p.c.dot(it.x),
              (int)it.x.allFinite(), (int)it.s.allFinite(), (int)it.lam.allFinite(),
              it.lam.size() ? it.lam.minCoeff() : 0.0);
    }
#endif
    if (!it.x.allFinite() || !it.s.allFinite() || !it.lam.allFinite()) {
      return finish_best();
    }
    const Vec r_dual = p.c + p.G.transpose() * it.lam +
                       (ke > 0 ? Vec(p.Aeq.transpose() * it.nu) : Vec::Zero(n));
    const Vec r_prim = p.G * it.x + it.s - p.h;
    const Vec r_eq = ke > 0 ? Vec(p.Aeq * it.x - p.beq) : Vec();
    const double mu = it.s.dot(it.lam) / k;

    const auto [pr, dr, gap_cert] = kkt_measures(it);
    rep.primal_residual = pr;
    rep.dual_residual = dr;
    const double gap = it.s.dot(it.lam);

    if (certified_optimal(it)) {
      return finish(SolveStatus::Optimal);
    }

    // Divergence certificates.
    const double ynorm = std::max(inf_norm(it.lam), ke > 0 ? inf_norm(it.nu) : 0.0);
    if (ynorm > 1e6 && is_infeasibility_certificate(p, it.lam, it.nu)) {
      return finish(SolveStatus::Infeasible);
    }
    if (inf_norm(it.x) > 1e6 && is_unbounded_ray(p, it.x)) {
      return finish(SolveStatus::Unbounded);
    }
    if (ynorm > st.divergence_norm || inf_norm(it.x) > st.divergence_norm) {
      return finish_best();
    }

    // Stagnation guard: no halving of the merit for a while.
    const double merit = pr + dr + gap + gap_cert;
    if (merit < best_merit) {
      best_merit = merit;
      best = it;
    }
    if (merit < 0.5 * halving_ref) {
      halving_ref = merit;
      stall = 0;
    } else if (++stall > 40) {
      if (is_infeasibility_certificate(p, it.lam, it.nu)) return finish(SolveStatus::Infeasible);
      if (is_unbounded_ray(p, it.x)) return finish(SolveStatus::Unbounded);
      return finish_best();
    }

    // Normal-equations block G' diag(lam/s) G, shared by predictor/corrector.
    // The scaling is clamped so coincident active rows cannot overflow it.
    Vec w(k);
    for (int i = 0; i < k; ++i) w[i] = std::clamp(it.lam[i] / it.s[i], 1e-12, 1e14);
    const Mat GtW = p.G.transpose() * w.asDiagonal();
    Mat kkt(n + ke, n + ke);
    kkt.topLeftCorner(n, n) = GtW * p.G;
    kkt.topLeftCorner(n, n).diagonal().array() += 1e-11;
    if (ke > 0) {
      kkt.topRightCorner(n, ke) = p.Aeq.transpose();
      kkt.bottomLeftCorner(ke, n) = p.Aeq;
      kkt.bottomRightCorner(ke, ke).setZero();
      kkt.bottomRightCorner(ke, ke).diagonal().array() -= 1e-11;
    }
    Eigen::PartialPivLU<Mat> lu(kkt);

    auto newton = [&](const Vec& rc) {
      // rc is the complementarity rhs; returns (dx, ds, dlam, dnu).
      Vec rhs(n + ke);
      Vec tmp(k);
      for (int i = 0; i < k; ++i) tmp[i] = rc[i] / it.s[i];
      rhs.head(n) = -r_dual - p.G.transpose() * tmp - GtW * r_prim;
      if (ke > 0) rhs.tail(ke) = -r_eq;
      Vec sol = lu.solve(rhs);
      // one refinement pass
      sol += lu.solve(rhs - kkt * sol);
      const Vec dx = sol.head(n);
      const Vec dnu = ke > 0 ? Vec(sol.tail(ke)) : Vec();
      const Vec ds = -r_prim - p.G * dx;
      Vec dlam(k);
      for (int i = 0; i < k; ++i) dlam[i] = (rc[i] - it.lam[i] * ds[i]) / it.s[i];
      return std::tuple<Vec, Vec, Vec, Vec>{dx, ds, dlam, dnu};
    };

    // Predictor (affine scaling) step.
    Vec rc_aff(k);
    for (int i = 0; i < k; ++i) rc_aff[i] = -it.s[i] * it.lam[i];
    auto [dx_a, ds_a, dlam_a, dnu_a] = newton(rc_aff);
    const double ap_a = max_step(it.s, ds_a, 1.0);
    const double ad_a = max_step(it.lam, dlam_a, 1.0);
    double mu_aff = 0.0;
    for (int i = 0; i < k; ++i)
      mu_aff += (it.s[i] + ap_a * ds_a[i]) * (it.lam[i] + ad_a * dlam_a[i]);
    mu_aff /= k;
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::clamp(sigma, 1e-8, 1.0);

    // Corrector step.
    Vec rc(k);
    for (int i = 0; i < k; ++i)
      rc[i] = -it.s[i] * it.lam[i] - ds_a[i] * dlam_a[i] + sigma * mu;
    auto [dx, ds, dlam, dnu] = newton(rc);

    const double ap = max_step(it.s, ds, st.step_fraction);
    const double ad = max_step(it.lam, dlam, st.step_fraction);
    it.x += ap * dx;
    it.s += ap * ds;
    it.lam += ad * dlam;
    if (ke > 0) it.nu += ad * dnu;
  }
  return finish_best();
}

}  // namespace safempc
