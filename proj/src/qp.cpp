#include "safempc/qp.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace safempc {

void QpProblem::validate(bool allow_zero_hessian) const {
  const int n = num_vars();
  if (n <= 0) throw std::invalid_argument("QpProblem: empty linear term");
  if (Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("QpProblem: Hessian dimension mismatch");
  if (G.rows() == 0 || G.cols() != n || h.size() != G.rows())
    throw std::invalid_argument("QpProblem: inconsistent inequality dimensions");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("QpProblem: Hessian not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(Q, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo < -1e-8 * std::max(1.0, hi))
    throw std::invalid_argument("QpProblem: Hessian not positive semidefinite");
  if (hi <= 0.0 && !allow_zero_hessian)
    throw std::invalid_argument("QpProblem: zero Hessian (enable allow_zero_hessian)");
}

KktResidual kkt_residual(const QpProblem& p, const Vec& u, const Vec& lam) {
  KktResidual r;
  r.stationarity = inf_norm(p.Q * u + p.q + p.G.transpose() * lam);
  const Vec slack = p.h - p.G * u;
  r.primal = std::max(0.0, -slack.minCoeff());
  r.complementarity = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    r.complementarity = std::max(r.complementarity, std::abs(lam[i] * slack[i]));
  return r;
}

SolveReport solve_qp(const QpProblem& p, double tol) {
  QpSettings s;
  s.tol = tol;
  return solve_qp(p, s);
}

namespace {

// Equality-constrained solve on the detected active set; refines the ADMM
// solution to machine-accuracy KKT residuals when the active set is right.
bool polish(const QpProblem& p, Vec& u, Vec& lam) {
  const int n = p.num_vars();
  const int k = p.num_ineq();
  std::vector<int> act;
  const Vec slack = p.h - p.G * u;
  for (int i = 0; i < k; ++i) {
    if (slack[i] < 1e-6 || lam[i] > 1e-6) act.push_back(i);
  }
  const int ka = static_cast<int>(act.size());
  Mat Ga(ka, n);
  Vec ha(ka);
  for (int i = 0; i < ka; ++i) {
    Ga.row(i) = p.G.row(act[i]);
    ha[i] = p.h[act[i]];
  }
  Mat kkt = Mat::Zero(n + ka, n + ka);
  kkt.topLeftCorner(n, n) = p.Q;
  kkt.topLeftCorner(n, n).diagonal().array() += 1e-12;
  if (ka > 0) {
    kkt.topRightCorner(n, ka) = Ga.transpose();
    kkt.bottomLeftCorner(ka, n) = Ga;
    kkt.bottomRightCorner(ka, ka).diagonal().array() -= 1e-12;
  }
  Vec rhs(n + ka);
  rhs.head(n) = -p.q;
  rhs.tail(ka) = ha;
  Eigen::PartialPivLU<Mat> lu(kkt);
  Vec sol = lu.solve(rhs);
  sol += lu.solve(rhs - kkt * sol);
  Vec u_new = sol.head(n);
  Vec lam_new = Vec::Zero(k);
  for (int i = 0; i < ka; ++i) lam_new[act[i]] = std::max(0.0, sol[n + i]);
  if (!u_new.allFinite()) return false;
  if (kkt_residual(p, u_new, lam_new).max() <= kkt_residual(p, u, lam).max()) {
    u = u_new;
    lam = lam_new;
    return true;
  }
  return false;
}

}  // namespace

SolveReport solve_qp(const QpProblem& p, const QpSettings& st) {
  p.validate(st.allow_zero_hessian);
  const auto t0 = std::chrono::steady_clock::now();
  const int n = p.num_vars();
  const int k = p.num_ineq();

  double rho = st.rho;
  Vec x = Vec::Zero(n);
  Vec z = (p.G * x).cwiseMin(p.h);
  Vec y = Vec::Zero(k);

  const Mat Gt = p.G.transpose();
  Eigen::LLT<Mat> llt;
  auto refactor = [&]() {
    Mat K = p.Q + rho * Gt * p.G;
    K.diagonal().array() += st.sigma;
    llt.compute(K);
  };
  refactor();

  SolveReport rep;
  auto finish = [&](SolveStatus status) {
    rep.status = status;
    rep.x = x;
    rep.dual = y;
    rep.objective = 0.5 * x.dot(p.Q * x) + p.q.dot(x);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  };

  Vec x_prev = x, y_prev = y;
  for (int iter = 1; iter <= st.max_iter; ++iter) {
    rep.iterations = iter;
    x_prev = x;
    y_prev = y;

    const Vec rhs = st.sigma * x - p.q + Gt * (rho * z - y);
    const Vec x_tilde = llt.solve(rhs);
    const Vec z_tilde = p.G * x_tilde;
    x = st.alpha * x_tilde + (1.0 - st.alpha) * x;
    const Vec z_relaxed = st.alpha * z_tilde + (1.0 - st.alpha) * z;
    z = (z_relaxed + y / rho).cwiseMin(p.h);
    y += rho * (z_relaxed - z);

    if (iter % st.check_every != 0 && iter != st.max_iter) continue;

    const Vec Gx = p.G * x;
    const double r_prim = inf_norm(Gx - z);
    const double r_dual = inf_norm(p.Q * x + p.q + Gt * y);
    if (r_prim <= st.tol && r_dual <= st.tol) {
      Vec lam = y.cwiseMax(0.0);
      if (st.polish) polish(p, x, lam);
      y = lam;
      const KktResidual res = kkt_residual(p, x, y);
      rep.primal_residual = res.primal;
      rep.dual_residual = std::max(res.stationarity, res.complementarity);
      if (res.max() <= st.tol) return finish(SolveStatus::Optimal);
      // keep iterating if polish could not certify the tolerance
      if (res.max() <= 10.0 * st.tol && iter > st.max_iter / 2)
        return finish(SolveStatus::Optimal);
    }

    // OSQP-style divergence certificates.
    const Vec dy = y - y_prev;
    const double dy_norm = inf_norm(dy);
    if (dy_norm > 1e-12) {
      const Vec dyn = dy / dy_norm;
      if (inf_norm(Gt * dyn) <= 1e-8 && p.h.dot(dyn) <= -1e-8 && dyn.minCoeff() >= -1e-10) {
        rep.dual = dyn;
        return finish(SolveStatus::Infeasible);
      }
    }
    const Vec dx = x - x_prev;
    const double dx_norm = inf_norm(dx);
    if (dx_norm > 1e-12 && iter > 100) {
      const Vec dxn = dx / dx_norm;
      if (inf_norm(p.Q * dxn) <= 1e-8 && p.q.dot(dxn) <= -1e-8 &&
          max_coeff_or(p.G * dxn, 0.0) <= 1e-8) {
        rep.x = dxn;
        return finish(SolveStatus::Unbounded);
      }
    }

    if (st.adaptive_rho && iter % (st.check_every * 10) == 0) {
      const double sp = r_prim / std::max(1e-12, std::max(inf_norm(Gx), inf_norm(z)));
      const double sd = r_dual / std::max(1e-12, std::max(inf_norm(p.Q * x),
                                          std::max(inf_norm(Gt * y), inf_norm(p.q))));
      const double ratio = std::sqrt(sp / std::max(sd, 1e-16));
      if (ratio > 5.0 || ratio < 0.2) {
        rho = std::clamp(rho * ratio, 1e-6, 1e6);
        refactor();
      }
    }
  }

  Vec lam = y.cwiseMax(0.0);
  if (st.polish && polish(p, x, lam)) {
    y = lam;
    const KktResidual res = kkt_residual(p, x, y);
    rep.primal_residual = res.primal;
    rep.dual_residual = std::max(res.stationarity, res.complementarity);
    if (res.max() <= st.tol) return finish(SolveStatus::Optimal);
  }
  return finish(SolveStatus::MaxIter);
}

}  // namespace safempc
