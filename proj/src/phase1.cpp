#include "safempc/phase1.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

#include "safempc/lp.hpp"

namespace safempc {

nlohmann::json AffinePhaseOne::to_json() const {
  nlohmann::json jW = nlohmann::json::array();
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < W.cols(); ++j) row.push_back(W(i, j));
    jW.push_back(row);
  }
  nlohmann::json jw = nlohmann::json::array();
  for (Eigen::Index i = 0; i < w.size(); ++i) jw.push_back(w[i]);
  return {{"W", jW}, {"w", jw}, {"margin", margin}};
}

AffinePhaseOne AffinePhaseOne::from_json(const nlohmann::json& j) {
  AffinePhaseOne p;
  const auto& jW = j.at("W");
  const int m = static_cast<int>(jW.size());
  const int n = static_cast<int>(jW[0].size());
  p.W = Mat(m, n);
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < n; ++c) p.W(i, c) = jW[i][c].get<double>();
  p.w = Vec(m);
  for (int i = 0; i < m; ++i) p.w[i] = j.at("w")[i].get<double>();
  p.margin = j.at("margin").get<double>();
  return p;
}

std::pair<Vec, double> max_violation_lp(const LinearSystem& sys, const Vec& x0,
                                        double tol) {
  const int m = sys.input_dim();
  const int ks = sys.T.rows();
  const int ku = sys.U.rows();
  LpProblem lp;
  lp.c = Vec::Zero(m + 1);
  lp.c[m] = 1.0;
  lp.G = Mat(ks + ku, m + 1);
  lp.h = Vec(ks + ku);
  lp.G.topLeftCorner(ks, m) = sys.T.F() * sys.B;
  lp.G.bottomLeftCorner(ku, m) = sys.U.F();
  lp.G.col(m).setConstant(-1.0);
  lp.h.head(ks) = sys.T.g() - sys.T.F() * (sys.A * x0);
  lp.h.tail(ku) = sys.U.g();
  const SolveReport rep = solve_lp(lp, tol);
  if (!rep.optimal())
    throw std::runtime_error("max_violation_lp: LP failed with status " +
                             to_string(rep.status));
  return {rep.x.head(m), rep.x[m]};
}

double evaluate_violation(const LinearSystem& sys, const Vec& x0, const Vec& u) {
  const Vec xs = sys.A * x0 + sys.B * u;
  const double vs = (sys.T.F() * xs - sys.T.g()).maxCoeff();
  const double vu = (sys.U.F() * u - sys.U.g()).maxCoeff();
  return std::max(vs, vu);
}

namespace {

// Shared layout of the containment LP behind Eq-style affine synthesis:
// variables [vec(W) row-major | w | s | vec(Lambda) row-major], with W, w
// optionally frozen (certification mode).
struct ContainmentLp {
  LpProblem lp;
  int nW, nw, is;

  ContainmentLp(const LinearSystem& sys, const Mat* W_fixed, const Vec* w_fixed) {
    const Mat& FS = sys.S.F();
    const Vec& gS = sys.S.g();
    const int n = sys.state_dim();
    const int m = sys.input_dim();
    const int ks = sys.S.rows();
    const int k1 = sys.T.rows();
    const int k2 = sys.U.rows();
    const int kc = k1 + k2;
    const bool fixed = W_fixed != nullptr;
    nW = fixed ? 0 : m * n;
    nw = fixed ? 0 : m;
    is = nW + nw;
    const int nv = is + 1 + kc * ks;
    const Mat FTB = sys.T.F() * sys.B;
    const Mat FTA = sys.T.F() * sys.A;

    auto lam_index = [&](int r, int c) { return is + 1 + r * ks + c; };

    // Lambda F_S = C(W): kc*n equality rows.
    Mat Aeq = Mat::Zero(kc * n, nv);
    Vec beq = Vec::Zero(kc * n);
    for (int r = 0; r < kc; ++r) {
      for (int c = 0; c < n; ++c) {
        const int row = r * n + c;
        for (int j = 0; j < ks; ++j) Aeq(row, lam_index(r, j)) = FS(j, c);
        if (r < k1) {
          beq[row] = FTA(r, c);
          for (int p = 0; p < m; ++p) {
            if (fixed) beq[row] += FTB(r, p) * (*W_fixed)(p, c);
            else Aeq(row, p * n + c) -= FTB(r, p);
          }
        } else {
          for (int p = 0; p < m; ++p) {
            if (fixed) beq[row] += sys.U.F()(r - k1, p) * (*W_fixed)(p, c);
            else Aeq(row, p * n + c) -= sys.U.F()(r - k1, p);
          }
        }
      }
    }

    // Lambda g_S <= d(w, s) plus Lambda >= 0.
    Mat G = Mat::Zero(kc + kc * ks, nv);
    Vec h = Vec::Zero(kc + kc * ks);
    for (int r = 0; r < kc; ++r) {
      for (int j = 0; j < ks; ++j) G(r, lam_index(r, j)) = gS[j];
      G(r, is) = -1.0;
      if (r < k1) {
        h[r] = sys.T.g()[r];
        for (int p = 0; p < m; ++p) {
          if (fixed) h[r] -= FTB(r, p) * (*w_fixed)[p];
          else G(r, nW + p) = FTB(r, p);
        }
      } else {
        h[r] = sys.U.g()[r - k1];
        for (int p = 0; p < m; ++p) {
          if (fixed) h[r] -= sys.U.F()(r - k1, p) * (*w_fixed)[p];
          else G(r, nW + p) = sys.U.F()(r - k1, p);
        }
      }
    }
    for (int r = 0; r < kc; ++r)
      for (int j = 0; j < ks; ++j) G(kc + r * ks + j, lam_index(r, j)) = -1.0;

    lp.c = Vec::Zero(nv);
    lp.c[is] = 1.0;
    lp.G = std::move(G);
    lp.h = std::move(h);
    lp.Aeq = std::move(Aeq);
    lp.beq = std::move(beq);
  }
};

}  // namespace

std::optional<AffinePhaseOne> synthesize_affine(const LinearSystem& sys, double tol) {
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  ContainmentLp enc(sys, nullptr, nullptr);
  const SolveReport rep = solve_lp(enc.lp, tol);
  if (!rep.optimal())
    throw std::runtime_error("synthesize_affine: containment LP failed with status " +
                             to_string(rep.status));
  const double s_opt = rep.x[enc.is];
  if (s_opt > -1e-9) return std::nullopt;  // no strictly feasible affine policy
  AffinePhaseOne p;
  p.W = Mat(m, n);
  for (int p_row = 0; p_row < m; ++p_row)
    for (int c = 0; c < n; ++c) p.W(p_row, c) = rep.x[p_row * n + c];
  p.w = rep.x.segment(enc.nW, m);
  p.margin = s_opt;
  return p;
}

double certify_affine(const LinearSystem& sys, const Mat& W, const Vec& w) {
  ContainmentLp enc(sys, &W, &w);
  const SolveReport rep = solve_lp(enc.lp, 1e-9);
  if (!rep.optimal())
    throw std::runtime_error("certify_affine: containment LP failed with status " +
                             to_string(rep.status));
  return rep.x[enc.is];
}

namespace {

PhaseOneResult assemble_result(const CondensedMpc& mpc, const Vec& x0, const Vec& mu0) {
  PhaseOneResult out;
  out.mu0 = mu0;
  out.slack = mpc.constraint_offset(x0) - mpc.Gu * mu0;
  out.margin = out.slack.minCoeff();
  return out;
}

}  // namespace

PhaseOneResult rollout_phase1(const CondensedMpc& mpc, const LinearSystem& sys,
                              const AffinePhaseOne& p1, const Vec& x0) {
  if (!sys.S.contains(x0, 1e-9))
    throw std::invalid_argument("rollout_phase1: x0 outside S");
  const int m = mpc.m;
  Vec mu0(mpc.seq_dim());
  Vec x = x0;
  for (int k = 0; k < mpc.horizon; ++k) {
    const Vec u = p1.eval(x);
    mu0.segment(k * m, m) = u;
    x = mpc.A * x + mpc.B * u;
  }
  PhaseOneResult out = assemble_result(mpc, x0, mu0);
  if (out.margin <= 0.0)
    throw std::runtime_error("rollout_phase1: nonpositive margin, certification bug");
  return out;
}

PhaseOneResult phase1_fallback_lp(const CondensedMpc& mpc, const LinearSystem& sys,
                                  const Vec& x0) {
  if (!sys.S.contains(x0, 1e-9))
    throw std::runtime_error("phase1_fallback_lp: x0 outside S");
  const int m = mpc.m;
  Vec mu0(mpc.seq_dim());
  Vec x = x0;
  for (int k = 0; k < mpc.horizon; ++k) {
    auto [u, s] = max_violation_lp(sys, x);
    if (s >= 0.0)
      throw std::runtime_error("phase1_fallback_lp: no strictly safe action at step " +
                               std::to_string(k) + " (S is not an RCI here)");
    mu0.segment(k * m, m) = u;
    x = mpc.A * x + mpc.B * u;
  }
  PhaseOneResult out = assemble_result(mpc, x0, mu0);
  if (out.margin <= 0.0)
    throw std::runtime_error("phase1_fallback_lp: nonpositive stacked margin");
  return out;
}

}  // namespace safempc
