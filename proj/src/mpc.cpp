#include "safempc/mpc.hpp"

#include <stdexcept>

#include "safempc/qp.hpp"

namespace safempc {

double stage_cost(const Vec& x, const Vec& u, double c1) {
  return x.squaredNorm() + c1 * u.squaredNorm();
}

double terminal_cost(const Vec& x, double c2) { return c2 * x.squaredNorm(); }

LinearSystem LinearSystem::make(Mat A, Mat B, Polytope X, Polytope U, Polytope D,
                                Polytope S) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n) throw std::invalid_argument("LinearSystem: A/B shape");
  if (X.dim() != n || D.dim() != n || S.dim() != n || U.dim() != m)
    throw std::invalid_argument("LinearSystem: polytope dimension mismatch");
  if (!subset_of(S, X)) throw std::invalid_argument("LinearSystem: S not contained in X");
  Polytope T = tighten(S, D);
  return LinearSystem{std::move(A), std::move(B), std::move(X), std::move(U),
                      std::move(D), std::move(S), std::move(T)};
}

CondensedMpc condense(const LinearSystem& sys, int horizon, double c1, double c2,
                      std::shared_ptr<const CostFunction> cost) {
  if (horizon < 1) throw std::invalid_argument("condense: horizon must be >= 1");
  CondensedMpc mpc;
  mpc.horizon = horizon;
  mpc.n = sys.state_dim();
  mpc.m = sys.input_dim();
  mpc.A = sys.A;
  mpc.B = sys.B;
  mpc.c1 = c1;
  mpc.c2 = c2;
  mpc.cost = cost ? std::move(cost) : std::make_shared<QuadraticCost>(c1, c2);

  const int n = mpc.n, m = mpc.m, tau = horizon;
  mpc.M0 = Mat::Zero(n * tau, n);
  mpc.Mu = Mat::Zero(n * tau, m * tau);
  Mat Apow = Mat::Identity(n, n);
  for (int k = 0; k < tau; ++k) {
    Apow = sys.A * Apow;  // A^{k+1}
    mpc.M0.middleRows(k * n, n) = Apow;
  }
  // Block (i, j) of Mu is A^{i-j} B for j <= i (x_{i+1} row block).
  for (int i = 0; i < tau; ++i) {
    Mat AjB = sys.B;
    for (int j = i; j >= 0; --j) {
      mpc.Mu.block(i * n, j * m, n, m) = AjB;
      AjB = sys.A * AjB;
    }
  }

  const Polytope& T = sys.T;
  const Polytope& U = sys.U;
  const int ks = T.rows(), ku = U.rows();
  mpc.Hs = Mat::Zero(ks * tau, n * tau);
  mpc.hs_tilde = Vec(ks * tau);
  for (int k = 0; k < tau; ++k) {
    mpc.Hs.block(k * ks, k * n, ks, n) = T.F();
    mpc.hs_tilde.segment(k * ks, ks) = T.g();
  }
  mpc.Hu = Mat::Zero(ku * tau, m * tau);
  mpc.hu = Vec(ku * tau);
  for (int k = 0; k < tau; ++k) {
    mpc.Hu.block(k * ku, k * m, ku, m) = U.F();
    mpc.hu.segment(k * ku, ku) = U.g();
  }

  mpc.HsM0 = mpc.Hs * mpc.M0;
  mpc.Gu = Mat(mpc.Hs.rows() + mpc.Hu.rows(), m * tau);
  mpc.Gu.topRows(mpc.Hs.rows()) = mpc.Hs * mpc.Mu;
  mpc.Gu.bottomRows(mpc.Hu.rows()) = mpc.Hu;

  // Condensed quadratic cost: sum ||x_k||^2 (k=1..tau-1) + c2||x_tau||^2
  // + c1||u||^2 + ||x0||^2; the last term is x0-only and lives in P0.
  Vec wts = Vec::Ones(n * tau);
  wts.tail(n).setConstant(c2);
  mpc.Qqp = 2.0 * (mpc.Mu.transpose() * wts.asDiagonal() * mpc.Mu);
  mpc.Qqp.diagonal().array() += 2.0 * c1;
  mpc.q_of_x0 = 2.0 * (mpc.Mu.transpose() * wts.asDiagonal() * mpc.M0);
  mpc.P0 = Mat::Identity(n, n) + mpc.M0.transpose() * wts.asDiagonal() * mpc.M0;
  return mpc;
}

Vec CondensedMpc::constraint_offset(const Vec& x0) const {
  Vec h(Gu.rows());
  h.head(Hs.rows()) = hs_tilde - HsM0 * x0;
  h.tail(Hu.rows()) = hu;
  return h;
}

Polytope feasible_set(const CondensedMpc& mpc, const Vec& x0) {
  return Polytope(mpc.Gu, mpc.constraint_offset(x0));
}

Vec predict_states(const CondensedMpc& mpc, const Vec& x0, const Vec& useq) {
  const int n = mpc.n, m = mpc.m;
  Vec xs(n * mpc.horizon);
  Vec x = x0;
  for (int k = 0; k < mpc.horizon; ++k) {
    x = mpc.A * x + mpc.B * useq.segment(k * m, m);
    xs.segment(k * n, n) = x;
  }
  return xs;
}

double trajectory_cost(const CondensedMpc& mpc, const Vec& x0, const Vec& useq) {
  if (useq.size() != mpc.seq_dim())
    throw std::invalid_argument("trajectory_cost: input sequence length mismatch");
  const int m = mpc.m;
  double total = 0.0;
  Vec x = x0;
  for (int k = 0; k < mpc.horizon; ++k) {
    const Vec u = useq.segment(k * m, m);
    total += mpc.cost->stage(x, u);
    x = mpc.A * x + mpc.B * u;
  }
  return total + mpc.cost->terminal(x);
}

OracleResult solve_mpc_oracle(const CondensedMpc& mpc, const Vec& x0, double tol) {
  QpProblem qp;
  qp.Q = mpc.Qqp;
  qp.q = mpc.q_of_x0 * x0;
  qp.G = mpc.Gu;
  qp.h = mpc.constraint_offset(x0);
  QpSettings st;
  st.tol = tol;
  OracleResult out;
  out.report = solve_qp(qp, st);
  out.useq = out.report.x;
  out.cost = out.report.objective + x0.dot(mpc.P0 * x0);
  return out;
}

}  // namespace safempc
