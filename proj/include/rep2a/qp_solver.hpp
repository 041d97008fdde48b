#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>

#include "rep2a/qp.hpp"

namespace rep2a {

enum class SolveKind { Optimal, Infeasible, Unbounded, IterLimit };

struct SolveStatus {
  SolveKind kind = SolveKind::IterLimit;
  double objective = std::numeric_limits<double>::quiet_NaN();
  Series primal;
  Series dual;  // multipliers for the stacked [E; A] rows
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  double gap = 0.0;  // relative optimality gap (branch-and-bound only)

  bool optimal() const { return kind == SolveKind::Optimal; }
};

struct QpSettings {
  double tol = 1e-7;       // absolute and relative feasibility tolerance
  int max_iter = 200000;
  double rho = 1.0;        // base ADMM step; equalities get rho*1e3
  double sigma = 1e-6;
  double alpha = 1.6;      // over-relaxation
  double inf_tol = 1e-8;   // infeasibility certificate tolerance
  int check_interval = 25;
  // Residual-balancing rho adaptation. Off by default: with Ruiz
  // equilibration a fixed step is reliable here, and the balancing
  // heuristic was observed to walk away from converging steps.
  bool adaptive_rho = false;
  int adapt_start = 2000;  // leave the early transient alone
  bool use_ipm = true;     // try the interior-point path first
  bool polish = true;
  bool verbose = false;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Solver working form: min 0.5 x'Px + q'x  s.t.  l <= C x <= u,
/// equalities stacked first (l=u=d).
struct StackedQp {
  Eigen::SparseMatrix<double> P;
  Series q;
  Eigen::SparseMatrix<double> C;
  Series l, u;
  int m_eq = 0;
};

inline StackedQp stack(const CanonicalQP& qp) {
  StackedQp s;
  s.P = qp.P;
  s.q = qp.q;
  s.m_eq = static_cast<int>(qp.E.rows());
  const int m = s.m_eq + static_cast<int>(qp.A.rows());
  Eigen::SparseMatrix<double> C(m, qp.n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(qp.E.nonZeros() + qp.A.nonZeros());
  for (int k = 0; k < qp.E.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.E, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        it.value());
  for (int k = 0; k < qp.A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.A, k); it; ++it)
      trip.emplace_back(s.m_eq + static_cast<int>(it.row()),
                        static_cast<int>(it.col()), it.value());
  C.setFromTriplets(trip.begin(), trip.end());
  s.C = std::move(C);
  s.l.resize(m);
  s.u.resize(m);
  s.l.head(s.m_eq) = qp.d;
  s.u.head(s.m_eq) = qp.d;
  s.l.tail(m - s.m_eq).setConstant(-kInf);
  s.u.tail(m - s.m_eq) = qp.b;
  return s;
}

/// Modified Ruiz equilibration of [P C'; C 0] plus cost scaling.
struct Scaling {
  Series D;      // n, column scaling
  Series Erow;   // m, row scaling
  double cost = 1.0;
};

inline Scaling equilibrate(StackedQp& s, int iters = 10) {
  const int n = static_cast<int>(s.P.rows());
  const int m = static_cast<int>(s.C.rows());
  Scaling sc;
  sc.D = Series::Ones(n);
  sc.Erow = Series::Ones(m);

  for (int it = 0; it < iters; ++it) {
    Series cnorm = Series::Zero(n);  // inf-norm of column j over [P; C]
    Series rnorm = Series::Zero(m);  // inf-norm of row i of C
    for (int k = 0; k < s.P.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator i(s.P, k); i; ++i) {
        cnorm[i.col()] = std::max(cnorm[i.col()], std::abs(i.value()));
        cnorm[i.row()] = std::max(cnorm[i.row()], std::abs(i.value()));
      }
    for (int k = 0; k < s.C.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator i(s.C, k); i; ++i) {
        cnorm[i.col()] = std::max(cnorm[i.col()], std::abs(i.value()));
        rnorm[i.row()] = std::max(rnorm[i.row()], std::abs(i.value()));
      }
    Series dj(n), ei(m);
    for (int j = 0; j < n; ++j)
      dj[j] = cnorm[j] > 1e-12 ? 1.0 / std::sqrt(cnorm[j]) : 1.0;
    for (int i = 0; i < m; ++i)
      ei[i] = rnorm[i] > 1e-12 ? 1.0 / std::sqrt(rnorm[i]) : 1.0;

    // P <- Dj P Dj, C <- Ei C Dj, q <- Dj q, bounds <- Ei * bounds
    for (int k = 0; k < s.P.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator i(s.P, k); i; ++i)
        i.valueRef() *= dj[i.row()] * dj[i.col()];
    for (int k = 0; k < s.C.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator i(s.C, k); i; ++i)
        i.valueRef() *= ei[i.row()] * dj[i.col()];
    s.q.array() *= dj.array();
    for (int i = 0; i < m; ++i) {
      if (std::isfinite(s.l[i])) s.l[i] *= ei[i];
      if (std::isfinite(s.u[i])) s.u[i] *= ei[i];
    }
    sc.D.array() *= dj.array();
    sc.Erow.array() *= ei.array();

    // cost scaling toward unit gradient magnitude
    Series pc = Series::Zero(n);
    for (int k = 0; k < s.P.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator i(s.P, k); i; ++i)
        pc[i.col()] = std::max(pc[i.col()], std::abs(i.value()));
    double mean_pc = n > 0 ? pc.mean() : 0.0;
    double qn = s.q.size() > 0 ? s.q.lpNorm<Eigen::Infinity>() : 0.0;
    double g = std::max(mean_pc, qn);
    double gamma = g > 1e-12 ? 1.0 / g : 1.0;
    s.P *= gamma;
    s.q *= gamma;
    sc.cost *= gamma;
  }
  return sc;
}

struct KktFactor {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool ok = false;

  void factor(const Eigen::SparseMatrix<double>& P, double sigma,
              const Eigen::SparseMatrix<double>& C, const Series& rho) {
    const int n = static_cast<int>(P.rows());
    const int m = static_cast<int>(C.rows());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(P.nonZeros() + 2 * C.nonZeros() + n + m);
    for (int k = 0; k < P.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator i(P, k); i; ++i)
        trip.emplace_back(static_cast<int>(i.row()), static_cast<int>(i.col()),
                          i.value());
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, sigma);
    for (int k = 0; k < C.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator i(C, k); i; ++i) {
        trip.emplace_back(n + static_cast<int>(i.row()),
                          static_cast<int>(i.col()), i.value());
        trip.emplace_back(static_cast<int>(i.col()),
                          n + static_cast<int>(i.row()), i.value());
      }
    for (int i = 0; i < m; ++i) trip.emplace_back(n + i, n + i, -1.0 / rho[i]);
    Eigen::SparseMatrix<double> K(n + m, n + m);
    K.setFromTriplets(trip.begin(), trip.end());
    ldlt.compute(K);
    ok = (ldlt.info() == Eigen::Success);
  }
};

/// Mehrotra predictor-corrector interior-point method on the (scaled)
/// stacked form: min 0.5 x'Px + q'x  s.t.  C_eq x = d,  C_iq x <= u.
/// Returns a high-accuracy primal/dual pair when it converges; bails out
/// (converged=false) on stall so the caller can fall back to the
/// operator-splitting loop and its infeasibility certificates.
struct IpmOut {
  bool converged = false;
  Series x;
  Series y;  // stacked multipliers: equalities first, then inequalities >= 0
  Series s;  // inequality slacks (scaled); with z they identify the active set
  Series z;  // inequality multipliers (scaled)
  int iterations = 0;
};

inline IpmOut ipm_solve(const StackedQp& w, const QpSettings& st,
                        int max_iter = 100) {
  IpmOut out;
  const int n = static_cast<int>(w.P.rows());
  const int m = static_cast<int>(w.C.rows());
  const int me = w.m_eq;
  const int mi = m - me;

  Series x = Series::Zero(n);
  Series y = Series::Zero(me);
  Series z = Series::Ones(std::max(mi, 0));
  Series s = Series::Ones(std::max(mi, 0));
  const double delta = 1e-8;

  Eigen::SparseMatrix<double> C_eq(me, n), C_iq(mi, n);
  {
    std::vector<Eigen::Triplet<double>> te, ti;
    for (int k = 0; k < w.C.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(w.C, k); it; ++it) {
        if (it.row() < me)
          te.emplace_back(static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
        else
          ti.emplace_back(static_cast<int>(it.row()) - me,
                          static_cast<int>(it.col()), it.value());
      }
    C_eq.setFromTriplets(te.begin(), te.end());
    C_iq.setFromTriplets(ti.begin(), ti.end());
  }
  const Series d_eq = w.l.head(me);
  const Series u_iq = w.u.tail(mi);
  Eigen::SparseMatrix<double> C_eq_t = C_eq.transpose();
  Eigen::SparseMatrix<double> C_iq_t = C_iq.transpose();

  const int N = n + me + mi;
  Series rhs(N), sol(N);

  // KKT matrix for the current barrier diagonal (s/z entries per
  // inequality row); also used with s=z=1 for the starting point.
  auto build_kkt = [&](Eigen::SparseMatrix<double>& K) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(w.P.nonZeros() + 2 * w.C.nonZeros() + N);
    for (int k = 0; k < w.P.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(w.P, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
    for (int j = 0; j < n; ++j) trip.emplace_back(j, j, delta);
    for (int k = 0; k < w.C.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(w.C, k); it; ++it) {
        trip.emplace_back(n + static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
        trip.emplace_back(static_cast<int>(it.col()),
                          n + static_cast<int>(it.row()), it.value());
      }
    for (int i = 0; i < me; ++i) trip.emplace_back(n + i, n + i, -delta);
    for (int i = 0; i < mi; ++i)
      trip.emplace_back(n + me + i, n + me + i, -(s[i] / z[i] + delta));
    K.resize(N, N);
    K.setFromTriplets(trip.begin(), trip.end());
  };

  // Mehrotra starting point: one least-squares-flavoured KKT solve gives
  // (x, y, z~) and slacks s~ = u - C x at the right magnitudes; shift both
  // cones strictly positive. A cold (0, 1, 1) start on badly scaled rows
  // produces gigantic first directions that the fraction-to-boundary rule
  // then cuts to nothing.
  if (mi > 0) {
    Eigen::SparseMatrix<double> K0;
    build_kkt(K0);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt0(K0);
    if (ldlt0.info() == Eigen::Success) {
      rhs.head(n) = -w.q;
      rhs.segment(n, me) = d_eq;
      rhs.tail(mi) = u_iq;
      sol = ldlt0.solve(rhs);
      x = sol.head(n);
      y = sol.segment(n, me);
      Series zt = -sol.tail(mi);
      Series st_ = u_iq - C_iq * x;
      const double ds0 = std::max(-1.5 * st_.minCoeff(), 0.0);
      const double dz0 = std::max(-1.5 * zt.minCoeff(), 0.0);
      Series sh = st_.array() + ds0;
      Series zh = zt.array() + dz0;
      const double dot = sh.dot(zh);
      const double sh_sum = sh.sum(), zh_sum = zh.sum();
      const double es = zh_sum > 0 ? 0.5 * dot / zh_sum : 1.0;
      const double ez = sh_sum > 0 ? 0.5 * dot / sh_sum : 1.0;
      s = sh.array() + std::max(es, 1e-3);
      z = zh.array() + std::max(ez, 1e-3);
    }
  }

  double best_metric = kInf;
  int stall = 0;
  // Best iterate seen so far (by residual metric): late barrier iterations
  // can blow up numerically, and a bail-out must not hand the caller that
  // wreckage when a good iterate existed a few steps earlier.
  Series bx, by_, bz, bs;
  int biter = 0;
  double best_seen = kInf;
  // Even a non-converged exit hands back the current iterate: the caller
  // checks the pair against the unscaled tolerance, which the scaled test
  // here can under- or over-state.
  auto snapshot = [&](int iter) {
    out.x = x;
    out.y.resize(m);
    out.y.head(me) = y;
    out.y.tail(mi) = z;
    out.s = s;
    out.z = z;
    out.iterations = iter;
  };
  auto snapshot_best = [&](int iter) {
    if (bx.size() > 0) {
      x = bx;
      y = by_;
      z = bz;
      s = bs;
      iter = biter;
    }
    snapshot(iter);
  };
  for (int iter = 1; iter <= max_iter; ++iter) {
    Series rd = w.P * x + w.q + C_eq_t * y + C_iq_t * z;
    Series rp1 = C_eq * x - d_eq;
    Series rp2 = C_iq * x + s - u_iq;
    double mu = mi > 0 ? s.dot(z) / mi : 0.0;

    double obj = 0.5 * x.dot(w.P * x) + w.q.dot(x);
    double rd_n = rd.lpNorm<Eigen::Infinity>();
    double rp_n = std::max(me > 0 ? rp1.lpNorm<Eigen::Infinity>() : 0.0,
                           mi > 0 ? rp2.lpNorm<Eigen::Infinity>() : 0.0);
    double scale = 1.0 + std::max({x.lpNorm<Eigen::Infinity>(),
                                   w.q.lpNorm<Eigen::Infinity>(),
                                   std::abs(obj)});
    // mu uses a tighter scale than the residuals: a large |x| must not
    // let the barrier exit while the active set is still ambiguous.
    if (rd_n <= st.tol * scale && rp_n <= st.tol * scale &&
        mu <= st.tol * (1.0 + std::abs(obj))) {
      if (st.verbose)
        std::fprintf(stderr, "ipm converged iter=%d rd=%.3e rp=%.3e mu=%.3e\n",
                     iter, rd_n, rp_n, mu);
      out.converged = true;
      snapshot(iter);
      return out;
    }

    if (st.verbose)
      std::fprintf(stderr,
                   "ipm iter=%d rd=%.3e rp=%.3e mu=%.3e obj=%.6e\n",
                   iter, rd_n, rp_n, mu, obj);
    double metric = rd_n + rp_n + mu;
    if (metric < best_seen) {
      best_seen = metric;
      bx = x;
      by_ = y;
      bz = z;
      bs = s;
      biter = iter;
    }
    if (metric < 0.9 * best_metric) {
      best_metric = metric;
      stall = 0;
    } else if (++stall > 15) {
      if (st.verbose) std::fprintf(stderr, "ipm bail: stall\n");
      snapshot_best(iter);
      return out;  // no progress; let the caller fall back
    }
    if (!std::isfinite(metric) ||
        x.lpNorm<Eigen::Infinity>() > 1e14) {
      if (st.verbose) std::fprintf(stderr, "ipm bail: divergence/nan\n");
      return out;  // iterate is garbage; nothing worth handing back
    }

    Eigen::SparseMatrix<double> K;
    build_kkt(K);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(K);
    if (ldlt.info() != Eigen::Success) {
      if (st.verbose) std::fprintf(stderr, "ipm bail: ldlt\n");
      snapshot_best(iter);
      return out;
    }

    auto solve_dir = [&](const Series& rc) {
      rhs.head(n) = -rd;
      rhs.segment(n, me) = -rp1;
      rhs.tail(mi) = -rp2 + (rc.array() / z.array()).matrix();
      sol = ldlt.solve(rhs);
      // Refine against the exact (unregularized) KKT operator: residuals
      // measured against K would leave the delta-shift bias in place,
      // which is exactly what freezes the dual residual near the end.
      for (int r = 0; r < 3; ++r) {
        Series dx = sol.head(n), dy = sol.segment(n, me), dz = sol.tail(mi);
        Series resid(N);
        resid.head(n) =
            rhs.head(n) - (w.P * dx + C_eq_t * dy + C_iq_t * dz);
        resid.segment(n, me) = rhs.segment(n, me) - C_eq * dx;
        resid.tail(mi) =
            rhs.tail(mi) -
            (C_iq * dx - (s.array() / z.array() * dz.array()).matrix());
        sol += ldlt.solve(resid);
      }
    };
    auto step_len = [&](const Series& v, const Series& dv) {
      double a = 1.0;
      for (int i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
      return a;
    };

    // predictor
    Series rc_aff = (s.array() * z.array()).matrix();
    solve_dir(rc_aff);
    Series dx = sol.head(n), dy = sol.segment(n, me), dz = sol.tail(mi);
    Series ds =
        (-(rc_aff.array() + s.array() * dz.array()) / z.array()).matrix();
    double a_aff = std::min(step_len(s, ds), step_len(z, dz));
    double mu_aff =
        mi > 0 ? (s + a_aff * ds).dot(z + a_aff * dz) / mi : 0.0;
    double sigma = mu > 1e-16 ? std::pow(mu_aff / mu, 3) : 0.0;
    sigma = std::clamp(sigma, 0.0, 1.0);

    // corrector
    Series rc = (s.array() * z.array() + ds.array() * dz.array() -
                 sigma * mu)
                    .matrix();
    solve_dir(rc);
    dx = sol.head(n);
    dy = sol.segment(n, me);
    dz = sol.tail(mi);
    ds = (-(rc.array() + s.array() * dz.array()) / z.array()).matrix();

    double alpha =
        0.995 * std::min(step_len(s, ds), step_len(z, dz));
    alpha = std::min(alpha, 1.0);
    if (alpha < 1e-12) {
      if (st.verbose) std::fprintf(stderr, "ipm bail: tiny step\n");
      snapshot_best(iter);
      return out;
    }
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
  }
  snapshot_best(max_iter);
  return out;
}

}  // namespace detail

/// Operator-splitting QP solver (ADMM on the stacked constraint form with
/// Ruiz equilibration, over-relaxation, adaptive step, and an active-set
/// polish pass). Optimal is only reported when unscaled KKT residuals meet
/// the tolerance; primal/dual infeasibility is certified, not guessed.
inline SolveStatus solve_qp(const CanonicalQP& qp,
                            const QpSettings& st = QpSettings{}) {
  using namespace detail;
  SolveStatus out;
  const int n = qp.n;

  StackedQp orig = stack(qp);
  StackedQp w = orig;  // scaled working copy
  Scaling sc = equilibrate(w);
  const int m = static_cast<int>(w.C.rows());

  // Unconstrained case: solve (P + sigma I) x = -q on the original data.
  if (m == 0) {
    Eigen::SparseMatrix<double> Preg = orig.P;
    Eigen::SparseMatrix<double> I(n, n);
    I.setIdentity();
    Preg = Preg + st.sigma * I;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Preg);
    Series x = ldlt.solve(-orig.q);
    Series g = orig.P * x + orig.q;
    if (g.lpNorm<Eigen::Infinity>() >
        st.tol * std::max(1.0, orig.q.lpNorm<Eigen::Infinity>())) {
      out.kind = SolveKind::Unbounded;
      return out;
    }
    out.kind = SolveKind::Optimal;
    out.primal = x;
    out.dual = Series::Zero(0);
    out.objective = qp.objective(x);
    out.primal_residual = 0.0;
    out.dual_residual = g.lpNorm<Eigen::Infinity>();
    return out;
  }

  auto rho_vec = [&](double base) {
    Series r = Series::Constant(m, base);
    r.head(w.m_eq).setConstant(base * 1e3);
    return r;
  };
  double rho_base = st.rho;
  Series rho = rho_vec(rho_base);

  KktFactor kkt;
  kkt.factor(w.P, st.sigma, w.C, rho);
  if (!kkt.ok) {
    out.kind = SolveKind::IterLimit;
    return out;
  }

  Series x = Series::Zero(n), z = Series::Zero(m), y = Series::Zero(m);
  for (int i = 0; i < m; ++i)
    z[i] = std::clamp(0.0, w.l[i], w.u[i]);
  Series y_last_check = y, x_last_check = x;
  Series rhs(n + m), sol(n + m);

  auto unscale_x = [&](const Series& xs) {
    return Series((sc.D.array() * xs.array()).matrix());
  };
  auto unscale_y = [&](const Series& ys) {
    return Series((sc.Erow.array() * ys.array() / sc.cost).matrix());
  };

  auto finish_optimal = [&](const Series& xu, const Series& yu, double rp,
                            double rd, int iters) {
    out.kind = SolveKind::Optimal;
    out.primal = xu;
    out.dual = yu;
    out.objective = qp.objective(xu);
    out.primal_residual = rp;
    out.dual_residual = rd;
    out.iterations = iters;
  };

  // Active-set polish on the original (unscaled) data: guess the active
  // rows from the current iterate, solve the equality-constrained KKT
  // system, then refine the guess (drop rows with negative multipliers,
  // add violated rows) until the polished pair satisfies the KKT
  // conditions. This is what closes LP-like problems whose ADMM tail
  // converges too slowly.
  Eigen::SparseMatrix<double> Ct = orig.C.transpose();
  auto try_polish = [&](const Series& xu, const Series& yu, int iters,
                        const std::vector<char>* hint = nullptr) -> bool {
    // initial guess: equalities always; inequalities from the caller's
    // hint if given, otherwise whatever looks active by multiplier or
    // slack
    Series cx0 = orig.C * xu;
    std::vector<char> active(m, 0);
    for (int i = 0; i < m; ++i) {
      if (i < w.m_eq)
        active[i] = 1;
      else if (hint)
        active[i] = (*hint)[i];
      else if (yu[i] > 1e-10 ||
               orig.u[i] - cx0[i] <= 1e-6 * (1.0 + std::abs(orig.u[i])))
        active[i] = 1;
    }

    // Solve the KKT system with the given rows pinned at their bounds.
    // Returns the worst residual on the pinned rows themselves; a large
    // value means the pinned set is rank-deficient with inconsistent
    // right-hand sides and must be filtered before the pair is usable.
    auto solve_pinned = [&](const std::vector<int>& act, Series& xp,
                            Series& yp) -> double {
      const int ma = static_cast<int>(act.size());
      const int N = n + ma;
      // The system may need more regularization than 1e-9 to factor
      // without pivoting (redundant pinned rows); escalate delta and let
      // the refinement below undo the perturbation.
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
      for (double delta : {1e-9, 1e-7, 1e-5}) {
        std::vector<Eigen::Triplet<double>> trip;
        for (int k = 0; k < orig.P.outerSize(); ++k)
          for (Eigen::SparseMatrix<double>::InnerIterator i(orig.P, k); i; ++i)
            trip.emplace_back(static_cast<int>(i.row()),
                              static_cast<int>(i.col()), i.value());
        for (int j = 0; j < n; ++j) trip.emplace_back(j, j, delta);
        for (int a = 0; a < ma; ++a) {
          const int row = act[a];
          for (Eigen::SparseMatrix<double>::InnerIterator i(Ct, row); i; ++i) {
            trip.emplace_back(n + a, static_cast<int>(i.row()), i.value());
            trip.emplace_back(static_cast<int>(i.row()), n + a, i.value());
          }
          trip.emplace_back(n + a, n + a, -delta);
        }
        Eigen::SparseMatrix<double> K(N, N);
        K.setFromTriplets(trip.begin(), trip.end());
        ldlt.compute(K);
        if (ldlt.info() == Eigen::Success) break;
      }
      if (ldlt.info() != Eigen::Success) return kInf;
      Series prhs(N);
      prhs.head(n) = -orig.q;
      for (int a = 0; a < ma; ++a)
        prhs[n + a] = act[a] < w.m_eq ? orig.l[act[a]] : orig.u[act[a]];
      Series psol = ldlt.solve(prhs);
      // iterative refinement against the regularization
      for (int r = 0; r < 5; ++r) {
        Series resid = prhs;
        Series xs = psol.head(n), ys = psol.tail(ma);
        resid.head(n) -= orig.P * xs;
        for (int a = 0; a < ma; ++a) {
          const int row = act[a];
          double dot = 0.0;
          for (Eigen::SparseMatrix<double>::InnerIterator i(Ct, row); i; ++i) {
            resid[static_cast<int>(i.row())] -= i.value() * ys[a];
            dot += i.value() * xs[static_cast<int>(i.row())];
          }
          resid[n + a] -= dot;
        }
        psol += ldlt.solve(resid);
      }
      xp = psol.head(n);
      yp = Series::Zero(m);
      double rpin = 0.0;
      Series cx = orig.C * xp;
      for (int a = 0; a < ma; ++a) {
        yp[act[a]] = psol[n + a];
        rpin = std::max(rpin, std::abs(cx[act[a]] - prhs[n + a]));
      }
      return rpin;
    };

    // Rank-revealing filter: keep a maximal independent subset of the
    // pinned rows (equality rows weighted up so they win the pivoting).
    // A dropped row is a linear combination of kept ones, so if it truly
    // binds at the optimum it is satisfied automatically.
    auto filter_independent = [&](const std::vector<int>& act) {
      const int ma = static_cast<int>(act.size());
      Eigen::MatrixXd At = Eigen::MatrixXd::Zero(n, ma);
      for (int a = 0; a < ma; ++a) {
        const double wgt = act[a] < w.m_eq ? 1e2 : 1.0;
        for (Eigen::SparseMatrix<double>::InnerIterator i(Ct, act[a]); i; ++i)
          At(i.row(), a) = wgt * i.value();
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(At);
      qr.setThreshold(1e-9);
      const int rank = static_cast<int>(qr.rank());
      std::vector<int> kept;
      kept.reserve(rank);
      for (int k = 0; k < rank; ++k)
        kept.push_back(act[qr.colsPermutation().indices()[k]]);
      std::sort(kept.begin(), kept.end());
      return kept;
    };

    Series xp, yp;
    for (int round = 0; round < 40; ++round) {
      std::vector<int> act;
      for (int i = 0; i < m; ++i)
        if (active[i]) act.push_back(i);
      double rpin = solve_pinned(act, xp, yp);
      if (!std::isfinite(rpin)) {
        if (st.verbose) std::fprintf(stderr, "polish: ldlt failure\n");
        return false;
      }
      // scale the consistency test by the pinned right-hand sides, not by
      // C*x: a wildly inconsistent pinned solve inflates x itself and
      // would mask its own failure
      double rsc = 1.0;
      for (int i : act)
        rsc = std::max(rsc,
                       std::abs(i < w.m_eq ? orig.l[i] : orig.u[i]));
      if (rpin > 1e-7 * (1.0 + rsc)) {
        // inconsistent pinned set: drop dependent rows and re-solve
        act = filter_independent(act);
        rpin = solve_pinned(act, xp, yp);
        if (!std::isfinite(rpin)) {
          if (st.verbose) std::fprintf(stderr, "polish: ldlt failure\n");
          return false;
        }
        std::fill(active.begin() + w.m_eq, active.end(), 0);
        for (int i : act)
          if (i >= w.m_eq) active[i] = 1;
      }

      // refine the active set
      Series cx = orig.C * xp;
      bool changed = false;
      for (int i = w.m_eq; i < m; ++i) {
        if (active[i] && yp[i] < -1e-9) {
          active[i] = 0;
          changed = true;
        } else if (!active[i] &&
                   cx[i] > orig.u[i] + 1e-9 * (1.0 + std::abs(orig.u[i]))) {
          active[i] = 1;
          changed = true;
        }
      }
      if (!changed) break;
    }
    if (xp.size() == 0) return false;

    // full KKT check of the polished pair
    Series cx = orig.C * xp;
    double rp_p = 0.0;
    for (int i = 0; i < m; ++i) {
      double v = 0.0;
      if (cx[i] > orig.u[i]) v = cx[i] - orig.u[i];
      if (std::isfinite(orig.l[i]) && cx[i] < orig.l[i]) v = orig.l[i] - cx[i];
      rp_p = std::max(rp_p, std::abs(v));
    }
    bool dual_sign_ok = true;
    for (int i = w.m_eq; i < m; ++i)
      if (yp[i] < -1e-8 * (1.0 + yp.lpNorm<Eigen::Infinity>()))
        dual_sign_ok = false;
    Series rdv = orig.P * xp + orig.q + Ct * yp;
    double rd_p = rdv.lpNorm<Eigen::Infinity>();
    double p_sc = std::max(cx.lpNorm<Eigen::Infinity>(), 1.0);
    double d_sc = std::max({(orig.P * xp).lpNorm<Eigen::Infinity>(),
                            orig.q.lpNorm<Eigen::Infinity>(),
                            (Ct * yp).lpNorm<Eigen::Infinity>(), 1.0});
    if (st.verbose)
      std::fprintf(stderr,
                   "polish: rp=%.3e (lim %.3e) rd=%.3e (lim %.3e) signs=%d\n",
                   rp_p, st.tol * (1.0 + p_sc), rd_p, st.tol * (1.0 + d_sc),
                   (int)dual_sign_ok);
    if (dual_sign_ok && rp_p <= st.tol * (1.0 + p_sc) &&
        rd_p <= st.tol * (1.0 + d_sc)) {
      finish_optimal(xp, yp, rp_p, rd_p, iters);
      return true;
    }
    return false;
  };

  // Dual-only polish: when the primal iterate is already feasible to
  // tolerance but the multipliers are not (typical interior-point stall on
  // a degenerate optimal face), keep x and re-fit y by least squares on
  // the tight rows, with an active-set loop enforcing nonnegativity on the
  // inequality multipliers. Complementarity holds by construction because
  // the support is restricted to tight rows.
  auto try_dual_polish = [&](const Series& xu, const Series& yu,
                             int iters) -> bool {
    Series cx = orig.C * xu;
    double rp = 0.0;
    for (int i = 0; i < m; ++i) {
      double v = 0.0;
      if (cx[i] > orig.u[i]) v = cx[i] - orig.u[i];
      if (std::isfinite(orig.l[i]) && cx[i] < orig.l[i]) v = orig.l[i] - cx[i];
      rp = std::max(rp, v);
    }
    const double p_sc = std::max(cx.lpNorm<Eigen::Infinity>(), 1.0);
    if (rp > st.tol * (1.0 + p_sc)) return false;

    const Series g = orig.P * xu + orig.q;
    const double y_inf = yu.size() == m ? yu.lpNorm<Eigen::Infinity>() : 0.0;
    std::vector<char> active(m, 0);
    for (int i = 0; i < m; ++i)
      active[i] = (i < w.m_eq ||
                   orig.u[i] - cx[i] <= 1e-6 * (1.0 + std::abs(orig.u[i])) ||
                   (yu.size() == m && yu[i] > 1e-8 * (1.0 + y_inf)))
                      ? 1
                      : 0;

    Series yp = Series::Zero(m);
    for (int round = 0; round < 30; ++round) {
      std::vector<int> act;
      for (int i = 0; i < m; ++i)
        if (active[i]) act.push_back(i);
      const int ma = static_cast<int>(act.size());
      if (ma == 0) break;
      // normal equations of min ||g + C_A^T y_A||^2 with rows normalized
      // to unit norm first (the unscaled rows span orders of magnitude and
      // the squaring would otherwise wreck the conditioning)
      Eigen::SparseMatrix<double> Asp(ma, n);
      Series rn(ma);
      {
        std::vector<Eigen::Triplet<double>> trip;
        for (int a = 0; a < ma; ++a) {
          double nrm = 0.0;
          for (Eigen::SparseMatrix<double>::InnerIterator it(Ct, act[a]); it;
               ++it)
            nrm += it.value() * it.value();
          rn[a] = std::max(std::sqrt(nrm), 1e-12);
          for (Eigen::SparseMatrix<double>::InnerIterator it(Ct, act[a]); it;
               ++it)
            trip.emplace_back(a, static_cast<int>(it.row()),
                              it.value() / rn[a]);
        }
        Asp.setFromTriplets(trip.begin(), trip.end());
      }
      const Eigen::SparseMatrix<double> M0 = Asp * Asp.transpose();
      Eigen::SparseMatrix<double> M = M0;
      const double delta = 1e-12 * (1.0 + M.coeffs().maxCoeff());
      Eigen::SparseMatrix<double> I(ma, ma);
      I.setIdentity();
      M = M + delta * I;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(M);
      if (ldlt.info() != Eigen::Success) return false;
      Series rhs_ls = -(Asp * g);
      Series ya = ldlt.solve(rhs_ls);
      // refine against the unregularized normal matrix so the
      // delta shift does not bias the multipliers
      for (int r = 0; r < 5; ++r) ya += ldlt.solve(rhs_ls - M0 * ya);
      ya.array() /= rn.array();  // undo the row normalization
      bool changed = false;
      const double y_sc = 1.0 + ya.lpNorm<Eigen::Infinity>();
      yp.setZero();
      for (int a = 0; a < ma; ++a) {
        if (act[a] >= w.m_eq && ya[a] < -1e-9 * y_sc) {
          active[act[a]] = 0;
          changed = true;
        } else {
          yp[act[a]] = act[a] >= w.m_eq ? std::max(ya[a], 0.0) : ya[a];
        }
      }
      if (!changed) break;
    }

    const Series rdv = g + Ct * yp;
    const double rd = rdv.lpNorm<Eigen::Infinity>();
    const double d_sc = std::max({(orig.P * xu).lpNorm<Eigen::Infinity>(),
                                  orig.q.lpNorm<Eigen::Infinity>(),
                                  (Ct * yp).lpNorm<Eigen::Infinity>(), 1.0});
    if (st.verbose)
      std::fprintf(stderr, "dual polish: rp=%.3e rd=%.3e (lim %.3e)\n", rp, rd,
                   st.tol * (1.0 + d_sc));
    if (rd <= st.tol * (1.0 + d_sc)) {
      finish_optimal(xu, yp, rp, rd, iters);
      return true;
    }
    // The cleaned nonnegative set is a better active-set guess than the
    // raw slack/multiplier comparison: let the primal-dual pinned polish
    // retry with it, now allowed to move x onto the exact face.
    return st.polish && try_polish(xu, yp, iters, &active);
  };

  // First choice: interior point. It closes feasible, bounded problems in
  // tens of iterations, including the LP-like ones where the splitting
  // iteration crawls. If it stalls (infeasible, unbounded, or just hard),
  // fall through to the splitting loop, which carries the certificates.
  if (st.use_ipm) {
    // Run the interior phase tighter than the outer tolerance: the cost
    // scaling means scaled residuals understate unscaled ones.
    QpSettings ipm_st = st;
    ipm_st.tol = std::max(st.tol * 1e-4, 1e-12);

    // Check an iterate against the unscaled tolerance even when the scaled
    // convergence test never fired: the inner target is deliberately
    // tighter than needed, so a "stalled" run is often already good
    // enough; failing that, walk through the polish variants.
    auto try_accept = [&](const IpmOut& ip) -> bool {
      if (ip.x.size() == 0) return false;
      Series xu = unscale_x(ip.x);
      Series yu = unscale_y(ip.y);
      Series cx = orig.C * xu;
      Series zu(m);
      for (int i = 0; i < m; ++i)
        zu[i] = std::clamp(cx[i], orig.l[i], orig.u[i]);
      double rp = (cx - zu).lpNorm<Eigen::Infinity>();
      double rd = (orig.P * xu + orig.q + orig.C.transpose() * yu)
                      .lpNorm<Eigen::Infinity>();
      double p_scale = std::max(cx.lpNorm<Eigen::Infinity>(),
                                zu.lpNorm<Eigen::Infinity>());
      double d_scale =
          std::max({(orig.P * xu).lpNorm<Eigen::Infinity>(),
                    orig.q.lpNorm<Eigen::Infinity>(),
                    (orig.C.transpose() * yu).lpNorm<Eigen::Infinity>()});
      if (st.verbose)
        std::fprintf(stderr,
                     "ipm handoff: rp=%.3e (lim %.3e) rd=%.3e (lim %.3e) "
                     "obj=%.10g\n",
                     rp, st.tol + st.tol * p_scale, rd,
                     st.tol + st.tol * d_scale,
                     0.5 * xu.dot(orig.P * xu) + orig.q.dot(xu));
      if (rp <= st.tol + st.tol * p_scale && rd <= st.tol + st.tol * d_scale) {
        finish_optimal(xu, yu, rp, rd, ip.iterations);
        return true;
      }
      if (!st.polish) return false;
      // the barrier solution separates slacks and multipliers by many
      // orders of magnitude, which makes a reliable active-set guess
      std::vector<char> hint(m, 1);
      for (int i = w.m_eq; i < m; ++i)
        hint[i] = ip.z[i - w.m_eq] > ip.s[i - w.m_eq] ? 1 : 0;
      if (try_polish(xu, yu, ip.iterations, &hint)) return true;
      // the hint can be over-inclusive on degenerate problems; retry with
      // the multiplier/slack-based guess before giving up on the pair
      if (try_polish(xu, yu, ip.iterations)) return true;
      // primal often lands on the optimal face with only the multipliers
      // adrift; re-fit the duals at fixed x before giving up on the pair
      return try_dual_polish(xu, yu, ip.iterations);
    };

    IpmOut ip = ipm_solve(w, ipm_st);
    if (try_accept(ip)) return out;

    // Proximal refinement for degenerate stalls: add a small strictly
    // convex term eps/2*||x - x_ref||^2 in the scaled space and re-solve,
    // recentering x_ref on each solution. The fixed point of the
    // recentered problems is the original optimum, and each prox solve is
    // well conditioned, so a few passes recover the accuracy the plain
    // barrier could not reach.
    if (ip.x.size() > 0) {
      const double eps_prox = 1e-5;
      StackedQp wp = w;
      {
        Eigen::SparseMatrix<double> I(n, n);
        I.setIdentity();
        wp.P = w.P + eps_prox * I;
      }
      Series x_ref = ip.x;
      // Convergence of the prox iteration is linear with a rate set by the
      // problem's weak-curvature directions; allow plenty of passes, each
      // inner solve is cheap and warm-started by recentering.
      for (int pass = 0; pass < 60; ++pass) {
        wp.q = w.q - eps_prox * x_ref;
        IpmOut ipp = ipm_solve(wp, ipm_st);
        if (ipp.x.size() == 0) break;
        if (st.verbose)
          std::fprintf(stderr, "prox pass=%d step=%.3e\n", pass,
                       (ipp.x - x_ref).lpNorm<Eigen::Infinity>());
        const double step = (ipp.x - x_ref).lpNorm<Eigen::Infinity>();
        x_ref = ipp.x;
        if (try_accept(ipp)) return out;
        if (step < 1e-12) break;  // prox fixed point; accepting is hopeless
      }
    }
  }

  int last_rho_update = 0;
  int rho_update_interval = 100;  // doubled after each change, so the step
                                  // settles instead of oscillating forever
  int next_polish = 500;          // early-polish schedule (x4 each attempt)
  for (int iter = 1; iter <= st.max_iter; ++iter) {
    rhs.head(n) = st.sigma * x - w.q;
    rhs.tail(m) = z - (y.array() / rho.array()).matrix();
    sol = kkt.ldlt.solve(rhs);
    Series xt = sol.head(n);
    Series nu = sol.tail(m);
    Series zt = z + ((nu - y).array() / rho.array()).matrix();

    Series x_new = st.alpha * xt + (1.0 - st.alpha) * x;
    Series v = st.alpha * zt + (1.0 - st.alpha) * z +
               (y.array() / rho.array()).matrix();
    Series z_new(m);
    for (int i = 0; i < m; ++i) z_new[i] = std::clamp(v[i], w.l[i], w.u[i]);
    Series y_new = (rho.array() * (v - z_new).array()).matrix();
    x = std::move(x_new);
    z = std::move(z_new);
    y = std::move(y_new);

    if (iter % st.check_interval != 0 && iter != st.max_iter) continue;

    Series xu = unscale_x(x);
    Series yu = unscale_y(y);
    Series zu = (z.array() / sc.Erow.array()).matrix();
    Series cx = orig.C * xu;
    double rp = (cx - zu).lpNorm<Eigen::Infinity>();
    Series rdv = orig.P * xu + orig.q + orig.C.transpose() * yu;
    double rd = rdv.lpNorm<Eigen::Infinity>();
    double p_scale = std::max(cx.lpNorm<Eigen::Infinity>(),
                              zu.lpNorm<Eigen::Infinity>());
    double d_scale = std::max({(orig.P * xu).lpNorm<Eigen::Infinity>(),
                               orig.q.lpNorm<Eigen::Infinity>(),
                               (orig.C.transpose() * yu).lpNorm<Eigen::Infinity>()});
    double eps_p = st.tol + st.tol * p_scale;
    double eps_d = st.tol + st.tol * d_scale;
    if (st.verbose)
      std::fprintf(stderr, "iter=%d rp=%.3e rd=%.3e eps_p=%.3e eps_d=%.3e rho=%.3e\n",
                   iter, rp, rd, eps_p, eps_d, rho_base);

    if (rp <= eps_p && rd <= eps_d) {
      if (st.polish && try_polish(xu, yu, iter)) return out;
      finish_optimal(xu, yu, rp, rd, iter);
      return out;
    }

    // Periodic early polish: LP-like problems often stall far from the
    // tolerance while the active set is already identifiable.
    if (st.polish && iter >= next_polish) {
      next_polish *= 4;
      if (try_polish(xu, yu, iter)) return out;
    }

    // Infeasibility certificates from the iterate differences.
    Series dy = unscale_y(y) - unscale_y(y_last_check);
    double dy_n = dy.lpNorm<Eigen::Infinity>();
    if (dy_n > 1e-12) {
      bool cert = (orig.C.transpose() * dy).lpNorm<Eigen::Infinity>() <=
                  st.inf_tol * dy_n;
      if (cert) {
        double support = 0.0;
        for (int i = 0; i < m; ++i) {
          double pos = std::max(dy[i], 0.0), neg = std::min(dy[i], 0.0);
          if (pos > 0.0) {
            if (!std::isfinite(orig.u[i])) { cert = false; break; }
            support += orig.u[i] * pos;
          }
          if (neg < 0.0) {
            if (!std::isfinite(orig.l[i])) {
              if (neg < -st.inf_tol * dy_n) { cert = false; break; }
            } else {
              support += orig.l[i] * neg;
            }
          }
        }
        if (cert && support <= -st.inf_tol * dy_n) {
          out.kind = SolveKind::Infeasible;
          out.iterations = iter;
          return out;
        }
      }
    }
    Series dx = unscale_x(x) - unscale_x(x_last_check);
    double dx_n = dx.lpNorm<Eigen::Infinity>();
    if (dx_n > 1e-12) {
      bool cert = (orig.P * dx).lpNorm<Eigen::Infinity>() <= st.inf_tol * dx_n &&
                  orig.q.dot(dx) <= -st.inf_tol * dx_n;
      if (cert) {
        Series cdx = orig.C * dx;
        for (int i = 0; i < m && cert; ++i) {
          if (std::isfinite(orig.u[i]) && cdx[i] > st.inf_tol * dx_n)
            cert = false;
          if (std::isfinite(orig.l[i]) && cdx[i] < -st.inf_tol * dx_n)
            cert = false;
        }
        if (cert) {
          out.kind = SolveKind::Unbounded;
          out.iterations = iter;
          return out;
        }
      }
    }
    y_last_check = y;
    x_last_check = x;

    if (st.adaptive_rho && iter >= st.adapt_start &&
        iter - last_rho_update >= rho_update_interval) {
      // Balance the residuals of the *scaled* problem (everything O(1)
      // there), normalized by their own magnitudes with a floor so a
      // near-zero solution cannot blow the ratio up.
      Series cx_s = w.C * x;
      double rp_s = (cx_s - z).lpNorm<Eigen::Infinity>() /
                    std::max({cx_s.lpNorm<Eigen::Infinity>(),
                              z.lpNorm<Eigen::Infinity>(), 1.0});
      Series rd_sv = w.P * x + w.q + w.C.transpose() * y;
      double rd_s = rd_sv.lpNorm<Eigen::Infinity>() /
                    std::max({(w.P * x).lpNorm<Eigen::Infinity>(),
                              w.q.lpNorm<Eigen::Infinity>(),
                              (w.C.transpose() * y).lpNorm<Eigen::Infinity>(),
                              1.0});
      double ratio = std::sqrt(rp_s / std::max(rd_s, 1e-16));
      if (ratio > 5.0 || ratio < 0.2) {
        double factor = std::clamp(ratio, 0.1, 10.0);
        rho_base = std::clamp(rho_base * factor, 1e-6, 1e6);
        rho = rho_vec(rho_base);
        kkt.factor(w.P, st.sigma, w.C, rho);
        last_rho_update = iter;
        rho_update_interval *= 2;
      }
    }
  }

  // Iteration limit: report the best we have, polished if possible.
  Series xu = unscale_x(x);
  Series yu = unscale_y(y);
  Series zu = (z.array() / sc.Erow.array()).matrix();
  double rp = (orig.C * xu - zu).lpNorm<Eigen::Infinity>();
  double rd = (orig.P * xu + orig.q + orig.C.transpose() * yu)
                  .lpNorm<Eigen::Infinity>();
  if (st.polish && try_polish(xu, yu, st.max_iter)) return out;
  out.kind = SolveKind::IterLimit;
  out.primal = xu;
  out.dual = yu;
  out.objective = qp.objective(xu);
  out.primal_residual = rp;
  out.dual_residual = rd;
  out.iterations = st.max_iter;
  return out;
}

}  // namespace rep2a
