#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rep2a/miqp.hpp"
#include "rep2a/subproblems.hpp"

namespace rep2a {

// ---------------------------------------------------------------------------
// Configuration and result types for the iterative best-response engine.
// ---------------------------------------------------------------------------

/// Knobs of the equilibrium iteration. rho and market_weights override the
/// corresponding GameContext fields so one config object fully determines a
/// run. Tolerances g1/g2 left at zero are derived from the instance scale
/// at startup (see iterate_to_equilibrium).
struct SolverConfig {
  double rho = 10.0;
  Eigen::Vector3d market_weights = Eigen::Vector3d::Ones();
  int max_iters = 200;
  double g1 = 0.0;        // potential-change tolerance (CNY); <=0 -> auto
  double g2 = 0.0;        // clearing-residual tolerance; <=0 -> auto
  double eps_bar = 1e-4;  // approximate-BR acceptance, fraction of |Phi|
  double eps_floor = 1e-6;  // absolute floor for the acceptance threshold
  double init_elec_price = 300.0;  // CNY/MWh flat start for both e markets
  std::optional<PriceVector> initial_prices;  // overrides the defaults
  BnbBudget bnb_budget;
  QpSettings qp;
  bool exact_ra_br = false;  // skip relax-and-round, always branch and bound
};

enum class EquilibriumStatus { Converged, IterLimit };

/// One best-response sub-step: which player moved, the potential before and
/// after (prices fixed), the achieved penalized cost, and the BR error
/// bound eps (cost above the relaxation/certification lower bound).
struct SubstepRecord {
  int iteration = 0;
  Stakeholder player = Stakeholder::Rg;
  double phi_before = 0.0;
  double phi_after = 0.0;
  double j = 0.0;
  double eps = 0.0;
  bool exact = true;  // false when the relax-and-round path was accepted
};

/// One outer iteration: potential, residual norm, and the per-player
/// penalized costs / BR error bounds after the three sub-steps.
struct IterationRecord {
  int iteration = 0;
  double phi = 0.0;
  double delta_phi = 0.0;
  double residual = 0.0;
  std::array<double, 3> j{};    // indexed by Stakeholder order rg, hp, ra
  std::array<double, 3> eps{};
  bool ra_exact = true;
};

/// Per-player equilibrium gaps d_k = J_k(current) - best response value.
/// When the exact RA best response cannot be certified within budget, the
/// relaxation bound is used instead and the gap is only an upper bound.
struct GapReport {
  Eigen::Vector3d d = Eigen::Vector3d::Zero();
  std::array<bool, 3> upper_bound{false, false, false};

  double max() const { return d.maxCoeff(); }
};

struct Certification {
  bool certified = false;
  double eps = 0.0;
  Eigen::Vector3d margins = Eigen::Vector3d::Zero();  // eps - d_k
  GapReport gaps;
};

struct EquilibriumResult {
  DecisionProfile x;
  PriceVector prices;
  std::vector<double> phi_trace;       // one entry per outer iteration
  std::vector<double> residual_trace;  // weighted ||phi|| per iteration
  std::vector<IterationRecord> iterations_detail;
  std::vector<SubstepRecord> substeps;
  Eigen::Vector3d gaps = Eigen::Vector3d::Zero();
  std::array<bool, 3> gaps_upper_bound{false, false, false};
  Eigen::Vector3d costs = Eigen::Vector3d::Zero();  // bare C_k
  int iterations = 0;
  EquilibriumStatus status = EquilibriumStatus::IterLimit;
  double eps_certified = 0.0;  // max_k d_k at the returned point
  double g1 = 0.0, g2 = 0.0;   // the tolerances actually used
};

/// Thrown when a stakeholder subproblem cannot be solved (infeasible,
/// unbounded, or solver failure); carries the player and the status kind.
struct EquilibriumError : std::runtime_error {
  Stakeholder player;
  SolveKind kind;
  EquilibriumError(Stakeholder k, SolveKind kd, const std::string& what)
      : std::runtime_error(what), player(k), kind(kd) {}
};

// ---------------------------------------------------------------------------
// Price update.
// ---------------------------------------------------------------------------

/// One dual step per market entry: lambda' = lambda - rho * w_m * phi,
/// with phi = sell - buy in the documented time-major (rg-hp, rg-ra, hp-ra)
/// order. The sign follows the Lagrangian orientation: sellers earn
/// -lambda*sell and buyers pay +lambda*buy, so lambda multiplies
/// (buy - sell) = -phi and gradient ascent on the dual steps along -phi.
/// Excess demand (phi < 0) therefore raises the price, excess supply
/// lowers it, which is what drives the clearing residual to zero.
inline PriceVector update_prices(const PriceVector& prices, const Series& phi,
                                 double rho, const Eigen::Vector3d& weights) {
  const int T = static_cast<int>(phi.size()) / 3;
  PriceVector out = prices;
  for (int t = 0; t < T; ++t) {
    out.e_rg_hp[t] -= rho * weights[0] * phi[3 * t + 0];
    out.e_rg_ra[t] -= rho * weights[1] * phi[3 * t + 1];
    out.h_hp_ra[t] -= rho * weights[2] * phi[3 * t + 2];
  }
  return out;
}

/// Flat electricity reference plus hydrogen at ammonia-value parity.
inline PriceVector default_initial_prices(const GameContext& ctx,
                                          const SolverConfig& cfg) {
  const int T = ctx.grid.T;
  PriceVector p;
  p.e_rg_hp = Series::Constant(T, cfg.init_elec_price);
  p.e_rg_ra = Series::Constant(T, cfg.init_elec_price);
  p.h_hp_ra = ctx.scenario.ammonia_price / ctx.ra.h2_per_nh3;
  return p;
}

// ---------------------------------------------------------------------------
// Best responses.
// ---------------------------------------------------------------------------

namespace detail {

inline void throw_if_failed(const SolveStatus& st, Stakeholder k,
                            const char* block) {
  if (st.optimal()) return;
  const char* what = st.kind == SolveKind::Infeasible   ? "infeasible"
                     : st.kind == SolveKind::Unbounded  ? "unbounded"
                                                        : "not solved";
  throw EquilibriumError(k, st.kind,
                         std::string(to_string(k)) + " subproblem " + what +
                             " (" + block + ")");
}

}  // namespace detail

/// Outcome of one best response: achieved penalized cost and the error
/// bound eps_k (distance above a lower bound on the true best response).
struct BrOutcome {
  double j = 0.0;
  double eps = 0.0;
  bool exact = true;
};

/// Computes stakeholder k's best response against the other players'
/// strategies in x and writes it back into x's own block. phi_abs is |Phi|
/// at the current iterate; it scales the relax-and-round acceptance test.
inline BrOutcome best_response(const GameContext& ctx, Stakeholder k,
                               DecisionProfile& x, const PriceVector& prices,
                               const SolverConfig& cfg, double phi_abs) {
  const int T = ctx.grid.T;
  BrOutcome out;
  switch (k) {
    case Stakeholder::Rg: {
      auto qp = build_rg_subproblem(ctx, prices, x);
      auto st = solve_qp(qp, cfg.qp);
      detail::throw_if_failed(st, k, "supply balance / battery");
      x.rg = unpack_rg(st.primal, T);
      out.j = st.objective;
      out.eps = cfg.qp.tol * (1.0 + std::abs(st.objective));
      out.exact = true;
      return out;
    }
    case Stakeholder::Hp: {
      auto qp = build_hp_subproblem(ctx, prices, x);
      auto st = solve_qp(qp, cfg.qp);
      detail::throw_if_failed(st, k, "electrolysis / hydrogen store");
      x.hp = unpack_hp(st.primal, T);
      out.j = st.objective;
      out.eps = cfg.qp.tol * (1.0 + std::abs(st.objective));
      out.exact = true;
      return out;
    }
    case Stakeholder::Ra:
      break;
  }

  // RA: relax, round and repair, re-optimize; accept when close enough to
  // the relaxation bound, otherwise fall back to exact branch and bound.
  auto prob = build_ra_subproblem(ctx, prices, x);
  auto rel = solve_relaxed(prob.miqp, cfg.qp);
  detail::throw_if_failed(rel, k, "relaxed commitment");

  auto accept = [&](const SolveStatus& st, double eps, bool exact) {
    x.ra = unpack_ra(st.primal, T, ctx.ra_initial_state);
    out.j = st.objective;
    out.eps = eps;
    out.exact = exact;
  };

  SolveStatus fixed;
  double eps_round = std::numeric_limits<double>::infinity();
  if (!cfg.exact_ra_br) {
    std::vector<Eigen::Vector3d> frac(T);
    for (int t = 0; t < T; ++t)
      frac[t] = Eigen::Vector3d(rel.primal[prob.cols.pro[t]],
                                rel.primal[prob.cols.by[t]],
                                rel.primal[prob.cols.off[t]]);
    auto sched = round_and_repair(frac, ctx.ra, ctx.ra_initial_state);
    fixed = solve_fixed_binaries(prob.miqp, prob.cols, sched, cfg.qp);
    if (fixed.optimal()) {
      eps_round = fixed.objective - rel.objective;
      const double threshold =
          std::max(cfg.eps_bar * phi_abs, cfg.eps_floor);
      if (eps_round <= threshold) {
        accept(fixed, std::max(eps_round, 0.0), false);
        return out;
      }
    }
  }

  auto exact = solve_exact_miqp(prob.miqp, cfg.bnb_budget, cfg.qp,
                                &prob.cols, &ctx.ra);
  if (exact.primal.size() > 0 &&
      (exact.optimal() || exact.kind == SolveKind::IterLimit)) {
    accept(exact, exact.gap * std::max(1.0, std::abs(exact.objective)), true);
    return out;
  }
  if (fixed.optimal()) {
    // branch and bound failed but the rounded point is feasible: keep it
    accept(fixed, std::max(eps_round, 0.0), false);
    return out;
  }
  detail::throw_if_failed(exact, k, "commitment branch and bound");
  return out;  // unreachable
}

// ---------------------------------------------------------------------------
// Gap computation and certification.
// ---------------------------------------------------------------------------

/// d_k = J_k(x) - inf J_k(., x_{-k}) for each player at fixed prices,
/// clamped at zero. For RA the infimum comes from branch and bound; if the
/// budget runs out, the relaxation bound substitutes and the entry is
/// flagged as an upper bound on the true gap.
inline GapReport equilibrium_gap(const GameContext& ctx,
                                 const DecisionProfile& x,
                                 const PriceVector& prices,
                                 const SolverConfig& cfg) {
  GapReport rep;
  auto record = [&](Stakeholder k, double best, bool ub) {
    const double j = evaluate_penalized_cost(ctx, k, x, prices);
    rep.d[static_cast<int>(k)] = std::max(0.0, j - best);
    rep.upper_bound[static_cast<int>(k)] = ub;
  };
  {
    auto st = solve_qp(build_rg_subproblem(ctx, prices, x), cfg.qp);
    detail::throw_if_failed(st, Stakeholder::Rg, "gap best response");
    record(Stakeholder::Rg, st.objective, false);
  }
  {
    auto st = solve_qp(build_hp_subproblem(ctx, prices, x), cfg.qp);
    detail::throw_if_failed(st, Stakeholder::Hp, "gap best response");
    record(Stakeholder::Hp, st.objective, false);
  }
  {
    auto prob = build_ra_subproblem(ctx, prices, x);
    auto exact = solve_exact_miqp(prob.miqp, cfg.bnb_budget, cfg.qp,
                                  &prob.cols, &ctx.ra);
    if (exact.optimal()) {
      record(Stakeholder::Ra, exact.objective, false);
    } else {
      auto rel = solve_relaxed(prob.miqp, cfg.qp);
      detail::throw_if_failed(rel, Stakeholder::Ra, "gap relaxation");
      record(Stakeholder::Ra, rel.objective, true);
    }
  }
  return rep;
}

/// Accepts iff every player's gap is at most eps. Upper-bounded gaps that
/// fit under eps still certify (the true gap can only be smaller).
inline Certification certify_epsilon_ne(const GameContext& ctx,
                                        const DecisionProfile& x,
                                        const PriceVector& prices, double eps,
                                        const SolverConfig& cfg) {
  Certification cert;
  cert.eps = eps;
  cert.gaps = equilibrium_gap(ctx, x, prices, cfg);
  cert.margins = Eigen::Vector3d::Constant(eps) - cert.gaps.d;
  cert.certified = cert.margins.minCoeff() >= 0.0;
  return cert;
}

// ---------------------------------------------------------------------------
// The outer loop.
// ---------------------------------------------------------------------------

/// Gauss-Seidel best responses RG -> HP -> RA at fixed prices, then one
/// dual price step, until both |delta Phi| < g1 and ||phi|| < g2 or the
/// iteration budget runs out. Records full traces and per-sub-step data;
/// finishes with a gap computation at the returned point.
inline EquilibriumResult iterate_to_equilibrium(GameContext ctx,
                                                const SolverConfig& cfg) {
  ctx.rho = cfg.rho;
  ctx.market_weights = cfg.market_weights;
  const int T = ctx.grid.T;
  ctx.grid.validate();
  ctx.scenario.validate(ctx.grid);

  EquilibriumResult res;
  res.prices = cfg.initial_prices ? *cfg.initial_prices
                                  : default_initial_prices(ctx, cfg);
  res.x = DecisionProfile::zeros(ctx.grid, ctx.ra_initial_state);

  const double phi0 = evaluate_potential(ctx, res.x, res.prices);

  // Tolerance auto-scaling: the potential tolerance tracks the magnitude
  // of Phi (falling back to the first iterate when Phi^0 = 0 at the zero
  // start), the residual tolerance tracks the traded-volume scale.
  double g1 = cfg.g1;
  double g2 = cfg.g2;
  if (g2 <= 0.0) {
    const Series avail = ctx.scenario.wind_avail + ctx.scenario.solar_avail;
    g2 = 1e-3 * std::max(1.0, avail.norm());
  }

  double phi_prev = phi0;
  const auto order = {Stakeholder::Rg, Stakeholder::Hp, Stakeholder::Ra};
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    IterationRecord rec;
    rec.iteration = iter;
    double phi_running = evaluate_potential(ctx, res.x, res.prices);
    for (Stakeholder k : order) {
      SubstepRecord sub;
      sub.iteration = iter;
      sub.player = k;
      sub.phi_before = phi_running;
      auto br = best_response(ctx, k, res.x, res.prices, cfg,
                              std::abs(phi_running));
      phi_running = evaluate_potential(ctx, res.x, res.prices);
      sub.phi_after = phi_running;
      sub.j = br.j;
      sub.eps = br.eps;
      sub.exact = br.exact;
      res.substeps.push_back(sub);
      rec.j[static_cast<int>(k)] = br.j;
      rec.eps[static_cast<int>(k)] = br.eps;
      if (k == Stakeholder::Ra) rec.ra_exact = br.exact;
    }

    const double phi_now = phi_running;
    const Series phi_vec = clearing_residual(res.x);
    const double r = residual_norm(phi_vec, ctx.market_weights);
    rec.phi = phi_now;
    rec.delta_phi = phi_now - phi_prev;
    rec.residual = r;
    res.phi_trace.push_back(phi_now);
    res.residual_trace.push_back(r);
    res.iterations_detail.push_back(rec);
    res.iterations = iter;

    if (g1 <= 0.0)
      g1 = 1e-4 * std::max({std::abs(phi0), std::abs(phi_now), 1.0});

    if (std::abs(phi_now - phi_prev) < g1 && r < g2) {
      res.status = EquilibriumStatus::Converged;
      break;
    }
    phi_prev = phi_now;
    res.prices =
        update_prices(res.prices, phi_vec, ctx.rho, ctx.market_weights);
  }
  res.g1 = g1;
  res.g2 = g2;

  auto gaps = equilibrium_gap(ctx, res.x, res.prices, cfg);
  res.gaps = gaps.d;
  res.gaps_upper_bound = gaps.upper_bound;
  res.eps_certified = gaps.max();
  res.costs[0] = evaluate_cost(ctx, Stakeholder::Rg, res.x, res.prices);
  res.costs[1] = evaluate_cost(ctx, Stakeholder::Hp, res.x, res.prices);
  res.costs[2] = evaluate_cost(ctx, Stakeholder::Ra, res.x, res.prices);
  return res;
}

}  // namespace rep2a
