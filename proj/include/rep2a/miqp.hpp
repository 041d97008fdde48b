#pragma once

#include <chrono>
#include <optional>
#include <queue>

#include "rep2a/qp_solver.hpp"
#include "rep2a/schedule.hpp"

namespace rep2a {

struct BnbBudget {
  int max_nodes = 5000;
  double time_limit = 600.0;  // seconds
  double gap_tol = 1e-6;      // relative optimality gap
};

/// Columns of the commitment binaries inside a CanonicalMIQP, one entry per
/// step. Filled by the builders that embed an AsySchedule.
struct ScheduleColumns {
  std::vector<int> pro, by, off, su, sd;
  AsyState initial_state = AsyState::Production;
  bool hsb_enabled = true;

  bool present() const { return !pro.empty(); }
  int T() const { return static_cast<int>(pro.size()); }
};

/// Relax the binaries to [0,1] and solve the resulting convex QP. The
/// relaxed objective lower-bounds the mixed-integer optimum.
inline SolveStatus solve_relaxed(const CanonicalMIQP& p,
                                 const QpSettings& st = QpSettings{}) {
  CanonicalQP qp = p.base;
  const int nb = static_cast<int>(p.binary_idx.size());
  if (nb > 0) {
    Eigen::SparseMatrix<double> B(2 * nb, qp.n);
    std::vector<Eigen::Triplet<double>> trip;
    Series rhs(2 * nb);
    for (int i = 0; i < nb; ++i) {
      trip.emplace_back(2 * i, p.binary_idx[i], 1.0);
      rhs[2 * i] = 1.0;  // x <= 1
      trip.emplace_back(2 * i + 1, p.binary_idx[i], -1.0);
      rhs[2 * i + 1] = 0.0;  // -x <= 0
    }
    B.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseMatrix<double> A(qp.A.rows() + 2 * nb, qp.n);
    Series b(qp.b.size() + 2 * nb);
    std::vector<Eigen::Triplet<double>> all;
    for (int k = 0; k < qp.A.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(qp.A, k); it; ++it)
        all.emplace_back(static_cast<int>(it.row()),
                         static_cast<int>(it.col()), it.value());
    for (int k = 0; k < B.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(B, k); it; ++it)
        all.emplace_back(static_cast<int>(qp.A.rows()) +
                             static_cast<int>(it.row()),
                         static_cast<int>(it.col()), it.value());
    A.setFromTriplets(all.begin(), all.end());
    b << qp.b, rhs;
    qp.A = std::move(A);
    qp.b = std::move(b);
  }
  return solve_qp(qp, st);
}

/// Project per-step fractional (pro, by, off) values to a feasible
/// schedule: argmax per step (ties Production > HSB > Idle), then repair
/// any too-short Idle spell by promoting it to HSB (or Production when HSB
/// is disabled).
inline AsySchedule round_and_repair(
    const std::vector<Eigen::Vector3d>& fractional, const RaParams& p,
    AsyState initial_state) {
  const int T = static_cast<int>(fractional.size());
  std::vector<AsyState> states(T);
  for (int t = 0; t < T; ++t) {
    const auto& f = fractional[t];
    AsyState s = AsyState::Production;
    double best = f[0];
    if (f[1] > best) { best = f[1]; s = AsyState::Hsb; }
    if (f[2] > best) { best = f[2]; s = AsyState::Idle; }
    if (!p.hsb_enabled && s == AsyState::Hsb) s = AsyState::Production;
    states[t] = s;
  }
  // Repair: every Idle spell entered within the horizon must last
  // min(min_downtime, T - t). A leading spell continuing the initial Idle
  // state is not an entry.
  int t = 0;
  while (t < T) {
    if (states[t] != AsyState::Idle) { ++t; continue; }
    int len = 0;
    while (t + len < T && states[t + len] == AsyState::Idle) ++len;
    const bool continues_initial = (t == 0 && initial_state == AsyState::Idle);
    const int required = std::min(p.min_downtime, T - t);
    if (!continues_initial && len < required) {
      const AsyState repl =
          p.hsb_enabled ? AsyState::Hsb : AsyState::Production;
      for (int k = 0; k < len; ++k) states[t + k] = repl;
    }
    t += len;
  }
  return schedule_from_states(states, initial_state);
}

/// Pin the commitment binaries to a given feasible schedule and optimize
/// the continuous part.
inline SolveStatus solve_fixed_binaries(const CanonicalMIQP& p,
                                        const ScheduleColumns& cols,
                                        const AsySchedule& s,
                                        const QpSettings& st = QpSettings{}) {
  CanonicalQP qp = p.base;
  const int T = cols.T();
  const int me = static_cast<int>(qp.E.rows());
  Eigen::SparseMatrix<double> E(me + 5 * T, qp.n);
  Series d(me + 5 * T);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < qp.E.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.E, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        it.value());
  d.head(me) = qp.d;
  for (int t = 0; t < T; ++t) {
    trip.emplace_back(me + 5 * t + 0, cols.pro[t], 1.0);
    d[me + 5 * t + 0] = s.pro[t];
    trip.emplace_back(me + 5 * t + 1, cols.by[t], 1.0);
    d[me + 5 * t + 1] = s.by[t];
    trip.emplace_back(me + 5 * t + 2, cols.off[t], 1.0);
    d[me + 5 * t + 2] = s.off[t];
    trip.emplace_back(me + 5 * t + 3, cols.su[t], 1.0);
    d[me + 5 * t + 3] = s.su[t];
    trip.emplace_back(me + 5 * t + 4, cols.sd[t], 1.0);
    d[me + 5 * t + 4] = s.sd[t];
  }
  E.setFromTriplets(trip.begin(), trip.end());
  qp.E = std::move(E);
  qp.d = std::move(d);
  return solve_qp(qp, st);
}

namespace detail {

inline CanonicalMIQP with_fixings(const CanonicalMIQP& p,
                                  const std::vector<std::pair<int, double>>& fx) {
  CanonicalMIQP out = p;
  CanonicalQP& qp = out.base;
  const int me = static_cast<int>(qp.E.rows());
  const int nf = static_cast<int>(fx.size());
  Eigen::SparseMatrix<double> E(me + nf, qp.n);
  Series d(me + nf);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < qp.E.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(qp.E, k); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                        it.value());
  d.head(me) = qp.d;
  for (int i = 0; i < nf; ++i) {
    trip.emplace_back(me + i, fx[i].first, 1.0);
    d[me + i] = fx[i].second;
  }
  E.setFromTriplets(trip.begin(), trip.end());
  qp.E = std::move(E);
  qp.d = std::move(d);
  return out;
}

}  // namespace detail

/// Best-first branch and bound over the binary columns. Relaxation bounds
/// come from solve_relaxed; incumbents come from integral relaxations and
/// from round-and-repair when schedule columns are present. Deterministic:
/// most-fractional branching with index tie-break, node ordering by
/// (bound, id).
inline SolveStatus solve_exact_miqp(const CanonicalMIQP& p,
                                    const BnbBudget& budget,
                                    const QpSettings& st = QpSettings{},
                                    const ScheduleColumns* cols = nullptr,
                                    const RaParams* ra_params = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  struct Node {
    double bound;
    int id;
    std::vector<std::pair<int, double>> fixings;
    Series relaxed_primal;
  };
  auto cmp = [](const Node& a, const Node& b) {
    return a.bound > b.bound || (a.bound == b.bound && a.id > b.id);
  };
  std::priority_queue<Node, std::vector<Node>, decltype(cmp)> open(cmp);

  SolveStatus incumbent;
  incumbent.kind = SolveKind::Infeasible;
  double inc_obj = std::numeric_limits<double>::infinity();
  double best_bound = -std::numeric_limits<double>::infinity();

  const double int_tol = 1e-5;
  auto integral = [&](const Series& x) {
    for (int c : p.binary_idx) {
      double v = x[c];
      if (std::abs(v - std::round(v)) > int_tol) return false;
    }
    return true;
  };

  auto try_round_incumbent = [&](const Series& x) {
    if (!cols || !cols->present() || !ra_params) return;
    std::vector<Eigen::Vector3d> frac(cols->T());
    for (int t = 0; t < cols->T(); ++t)
      frac[t] = Eigen::Vector3d(x[cols->pro[t]], x[cols->by[t]],
                                x[cols->off[t]]);
    AsySchedule s = round_and_repair(frac, *ra_params, cols->initial_state);
    auto fixed = solve_fixed_binaries(p, *cols, s, st);
    if (fixed.optimal() && fixed.objective < inc_obj) {
      inc_obj = fixed.objective;
      incumbent = fixed;
      incumbent.kind = SolveKind::Optimal;
    }
  };

  // Root node.
  int next_id = 0;
  {
    auto rel = solve_relaxed(p, st);
    if (rel.kind == SolveKind::Infeasible) return rel;
    if (rel.kind == SolveKind::Unbounded) return rel;
    if (!rel.optimal()) return rel;  // solver failure at root
    if (integral(rel.primal)) {
      rel.gap = 0.0;
      return rel;
    }
    try_round_incumbent(rel.primal);
    open.push({rel.objective, next_id++, {}, rel.primal});
  }

  int nodes = 0;
  while (!open.empty()) {
    if (nodes >= budget.max_nodes || elapsed() > budget.time_limit) break;
    Node node = open.top();
    open.pop();
    best_bound = node.bound;
    const double slack = budget.gap_tol * std::max(1.0, std::abs(inc_obj));
    if (node.bound >= inc_obj - slack) {
      // Remaining nodes cannot beat the incumbent beyond the gap tolerance.
      if (incumbent.kind == SolveKind::Optimal) {
        incumbent.gap = std::max(0.0, (inc_obj - node.bound) /
                                          std::max(1.0, std::abs(inc_obj)));
        return incumbent;
      }
      break;
    }
    // Branch on the most fractional binary.
    int branch_col = -1;
    double best_frac = -1.0;
    for (int c : p.binary_idx) {
      double v = node.relaxed_primal[c];
      double f = std::min({std::abs(v), std::abs(v - 1.0), 0.5});
      if (f > int_tol && f > best_frac) {
        best_frac = f;
        branch_col = c;
      }
    }
    if (branch_col < 0) continue;
    for (double val : {1.0, 0.0}) {
      auto fixings = node.fixings;
      fixings.emplace_back(branch_col, val);
      auto child_p = detail::with_fixings(p, fixings);
      auto rel = solve_relaxed(child_p, st);
      ++nodes;
      if (rel.kind == SolveKind::Infeasible) continue;
      if (!rel.optimal()) continue;
      // numerical guard: a child bound may not drop below its parent
      double bound = std::max(rel.objective, node.bound);
      if (bound >= inc_obj - budget.gap_tol * std::max(1.0, std::abs(inc_obj)))
        continue;
      if (integral(rel.primal)) {
        if (rel.objective < inc_obj) {
          inc_obj = rel.objective;
          incumbent = rel;
          incumbent.kind = SolveKind::Optimal;
        }
        continue;
      }
      try_round_incumbent(rel.primal);
      open.push({bound, next_id++, std::move(fixings), rel.primal});
    }
  }

  if (incumbent.kind != SolveKind::Optimal) {
    // No feasible point found. Exhausted tree means infeasible.
    if (open.empty() && nodes < budget.max_nodes) return incumbent;
    incumbent.kind = SolveKind::IterLimit;
    return incumbent;
  }
  if (open.empty()) {
    incumbent.gap = 0.0;
    return incumbent;
  }
  // Budget exhausted: report incumbent with the certified gap.
  double lb = open.empty() ? inc_obj : open.top().bound;
  incumbent.gap = (inc_obj - lb) / std::max(1.0, std::abs(inc_obj));
  if (incumbent.gap > budget.gap_tol) incumbent.kind = SolveKind::IterLimit;
  return incumbent;
}

}  // namespace rep2a
