#pragma once

#include "rep2a/miqp.hpp"
#include "rep2a/profile.hpp"
#include "rep2a/qp.hpp"

namespace rep2a {

/// Everything the builders and evaluators share: grid, exogenous data,
/// stakeholder parameters, penalty factor and per-market penalty weights.
struct GameContext {
  TimeGrid grid;
  ScenarioData scenario;
  RgParams rg;
  HpParams hp;
  RaParams ra;
  double rho = 10.0;
  Eigen::Vector3d market_weights = Eigen::Vector3d::Ones();
  AsyState ra_initial_state = AsyState::Production;
};

namespace detail {

inline void check_len(const Series& s, int T, const char* what) {
  if (s.size() != T)
    throw std::invalid_argument(std::string(what) + ": length != T");
}

/// Battery block: charge/discharge limits, SOC dynamics with initial SOC as
/// a constant and a cyclic end-of-horizon condition.
inline void add_bes(QpBuilder& b, int ch, int dis, int soc, int T, double dt,
                    double e_cap, double p_cap, double eff_c, double eff_d,
                    double soc_init_frac) {
  const double soc0 = soc_init_frac * e_cap;
  for (int t = 0; t < T; ++t) {
    std::vector<std::pair<int, double>> terms = {
        {soc + t, 1.0}, {ch + t, -eff_c * dt}, {dis + t, dt / eff_d}};
    double rhs = 0.0;
    if (t == 0)
      rhs = soc0;
    else
      terms.push_back({soc + t - 1, -1.0});
    b.add_eq(terms, rhs);
    b.add_range(ch + t, 0.0, p_cap);
    b.add_range(dis + t, 0.0, p_cap);
    b.add_range(soc + t, 0.0, e_cap);
  }
  b.fix(soc + T - 1, soc0);
}

/// Quadratic clearing-penalty term (rho/2)*w*(x_col - other)^2 per step.
inline void add_penalty_term(QpBuilder& b, int col0, const Series& other,
                             double rho_w, int T) {
  for (int t = 0; t < T; ++t) {
    b.add_quad(col0 + t, col0 + t, rho_w);
    b.add_lin(col0 + t, -rho_w * other[t]);
    b.add_const(0.5 * rho_w * other[t] * other[t]);
  }
}

/// Constant penalty contribution of a market the player does not trade in.
inline void add_penalty_const(QpBuilder& b, const Series& sell,
                              const Series& buy, double rho_w, int T) {
  for (int t = 0; t < T; ++t) {
    const double r = sell[t] - buy[t];
    b.add_const(0.5 * rho_w * r * r);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Renewable generator: block order sell_hp, sell_ra, bes_charge,
// bes_discharge, bes_soc, curtail (6T columns).
// ---------------------------------------------------------------------------

inline CanonicalQP build_rg_subproblem(const GameContext& ctx,
                                       const PriceVector& prices,
                                       const DecisionProfile& others) {
  const int T = ctx.grid.T;
  const double dt = ctx.grid.dt;
  detail::check_len(others.hp.buy_rg, T, "rg others hp.buy_rg");
  detail::check_len(others.ra.buy_rg, T, "rg others ra.buy_rg");
  const auto& w = ctx.market_weights;

  QpBuilder b;
  int sell_hp = b.add_block("rg.sell_hp", T);
  int sell_ra = b.add_block("rg.sell_ra", T);
  int ch = b.add_block("rg.bes_charge", T);
  int dis = b.add_block("rg.bes_discharge", T);
  int soc = b.add_block("rg.bes_soc", T);
  int curt = b.add_block("rg.curtail", T);

  for (int t = 0; t < T; ++t) {
    b.add_lin(sell_hp + t, -prices.e_rg_hp[t] * dt);
    b.add_lin(sell_ra + t, -prices.e_rg_ra[t] * dt);
    b.add_lin(dis + t, ctx.rg.deg_cost * dt);
    // supply balance: avail + discharge = sells + charge + curtail
    b.add_eq({{sell_hp + t, 1.0},
              {sell_ra + t, 1.0},
              {ch + t, 1.0},
              {curt + t, 1.0},
              {dis + t, -1.0}},
             ctx.scenario.wind_avail[t] + ctx.scenario.solar_avail[t]);
    b.add_lower_bound(sell_hp + t, 0.0);
    b.add_lower_bound(sell_ra + t, 0.0);
    b.add_lower_bound(curt + t, 0.0);
  }
  detail::add_bes(b, ch, dis, soc, T, dt, ctx.rg.bes_energy_cap,
                  ctx.rg.bes_power_cap, ctx.rg.bes_eff_charge,
                  ctx.rg.bes_eff_discharge, ctx.rg.bes_soc_init);

  detail::add_penalty_term(b, sell_hp, others.hp.buy_rg, ctx.rho * w[0], T);
  detail::add_penalty_term(b, sell_ra, others.ra.buy_rg, ctx.rho * w[1], T);
  detail::add_penalty_const(b, others.hp.sell_ra, others.ra.buy_hp,
                            ctx.rho * w[2], T);
  return b.build();
}

// ---------------------------------------------------------------------------
// Hydrogen producer: block order buy_rg, elz_power, h2_prod, h2_store,
// sell_ra, bes_charge, bes_discharge, bes_soc (8T columns).
// ---------------------------------------------------------------------------

inline CanonicalQP build_hp_subproblem(const GameContext& ctx,
                                       const PriceVector& prices,
                                       const DecisionProfile& others) {
  const int T = ctx.grid.T;
  const double dt = ctx.grid.dt;
  detail::check_len(others.rg.sell_hp, T, "hp others rg.sell_hp");
  detail::check_len(others.ra.buy_hp, T, "hp others ra.buy_hp");
  const auto& w = ctx.market_weights;
  const auto& p = ctx.hp;

  QpBuilder b;
  int buy_rg = b.add_block("hp.buy_rg", T);
  int elz = b.add_block("hp.elz_power", T);
  int h2p = b.add_block("hp.h2_prod", T);
  int h2s = b.add_block("hp.h2_store", T);
  int sell_ra = b.add_block("hp.sell_ra", T);
  int ch = b.add_block("hp.bes_charge", T);
  int dis = b.add_block("hp.bes_discharge", T);
  int soc = b.add_block("hp.bes_soc", T);

  const double h2s0 = p.h2_store_init * p.h2_store_cap;
  for (int t = 0; t < T; ++t) {
    b.add_lin(buy_rg + t, prices.e_rg_hp[t] * dt);
    b.add_lin(dis + t, p.deg_cost * dt);
    b.add_lin(sell_ra + t, -prices.h_hp_ra[t] * dt);
    // power balance: purchase + discharge = electrolyzer + charge
    b.add_eq({{buy_rg + t, 1.0}, {dis + t, 1.0}, {elz + t, -1.0},
              {ch + t, -1.0}},
             0.0);
    // conversion: elz_power = spec_consumption * h2_prod
    b.add_eq({{elz + t, 1.0}, {h2p + t, -p.elz_spec_consumption}}, 0.0);
    b.add_range(elz + t, p.elz_min_load * p.elz_power_cap, p.elz_power_cap);
    // hydrogen store dynamics
    {
      std::vector<std::pair<int, double>> terms = {
          {h2s + t, 1.0}, {h2p + t, -dt}, {sell_ra + t, dt}};
      double rhs = 0.0;
      if (t == 0)
        rhs = h2s0;
      else
        terms.push_back({h2s + t - 1, -1.0});
      b.add_eq(terms, rhs);
    }
    b.add_range(h2s + t, 0.0, p.h2_store_cap);
    b.add_range(sell_ra + t, 0.0, p.h2_delivery_cap);
    b.add_lower_bound(buy_rg + t, 0.0);
  }
  b.fix(h2s + T - 1, h2s0);
  detail::add_bes(b, ch, dis, soc, T, dt, p.bes_energy_cap, p.bes_power_cap,
                  p.bes_eff_charge, p.bes_eff_discharge, p.bes_soc_init);

  detail::add_penalty_term(b, buy_rg, others.rg.sell_hp, ctx.rho * w[0], T);
  detail::add_penalty_term(b, sell_ra, others.ra.buy_hp, ctx.rho * w[2], T);
  detail::add_penalty_const(b, others.rg.sell_ra, others.ra.buy_rg,
                            ctx.rho * w[1], T);
  return b.build();
}

// ---------------------------------------------------------------------------
// Ammonia plant: block order buy_hp, buy_rg, back_power, asy_power,
// nh3_prod, nh3_sell, h2_buf, nh3_store, pro, by, off, su, sd (13T columns).
// ---------------------------------------------------------------------------

struct RaProblem {
  CanonicalMIQP miqp;
  ScheduleColumns cols;
};

namespace detail {

/// Adds RA's constraint set and objective to an existing builder. Penalty
/// terms and clearing are the caller's business (they differ between the
/// best-response and cooperative problems).
struct RaColumns {
  int buy_hp, buy_rg, back, asy, prod, sell, buf, store;
  int pro, by, off, su, sd;
};

inline RaColumns add_ra_body(QpBuilder& b, const GameContext& ctx,
                             bool with_prices, const PriceVector* prices) {
  const int T = ctx.grid.T;
  const double dt = ctx.grid.dt;
  const auto& p = ctx.ra;

  RaColumns c;
  c.buy_hp = b.add_block("ra.buy_hp", T);
  c.buy_rg = b.add_block("ra.buy_rg", T);
  c.back = b.add_block("ra.back_power", T);
  c.asy = b.add_block("ra.asy_power", T);
  c.prod = b.add_block("ra.nh3_prod", T);
  c.sell = b.add_block("ra.nh3_sell", T);
  c.buf = b.add_block("ra.h2_buf", T);
  c.store = b.add_block("ra.nh3_store", T);
  c.pro = b.add_block("ra.pro", T);
  c.by = b.add_block("ra.by", T);
  c.off = b.add_block("ra.off", T);
  c.su = b.add_block("ra.su", T);
  c.sd = b.add_block("ra.sd", T);

  const double buf0 = p.h2_buf_init * p.h2_buf_cap;
  const double store0 = p.nh3_store_init * p.nh3_store_cap;
  const int prev_off0 = (ctx.ra_initial_state == AsyState::Idle) ? 1 : 0;
  const double ramp_m = p.load_max * p.asy_cap;  // exemption big-M

  for (int t = 0; t < T; ++t) {
    if (with_prices) {
      b.add_lin(c.buy_hp + t, prices->h_hp_ra[t] * dt);
      b.add_lin(c.buy_rg + t, prices->e_rg_ra[t] * dt);
    }
    b.add_lin(c.back + t, ctx.scenario.backup_price[t] * dt);
    b.add_lin(c.sell + t, -ctx.scenario.ammonia_price[t] * dt);
    b.add_lin(c.su + t, p.startup_cost);

    // power balance with standby draw
    b.add_eq({{c.back + t, 1.0}, {c.buy_rg + t, 1.0}, {c.asy + t, -1.0},
              {c.by + t, -p.hsb_power}},
             0.0);
    // synthesis power demand
    b.add_eq({{c.asy + t, 1.0}, {c.prod + t, -p.elec_per_nh3}}, 0.0);
    // hydrogen buffer dynamics
    {
      std::vector<std::pair<int, double>> terms = {
          {c.buf + t, 1.0}, {c.buy_hp + t, -dt}, {c.prod + t, p.h2_per_nh3 * dt}};
      double rhs = (t == 0) ? buf0 : 0.0;
      if (t > 0) terms.push_back({c.buf + t - 1, -1.0});
      b.add_eq(terms, rhs);
    }
    b.add_range(c.buf + t, 0.0, p.h2_buf_cap);
    // ammonia store dynamics
    {
      std::vector<std::pair<int, double>> terms = {
          {c.store + t, 1.0}, {c.prod + t, -dt}, {c.sell + t, dt}};
      double rhs = (t == 0) ? store0 : 0.0;
      if (t > 0) terms.push_back({c.store + t - 1, -1.0});
      b.add_eq(terms, rhs);
    }
    b.add_range(c.store + t, 0.0, p.nh3_store_cap);
    // production window tied to the Production state
    b.add_ineq({{c.prod + t, 1.0}, {c.pro + t, -p.load_max * p.asy_cap}}, 0.0);
    b.add_ineq({{c.prod + t, -1.0}, {c.pro + t, p.load_min * p.asy_cap}}, 0.0);
    // ramp, exempted across steps where the unit is not producing
    if (t > 0) {
      b.add_ineq({{c.prod + t, 1.0}, {c.prod + t - 1, -1.0},
                  {c.pro + t, ramp_m}, {c.pro + t - 1, ramp_m}},
                 p.ramp_limit * p.asy_cap + 2.0 * ramp_m);
      b.add_ineq({{c.prod + t - 1, 1.0}, {c.prod + t, -1.0},
                  {c.pro + t, ramp_m}, {c.pro + t - 1, ramp_m}},
                 p.ramp_limit * p.asy_cap + 2.0 * ramp_m);
    }
    // state partition and transition coverage
    b.add_eq({{c.pro + t, 1.0}, {c.by + t, 1.0}, {c.off + t, 1.0}}, 1.0);
    {
      std::vector<std::pair<int, double>> su_terms = {
          {c.pro + t, 1.0}, {c.by + t, 1.0}, {c.su + t, -1.0}};
      double rhs = 1.0;
      if (t == 0)
        rhs = 1.0 - prev_off0;
      else
        su_terms.push_back({c.off + t - 1, 1.0});
      b.add_ineq(su_terms, rhs);
    }
    {
      std::vector<std::pair<int, double>> sd_terms = {{c.off + t, 1.0},
                                                      {c.sd + t, -1.0}};
      double rhs = 1.0;
      if (t == 0)
        rhs = 1.0 - (1 - prev_off0);
      else {
        sd_terms.push_back({c.pro + t - 1, 1.0});
        sd_terms.push_back({c.by + t - 1, 1.0});
      }
      b.add_ineq(sd_terms, rhs);
    }
    // minimum downtime, window truncated at the horizon
    {
      const int W = std::min(p.min_downtime, T - t);
      // W*(off[t] - off[t-1]) - sum_{tau=t..t+W-1} off[tau] <= 0
      std::vector<std::pair<int, double>> dt_terms = {
          {c.off + t, static_cast<double>(W) - 1.0}};
      double rhs = 0.0;
      if (t == 0)
        rhs = static_cast<double>(W) * prev_off0;
      else
        dt_terms.push_back({c.off + t - 1, -static_cast<double>(W)});
      for (int tau = t + 1; tau < t + W; ++tau)
        dt_terms.push_back({c.off + tau, -1.0});
      b.add_ineq(dt_terms, rhs);
    }
    b.add_range(c.su + t, 0.0, 1.0);
    b.add_range(c.sd + t, 0.0, 1.0);
    b.add_lower_bound(c.buy_hp + t, 0.0);
    b.add_lower_bound(c.buy_rg + t, 0.0);
    b.add_lower_bound(c.back + t, 0.0);
    b.add_lower_bound(c.sell + t, 0.0);

    if (!p.hsb_enabled) {
      b.fix(c.pro + t, 1.0);
      b.fix(c.by + t, 0.0);
      b.fix(c.off + t, 0.0);
    }
  }
  b.fix(c.buf + T - 1, buf0);
  b.fix(c.store + T - 1, store0);
  return c;
}

}  // namespace detail

inline RaProblem build_ra_subproblem(const GameContext& ctx,
                                     const PriceVector& prices,
                                     const DecisionProfile& others) {
  const int T = ctx.grid.T;
  detail::check_len(others.rg.sell_ra, T, "ra others rg.sell_ra");
  detail::check_len(others.hp.sell_ra, T, "ra others hp.sell_ra");
  const auto& w = ctx.market_weights;

  QpBuilder b;
  auto c = detail::add_ra_body(b, ctx, true, &prices);
  detail::add_penalty_term(b, c.buy_rg, others.rg.sell_ra, ctx.rho * w[1], T);
  detail::add_penalty_term(b, c.buy_hp, others.hp.sell_ra, ctx.rho * w[2], T);
  detail::add_penalty_const(b, others.rg.sell_hp, others.hp.buy_rg,
                            ctx.rho * w[0], T);

  RaProblem out;
  out.miqp.base = b.build();
  for (int t = 0; t < T; ++t) {
    out.miqp.binary_idx.push_back(c.pro + t);
    out.miqp.binary_idx.push_back(c.by + t);
    out.miqp.binary_idx.push_back(c.off + t);
    out.cols.pro.push_back(c.pro + t);
    out.cols.by.push_back(c.by + t);
    out.cols.off.push_back(c.off + t);
    out.cols.su.push_back(c.su + t);
    out.cols.sd.push_back(c.sd + t);
  }
  out.cols.initial_state = ctx.ra_initial_state;
  out.cols.hsb_enabled = ctx.ra.hsb_enabled;
  return out;
}

// ---------------------------------------------------------------------------
// Cooperative benchmark: one joint problem, clearing as hard equalities,
// internal transfer prices eliminated. Column layout: RG block | HP block |
// RA block at offsets 0, 6T, 14T.
// ---------------------------------------------------------------------------

inline RaProblem build_cooperative_problem(const GameContext& ctx) {
  const int T = ctx.grid.T;
  const double dt = ctx.grid.dt;

  QpBuilder b;
  // RG block (objective: degradation only; revenue is internal)
  int rg_sell_hp = b.add_block("rg.sell_hp", T);
  int rg_sell_ra = b.add_block("rg.sell_ra", T);
  int rg_ch = b.add_block("rg.bes_charge", T);
  int rg_dis = b.add_block("rg.bes_discharge", T);
  int rg_soc = b.add_block("rg.bes_soc", T);
  int rg_curt = b.add_block("rg.curtail", T);
  for (int t = 0; t < T; ++t) {
    b.add_lin(rg_dis + t, ctx.rg.deg_cost * dt);
    b.add_eq({{rg_sell_hp + t, 1.0}, {rg_sell_ra + t, 1.0}, {rg_ch + t, 1.0},
              {rg_curt + t, 1.0}, {rg_dis + t, -1.0}},
             ctx.scenario.wind_avail[t] + ctx.scenario.solar_avail[t]);
    b.add_lower_bound(rg_sell_hp + t, 0.0);
    b.add_lower_bound(rg_sell_ra + t, 0.0);
    b.add_lower_bound(rg_curt + t, 0.0);
  }
  detail::add_bes(b, rg_ch, rg_dis, rg_soc, T, dt, ctx.rg.bes_energy_cap,
                  ctx.rg.bes_power_cap, ctx.rg.bes_eff_charge,
                  ctx.rg.bes_eff_discharge, ctx.rg.bes_soc_init);

  // HP block
  const auto& hp = ctx.hp;
  int hp_buy_rg = b.add_block("hp.buy_rg", T);
  int hp_elz = b.add_block("hp.elz_power", T);
  int hp_h2p = b.add_block("hp.h2_prod", T);
  int hp_h2s = b.add_block("hp.h2_store", T);
  int hp_sell_ra = b.add_block("hp.sell_ra", T);
  int hp_ch = b.add_block("hp.bes_charge", T);
  int hp_dis = b.add_block("hp.bes_discharge", T);
  int hp_soc = b.add_block("hp.bes_soc", T);
  const double h2s0 = hp.h2_store_init * hp.h2_store_cap;
  for (int t = 0; t < T; ++t) {
    b.add_lin(hp_dis + t, hp.deg_cost * dt);
    b.add_eq({{hp_buy_rg + t, 1.0}, {hp_dis + t, 1.0}, {hp_elz + t, -1.0},
              {hp_ch + t, -1.0}},
             0.0);
    b.add_eq({{hp_elz + t, 1.0}, {hp_h2p + t, -hp.elz_spec_consumption}}, 0.0);
    b.add_range(hp_elz + t, hp.elz_min_load * hp.elz_power_cap,
                hp.elz_power_cap);
    {
      std::vector<std::pair<int, double>> terms = {
          {hp_h2s + t, 1.0}, {hp_h2p + t, -dt}, {hp_sell_ra + t, dt}};
      double rhs = (t == 0) ? h2s0 : 0.0;
      if (t > 0) terms.push_back({hp_h2s + t - 1, -1.0});
      b.add_eq(terms, rhs);
    }
    b.add_range(hp_h2s + t, 0.0, hp.h2_store_cap);
    b.add_range(hp_sell_ra + t, 0.0, hp.h2_delivery_cap);
    b.add_lower_bound(hp_buy_rg + t, 0.0);
  }
  b.fix(hp_h2s + T - 1, h2s0);
  detail::add_bes(b, hp_ch, hp_dis, hp_soc, T, dt, hp.bes_energy_cap,
                  hp.bes_power_cap, hp.bes_eff_charge, hp.bes_eff_discharge,
                  hp.bes_soc_init);

  // RA block (backup power, startup cost, ammonia revenue stay external)
  auto c = detail::add_ra_body(b, ctx, false, nullptr);

  // market clearing as hard equalities
  for (int t = 0; t < T; ++t) {
    b.add_eq({{rg_sell_hp + t, 1.0}, {hp_buy_rg + t, -1.0}}, 0.0);
    b.add_eq({{rg_sell_ra + t, 1.0}, {c.buy_rg + t, -1.0}}, 0.0);
    b.add_eq({{hp_sell_ra + t, 1.0}, {c.buy_hp + t, -1.0}}, 0.0);
  }

  RaProblem out;
  out.miqp.base = b.build();
  for (int t = 0; t < T; ++t) {
    out.miqp.binary_idx.push_back(c.pro + t);
    out.miqp.binary_idx.push_back(c.by + t);
    out.miqp.binary_idx.push_back(c.off + t);
    out.cols.pro.push_back(c.pro + t);
    out.cols.by.push_back(c.by + t);
    out.cols.off.push_back(c.off + t);
    out.cols.su.push_back(c.su + t);
    out.cols.sd.push_back(c.sd + t);
  }
  out.cols.initial_state = ctx.ra_initial_state;
  out.cols.hsb_enabled = ctx.ra.hsb_enabled;
  return out;
}

// ---------------------------------------------------------------------------
// Packing between DecisionProfile fields and solver vectors.
// ---------------------------------------------------------------------------

inline Series pack_rg(const RgDecisions& d) {
  const int T = static_cast<int>(d.sell_hp.size());
  Series x(6 * T);
  x << d.sell_hp, d.sell_ra, d.bes_charge, d.bes_discharge, d.bes_soc,
      d.curtail;
  return x;
}

inline RgDecisions unpack_rg(const Series& x, int T) {
  return {x.segment(0, T),     x.segment(T, T),     x.segment(2 * T, T),
          x.segment(3 * T, T), x.segment(4 * T, T), x.segment(5 * T, T)};
}

inline Series pack_hp(const HpDecisions& d) {
  const int T = static_cast<int>(d.buy_rg.size());
  Series x(8 * T);
  x << d.buy_rg, d.elz_power, d.h2_prod, d.h2_store, d.sell_ra, d.bes_charge,
      d.bes_discharge, d.bes_soc;
  return x;
}

inline HpDecisions unpack_hp(const Series& x, int T) {
  return {x.segment(0, T),     x.segment(T, T),     x.segment(2 * T, T),
          x.segment(3 * T, T), x.segment(4 * T, T), x.segment(5 * T, T),
          x.segment(6 * T, T), x.segment(7 * T, T)};
}

inline Series pack_ra(const RaDecisions& d) {
  const int T = static_cast<int>(d.buy_hp.size());
  Series x(13 * T);
  x.segment(0, T) = d.buy_hp;
  x.segment(T, T) = d.buy_rg;
  x.segment(2 * T, T) = d.back_power;
  x.segment(3 * T, T) = d.asy_power;
  x.segment(4 * T, T) = d.nh3_prod;
  x.segment(5 * T, T) = d.nh3_sell;
  x.segment(6 * T, T) = d.h2_buf;
  x.segment(7 * T, T) = d.nh3_store;
  for (int t = 0; t < T; ++t) {
    x[8 * T + t] = d.schedule.pro[t];
    x[9 * T + t] = d.schedule.by[t];
    x[10 * T + t] = d.schedule.off[t];
    x[11 * T + t] = d.schedule.su[t];
    x[12 * T + t] = d.schedule.sd[t];
  }
  return x;
}

inline RaDecisions unpack_ra(const Series& x, int T, AsyState initial_state) {
  RaDecisions d;
  d.buy_hp = x.segment(0, T);
  d.buy_rg = x.segment(T, T);
  d.back_power = x.segment(2 * T, T);
  d.asy_power = x.segment(3 * T, T);
  d.nh3_prod = x.segment(4 * T, T);
  d.nh3_sell = x.segment(5 * T, T);
  d.h2_buf = x.segment(6 * T, T);
  d.nh3_store = x.segment(7 * T, T);
  AsySchedule& s = d.schedule;
  s.pro.resize(T);
  s.by.resize(T);
  s.off.resize(T);
  s.su.resize(T);
  s.sd.resize(T);
  s.initial_state = initial_state;
  for (int t = 0; t < T; ++t) {
    s.pro[t] = static_cast<int>(std::lround(x[8 * T + t]));
    s.by[t] = static_cast<int>(std::lround(x[9 * T + t]));
    s.off[t] = static_cast<int>(std::lround(x[10 * T + t]));
    s.su[t] = static_cast<int>(std::lround(x[11 * T + t]));
    s.sd[t] = static_cast<int>(std::lround(x[12 * T + t]));
  }
  return d;
}

/// Unpack a cooperative solution (layout rg | hp | ra) into a profile.
inline DecisionProfile unpack_cooperative(const Series& x, int T,
                                          AsyState initial_state) {
  DecisionProfile out;
  out.rg = unpack_rg(x.segment(0, 6 * T), T);
  out.hp = unpack_hp(x.segment(6 * T, 8 * T), T);
  out.ra = unpack_ra(x.segment(14 * T, 13 * T), T, initial_state);
  return out;
}

// ---------------------------------------------------------------------------
// Cost, penalized cost and potential.
// ---------------------------------------------------------------------------

inline double evaluate_cost(const GameContext& ctx, Stakeholder k,
                            const DecisionProfile& x,
                            const PriceVector& prices) {
  const int T = ctx.grid.T;
  const double dt = ctx.grid.dt;
  double cost = 0.0;
  switch (k) {
    case Stakeholder::Rg:
      for (int t = 0; t < T; ++t)
        cost += (-x.rg.sell_hp[t] * prices.e_rg_hp[t] -
                 x.rg.sell_ra[t] * prices.e_rg_ra[t] +
                 ctx.rg.deg_cost * x.rg.bes_discharge[t]) *
                dt;
      break;
    case Stakeholder::Hp:
      for (int t = 0; t < T; ++t)
        cost += (x.hp.buy_rg[t] * prices.e_rg_hp[t] +
                 ctx.hp.deg_cost * x.hp.bes_discharge[t] -
                 x.hp.sell_ra[t] * prices.h_hp_ra[t]) *
                dt;
      break;
    case Stakeholder::Ra:
      for (int t = 0; t < T; ++t)
        cost += (x.ra.buy_hp[t] * prices.h_hp_ra[t] +
                 x.ra.buy_rg[t] * prices.e_rg_ra[t] +
                 x.ra.back_power[t] * ctx.scenario.backup_price[t] -
                 x.ra.nh3_sell[t] * ctx.scenario.ammonia_price[t]) *
                    dt +
                ctx.ra.startup_cost * x.ra.schedule.su[t];
      break;
  }
  return cost;
}

/// Shared quadratic clearing penalty (rho/2)*||phi||_W^2.
inline double clearing_penalty(const GameContext& ctx,
                               const DecisionProfile& x) {
  Series phi = clearing_residual(x);
  double nrm = residual_norm(phi, ctx.market_weights);
  return 0.5 * ctx.rho * nrm * nrm;
}

inline double evaluate_penalized_cost(const GameContext& ctx, Stakeholder k,
                                      const DecisionProfile& x,
                                      const PriceVector& prices) {
  return evaluate_cost(ctx, k, x, prices) + clearing_penalty(ctx, x);
}

inline double evaluate_potential(const GameContext& ctx,
                                 const DecisionProfile& x,
                                 const PriceVector& prices) {
  return evaluate_cost(ctx, Stakeholder::Rg, x, prices) +
         evaluate_cost(ctx, Stakeholder::Hp, x, prices) +
         evaluate_cost(ctx, Stakeholder::Ra, x, prices) +
         clearing_penalty(ctx, x);
}

}  // namespace rep2a
