#pragma once

#include "rep2a/core.hpp"
#include "rep2a/schedule.hpp"

namespace rep2a {

struct RgDecisions {
  Series sell_hp, sell_ra;                    // MW
  Series bes_charge, bes_discharge, bes_soc;  // MW, MW, MWh
  Series curtail;                             // MW
};

struct HpDecisions {
  Series buy_rg;                              // MW
  Series elz_power;                           // MW
  Series h2_prod;                             // Nm3/h
  Series h2_store;                            // Nm3
  Series sell_ra;                             // Nm3/h
  Series bes_charge, bes_discharge, bes_soc;
};

struct RaDecisions {
  Series buy_hp;      // Nm3/h
  Series buy_rg;      // MW
  Series back_power;  // MW
  Series asy_power;   // MW
  Series nh3_prod;    // t/h
  Series nh3_sell;    // t/h
  Series h2_buf;      // Nm3
  Series nh3_store;   // t
  AsySchedule schedule;
};

struct DecisionProfile {
  RgDecisions rg;
  HpDecisions hp;
  RaDecisions ra;

  static DecisionProfile zeros(const TimeGrid& grid,
                               AsyState ra_initial = AsyState::Production) {
    const int T = grid.T;
    auto z = [T] { return Series::Zero(T); };
    DecisionProfile x;
    x.rg = {z(), z(), z(), z(), z(), z()};
    x.hp = {z(), z(), z(), z(), z(), z(), z(), z()};
    x.ra = {z(), z(), z(), z(), z(), z(), z(), z(),
            schedule_from_states(
                std::vector<AsyState>(T, AsyState::Production), ra_initial)};
    return x;
  }
};

/// Market-clearing residual, stacked time-major: for each step t the triple
/// (rg.sell_hp - hp.buy_rg, rg.sell_ra - ra.buy_rg, hp.sell_ra - ra.buy_hp)
/// occupies entries 3t..3t+2. Zero iff all three markets clear.
inline Series clearing_residual(const DecisionProfile& x) {
  const int T = static_cast<int>(x.rg.sell_hp.size());
  Series phi(3 * T);
  for (int t = 0; t < T; ++t) {
    phi[3 * t + 0] = x.rg.sell_hp[t] - x.hp.buy_rg[t];
    phi[3 * t + 1] = x.rg.sell_ra[t] - x.ra.buy_rg[t];
    phi[3 * t + 2] = x.hp.sell_ra[t] - x.ra.buy_hp[t];
  }
  return phi;
}

/// Weighted residual norm ||phi||_W with one weight per market; this is the
/// norm the penalty, the stop test, and the traces all use (weights default
/// to 1, reducing to the plain 2-norm).
inline double residual_norm(const Series& phi, const Eigen::Vector3d& w) {
  double acc = 0.0;
  const int T = static_cast<int>(phi.size()) / 3;
  for (int t = 0; t < T; ++t)
    for (int m = 0; m < 3; ++m)
      acc += w[m] * phi[3 * t + m] * phi[3 * t + m];
  return std::sqrt(acc);
}

}  // namespace rep2a
