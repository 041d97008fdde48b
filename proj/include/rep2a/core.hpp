#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace rep2a {

using Series = Eigen::VectorXd;

/// Discrete operational horizon: T steps of dt hours each.
struct TimeGrid {
  int T = 0;
  double dt = 1.0;

  double horizon() const { return T * dt; }

  void validate() const {
    if (T < 1) throw std::invalid_argument("TimeGrid: T must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be > 0");
  }
};

/// Exogenous time series driving one study: renewable availability and
/// the two externally set prices (ammonia sales, backup power).
struct ScenarioData {
  Series wind_avail;     // MW
  Series solar_avail;    // MW
  Series ammonia_price;  // CNY/t
  Series backup_price;   // CNY/MWh

  void validate(const TimeGrid& grid) const {
    auto check = [&](const Series& s, const char* name) {
      if (s.size() != grid.T)
        throw std::invalid_argument(std::string("ScenarioData: ") + name +
                                    " length != T");
      if ((s.array() < 0.0).any())
        throw std::invalid_argument(std::string("ScenarioData: ") + name +
                                    " has negative entries");
    };
    check(wind_avail, "wind_avail");
    check(solar_avail, "solar_avail");
    check(ammonia_price, "ammonia_price");
    check(backup_price, "backup_price");
  }
};

/// Renewable generator: wind/solar park with a battery.
struct RgParams {
  double rated_wind = 0.0;        // MW
  double rated_solar = 0.0;       // MW
  double bes_energy_cap = 0.0;    // MWh
  double bes_power_cap = 0.0;     // MW
  double bes_eff_charge = 1.0;    // (0,1]
  double bes_eff_discharge = 1.0; // (0,1]
  double bes_soc_init = 0.5;      // fraction of energy cap
  double deg_cost = 0.0;          // CNY/MWh on discharge
};

/// Hydrogen producer: electrolyzer + hydrogen store + battery.
struct HpParams {
  double elz_power_cap = 0.0;       // MW
  double elz_min_load = 0.0;        // fraction, [0,1)
  double elz_spec_consumption = 0.005; // MWh per Nm3 H2
  double h2_store_cap = 0.0;        // Nm3
  double h2_store_init = 0.5;       // fraction
  double h2_delivery_cap = 0.0;     // Nm3/h
  double bes_energy_cap = 0.0;
  double bes_power_cap = 0.0;
  double bes_eff_charge = 1.0;
  double bes_eff_discharge = 1.0;
  double bes_soc_init = 0.5;
  double deg_cost = 0.0;
};

/// Ammonia plant: synthesis unit with Production/HSB/Idle states,
/// hydrogen buffer and ammonia store.
struct RaParams {
  double asy_cap = 0.0;       // t NH3/h at rated load
  double load_min = 0.30;     // fraction of asy_cap
  double load_max = 1.0;
  double ramp_limit = 0.2;    // fraction of asy_cap per step
  double hsb_power = 0.0;     // MW drawn while in hot standby
  double startup_cost = 0.0;  // CNY per startup
  int min_downtime = 1;       // steps an Idle spell must last
  double h2_per_nh3 = 1970.0; // Nm3 H2 per t NH3
  double elec_per_nh3 = 0.6;  // MWh per t NH3
  double h2_buf_cap = 0.0;    // Nm3
  double h2_buf_init = 0.5;   // fraction
  double nh3_store_cap = 0.0; // t
  double nh3_store_init = 0.5;
  bool hsb_enabled = true;    // false => plant must run continuously
};

/// Market prices: two electricity links and the hydrogen link.
struct PriceVector {
  Series e_rg_hp; // CNY/MWh
  Series e_rg_ra; // CNY/MWh
  Series h_hp_ra; // CNY/Nm3

  static PriceVector zeros(int T) {
    return {Series::Zero(T), Series::Zero(T), Series::Zero(T)};
  }
};

enum class Stakeholder { Rg, Hp, Ra };

inline const char* to_string(Stakeholder k) {
  switch (k) {
    case Stakeholder::Rg: return "rg";
    case Stakeholder::Hp: return "hp";
    case Stakeholder::Ra: return "ra";
  }
  return "?";
}

}  // namespace rep2a
