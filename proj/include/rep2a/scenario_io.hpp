#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rep2a/core.hpp"
#include "rep2a/equilibrium.hpp"

namespace rep2a {

/// File-format or file-system problem while reading inputs; the CLI maps
/// this to its parse-error exit code.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s, int row,
                           const std::string& column) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw IoError("scenario row " + std::to_string(row) + ", column '" +
                  column + "': cannot parse value '" + s + "'");
  }
}

}  // namespace detail

/// Parses the scenario CSV (header t,wind_mw,solar_mw,
/// ammonia_price_cny_per_t,backup_price_cny_per_mwh) from a stream.
/// Row/column positions appear in every error message.
inline ScenarioData parse_scenario(std::istream& in, const TimeGrid& grid) {
  static const std::vector<std::string> kHeader = {
      "t", "wind_mw", "solar_mw", "ammonia_price_cny_per_t",
      "backup_price_cny_per_mwh"};

  std::string line;
  if (!std::getline(in, line)) throw IoError("scenario: empty file");
  auto header = detail::split_csv_line(line);
  if (header != kHeader) {
    std::string want;
    for (size_t i = 0; i < kHeader.size(); ++i)
      want += (i ? "," : "") + kHeader[i];
    throw IoError("scenario: header must be exactly '" + want + "', got '" +
                  line + "'");
  }

  ScenarioData sc;
  sc.wind_avail.resize(grid.T);
  sc.solar_avail.resize(grid.T);
  sc.ammonia_price.resize(grid.T);
  sc.backup_price.resize(grid.T);

  int row = 0;  // data row index, 0-based like the t column
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != kHeader.size())
      throw IoError("scenario row " + std::to_string(row) + ": expected " +
                    std::to_string(kHeader.size()) + " columns, got " +
                    std::to_string(cells.size()));
    if (row >= grid.T)
      throw IoError("scenario: more than T=" + std::to_string(grid.T) +
                    " data rows");
    const double t = detail::parse_number(cells[0], row, kHeader[0]);
    if (t != row)
      throw IoError("scenario row " + std::to_string(row) +
                    ": t column must equal the row index, got " + cells[0]);
    const double vals[4] = {
        detail::parse_number(cells[1], row, kHeader[1]),
        detail::parse_number(cells[2], row, kHeader[2]),
        detail::parse_number(cells[3], row, kHeader[3]),
        detail::parse_number(cells[4], row, kHeader[4])};
    for (int c = 0; c < 4; ++c)
      if (vals[c] < 0.0)
        throw IoError("scenario row " + std::to_string(row) + ", column '" +
                      kHeader[c + 1] + "': negative value " + cells[c + 1]);
    sc.wind_avail[row] = vals[0];
    sc.solar_avail[row] = vals[1];
    sc.ammonia_price[row] = vals[2];
    sc.backup_price[row] = vals[3];
    ++row;
  }
  if (row != grid.T)
    throw IoError("scenario: expected " + std::to_string(grid.T) +
                  " data rows, got " + std::to_string(row));
  sc.validate(grid);
  return sc;
}

inline ScenarioData load_scenario(const std::filesystem::path& path,
                                  const TimeGrid& grid) {
  std::ifstream in(path);
  if (!in) throw IoError("scenario: cannot open '" + path.string() + "'");
  return parse_scenario(in, grid);
}

/// Counts the data rows of a scenario CSV so the grid can be sized from
/// the file itself (the CLI does this before load_scenario).
inline int scenario_row_count(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("scenario: cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("scenario: empty file");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty() && line != "\r") ++rows;
  return rows;
}

/// Everything a study needs besides the scenario: the step length, the
/// three stakeholders' parameters, and the solver knobs.
struct StudyConfig {
  double dt = 1.0;
  RgParams rg;
  HpParams hp;
  RaParams ra;
  SolverConfig solver;
};

namespace detail {

/// Strict section reader: every key present must be known (catches typos),
/// absent keys keep the struct defaults.
class SectionReader {
 public:
  SectionReader(const nlohmann::json& j, std::string name)
      : j_(j), name_(std::move(name)) {
    if (!j_.is_object())
      throw IoError("config: section '" + name_ + "' must be an object");
  }

  void number(const char* key, double& out) {
    take(key, [&](const nlohmann::json& v) {
      if (!v.is_number())
        throw IoError("config: " + name_ + "." + key + " must be a number");
      out = v.get<double>();
    });
  }
  void integer(const char* key, int& out) {
    take(key, [&](const nlohmann::json& v) {
      if (!v.is_number_integer())
        throw IoError("config: " + name_ + "." + key + " must be an integer");
      out = v.get<int>();
    });
  }
  void boolean(const char* key, bool& out) {
    take(key, [&](const nlohmann::json& v) {
      if (!v.is_boolean())
        throw IoError("config: " + name_ + "." + key + " must be a boolean");
      out = v.get<bool>();
    });
  }
  void vector3(const char* key, Eigen::Vector3d& out) {
    take(key, [&](const nlohmann::json& v) {
      if (!v.is_array() || v.size() != 3)
        throw IoError("config: " + name_ + "." + key +
                      " must be an array of 3 numbers");
      for (int i = 0; i < 3; ++i) out[i] = v[i].get<double>();
    });
  }

  /// Call after reading all known keys.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw IoError("config: unknown key '" + name_ + "." + it.key() + "'");
  }

 private:
  template <class F>
  void take(const char* key, F&& f) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it != j_.end()) f(*it);
  }

  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline StudyConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw IoError("config: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "dt" && k != "rg" && k != "hp" && k != "ra" && k != "solver")
      throw IoError("config: unknown top-level key '" + k + "'");
  }

  StudyConfig cfg;
  if (j.contains("dt")) cfg.dt = j.at("dt").get<double>();
  if (!(cfg.dt > 0.0)) throw IoError("config: dt must be > 0");

  if (j.contains("rg")) {
    detail::SectionReader r(j.at("rg"), "rg");
    r.number("rated_wind", cfg.rg.rated_wind);
    r.number("rated_solar", cfg.rg.rated_solar);
    r.number("bes_energy_cap", cfg.rg.bes_energy_cap);
    r.number("bes_power_cap", cfg.rg.bes_power_cap);
    r.number("bes_eff_charge", cfg.rg.bes_eff_charge);
    r.number("bes_eff_discharge", cfg.rg.bes_eff_discharge);
    r.number("bes_soc_init", cfg.rg.bes_soc_init);
    r.number("deg_cost", cfg.rg.deg_cost);
    r.finish();
  }
  if (j.contains("hp")) {
    detail::SectionReader r(j.at("hp"), "hp");
    r.number("elz_power_cap", cfg.hp.elz_power_cap);
    r.number("elz_min_load", cfg.hp.elz_min_load);
    r.number("elz_spec_consumption", cfg.hp.elz_spec_consumption);
    r.number("h2_store_cap", cfg.hp.h2_store_cap);
    r.number("h2_store_init", cfg.hp.h2_store_init);
    r.number("h2_delivery_cap", cfg.hp.h2_delivery_cap);
    r.number("bes_energy_cap", cfg.hp.bes_energy_cap);
    r.number("bes_power_cap", cfg.hp.bes_power_cap);
    r.number("bes_eff_charge", cfg.hp.bes_eff_charge);
    r.number("bes_eff_discharge", cfg.hp.bes_eff_discharge);
    r.number("bes_soc_init", cfg.hp.bes_soc_init);
    r.number("deg_cost", cfg.hp.deg_cost);
    r.finish();
  }
  if (j.contains("ra")) {
    detail::SectionReader r(j.at("ra"), "ra");
    r.number("asy_cap", cfg.ra.asy_cap);
    r.number("load_min", cfg.ra.load_min);
    r.number("load_max", cfg.ra.load_max);
    r.number("ramp_limit", cfg.ra.ramp_limit);
    r.number("hsb_power", cfg.ra.hsb_power);
    r.number("startup_cost", cfg.ra.startup_cost);
    r.integer("min_downtime", cfg.ra.min_downtime);
    r.number("h2_per_nh3", cfg.ra.h2_per_nh3);
    r.number("elec_per_nh3", cfg.ra.elec_per_nh3);
    r.number("h2_buf_cap", cfg.ra.h2_buf_cap);
    r.number("h2_buf_init", cfg.ra.h2_buf_init);
    r.number("nh3_store_cap", cfg.ra.nh3_store_cap);
    r.number("nh3_store_init", cfg.ra.nh3_store_init);
    r.boolean("hsb_enabled", cfg.ra.hsb_enabled);
    r.finish();
  }
  if (j.contains("solver")) {
    detail::SectionReader r(j.at("solver"), "solver");
    r.number("rho", cfg.solver.rho);
    r.vector3("market_weights", cfg.solver.market_weights);
    r.integer("max_iters", cfg.solver.max_iters);
    r.number("g1", cfg.solver.g1);
    r.number("g2", cfg.solver.g2);
    r.number("eps_bar", cfg.solver.eps_bar);
    r.number("eps_floor", cfg.solver.eps_floor);
    r.number("init_elec_price", cfg.solver.init_elec_price);
    r.number("qp_tol", cfg.solver.qp.tol);
    r.integer("bnb_max_nodes", cfg.solver.bnb_budget.max_nodes);
    r.number("bnb_time_limit", cfg.solver.bnb_budget.time_limit);
    r.number("bnb_gap_tol", cfg.solver.bnb_budget.gap_tol);
    r.boolean("exact_ra_br", cfg.solver.exact_ra_br);
    r.finish();
  }
  return cfg;
}

inline StudyConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

}  // namespace rep2a
