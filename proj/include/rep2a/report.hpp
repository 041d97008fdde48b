#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rep2a/equilibrium.hpp"
#include "rep2a/scenario_io.hpp"

namespace rep2a {

inline constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Study manifest.
// ---------------------------------------------------------------------------

/// M1: noncooperative, ammonia plant without hot standby. M2: with hot
/// standby. M3: cooperative benchmark (one joint problem, internal
/// transfers eliminated).
enum class StudyMode { M1, M2, M3 };

inline std::string to_string(StudyMode m) {
  switch (m) {
    case StudyMode::M1: return "M1";
    case StudyMode::M2: return "M2";
    case StudyMode::M3: return "M3";
  }
  return "?";
}

inline StudyMode parse_mode(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(c));
  if (s == "M1") return StudyMode::M1;
  if (s == "M2") return StudyMode::M2;
  if (s == "M3") return StudyMode::M3;
  throw IoError("mode must be m1, m2 or m3, got '" + s + "'");
}

struct RunManifest {
  StudyMode mode = StudyMode::M2;
  std::string scenario_path;
  std::string config_path;
  std::string out_dir;
  long seed = 0;  // echoed for reproducibility bookkeeping
  std::string tool_version = kToolVersion;
};

// ---------------------------------------------------------------------------
// Report arithmetic.
// ---------------------------------------------------------------------------

/// Total revenue as the exact sum of the per-player values; any rounding
/// happens at display time only.
inline double aggregate_revenues(const Eigen::Vector3d& per_player) {
  return per_player[0] + per_player[1] + per_player[2];
}

/// Percent gain of `now` over `base`; undefined (n/a) when base <= 0
/// because the sign of a loss makes the percentage meaningless.
inline std::optional<double> profit_gain(double base, double now) {
  if (!(base > 0.0)) return std::nullopt;
  return 100.0 * (now - base) / base;
}

/// Volume-weighted mean price over steps with positive traded volume;
/// plain mean when nothing trades.
inline double average_price(const Series& price, const Series& volume) {
  if (price.size() != volume.size())
    throw std::invalid_argument("average_price: length mismatch");
  if (price.size() == 0) return 0.0;
  double num = 0.0, den = 0.0;
  for (int t = 0; t < price.size(); ++t)
    if (volume[t] > 0.0) {
      num += price[t] * volume[t];
      den += volume[t];
    }
  if (den > 0.0) return num / den;
  return price.mean();
}

// ---------------------------------------------------------------------------
// Number formatting: full precision in CSVs (so files round-trip exactly
// and identical runs are byte-identical), two decimals in reports.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_full(double v) {
  // shortest decimal form that parses back to exactly the same double
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string fmt2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convergence trace (plot-ready: potential and clearing-residual panels).
// ---------------------------------------------------------------------------

inline void emit_convergence_trace(const EquilibriumResult& res,
                                   std::ostream& out) {
  out << "iteration,phi,delta_phi,residual_norm\n";
  for (size_t i = 0; i < res.phi_trace.size(); ++i) {
    // The start profile is an arbitrary baseline, so the first row's
    // delta is reported as 0 rather than phi - Phi(start).
    const double dphi = i == 0 ? 0.0 : res.phi_trace[i] - res.phi_trace[i - 1];
    out << (i + 1) << ',' << detail::fmt_full(res.phi_trace[i]) << ','
        << detail::fmt_full(dphi) << ','
        << detail::fmt_full(res.residual_trace[i]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Dispatch / price CSV layout (shared by the writer, the reloader used by
// `gap`, and the tests).
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<std::string>& equilibrium_columns() {
  static const std::vector<std::string> cols = {
      "t",
      "rg_sell_hp_mw", "rg_sell_ra_mw", "rg_bes_charge_mw",
      "rg_bes_discharge_mw", "rg_bes_soc_mwh", "rg_curtail_mw",
      "hp_buy_rg_mw", "hp_elz_power_mw", "hp_h2_prod_nm3h", "hp_h2_store_nm3",
      "hp_sell_ra_nm3h", "hp_bes_charge_mw", "hp_bes_discharge_mw",
      "hp_bes_soc_mwh",
      "ra_buy_hp_nm3h", "ra_buy_rg_mw", "ra_back_power_mw", "ra_asy_power_mw",
      "ra_nh3_prod_tph", "ra_nh3_sell_tph", "ra_h2_buf_nm3", "ra_nh3_store_t",
      "ra_pro", "ra_by", "ra_off", "ra_su", "ra_sd"};
  return cols;
}

inline std::vector<double> equilibrium_row(const DecisionProfile& x, int t) {
  return {static_cast<double>(t),
          x.rg.sell_hp[t], x.rg.sell_ra[t], x.rg.bes_charge[t],
          x.rg.bes_discharge[t], x.rg.bes_soc[t], x.rg.curtail[t],
          x.hp.buy_rg[t], x.hp.elz_power[t], x.hp.h2_prod[t], x.hp.h2_store[t],
          x.hp.sell_ra[t], x.hp.bes_charge[t], x.hp.bes_discharge[t],
          x.hp.bes_soc[t],
          x.ra.buy_hp[t], x.ra.buy_rg[t], x.ra.back_power[t],
          x.ra.asy_power[t], x.ra.nh3_prod[t], x.ra.nh3_sell[t],
          x.ra.h2_buf[t], x.ra.nh3_store[t],
          static_cast<double>(x.ra.schedule.pro[t]),
          static_cast<double>(x.ra.schedule.by[t]),
          static_cast<double>(x.ra.schedule.off[t]),
          static_cast<double>(x.ra.schedule.su[t]),
          static_cast<double>(x.ra.schedule.sd[t])};
}

}  // namespace detail

inline void emit_equilibrium_csv(const DecisionProfile& x, int T,
                                 std::ostream& out) {
  const auto& cols = detail::equilibrium_columns();
  for (size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  for (int t = 0; t < T; ++t) {
    auto row = detail::equilibrium_row(x, t);
    for (size_t c = 0; c < row.size(); ++c)
      out << (c ? "," : "") << detail::fmt_full(row[c]);
    out << '\n';
  }
}

inline void emit_prices_csv(const PriceVector& p, std::ostream& out) {
  out << "t,e_rg_hp_cny_per_mwh,e_rg_ra_cny_per_mwh,h_hp_ra_cny_per_nm3\n";
  for (int t = 0; t < p.e_rg_hp.size(); ++t)
    out << t << ',' << detail::fmt_full(p.e_rg_hp[t]) << ','
        << detail::fmt_full(p.e_rg_ra[t]) << ','
        << detail::fmt_full(p.h_hp_ra[t]) << '\n';
}

/// Generic numeric-CSV reader: header line, then rows of doubles.
inline std::vector<std::vector<double>> read_numeric_csv(
    const std::filesystem::path& path, std::vector<std::string>* header_out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line))
    throw IoError("'" + path.string() + "': empty file");
  if (header_out) *header_out = detail::split_csv_line(line);
  std::vector<std::vector<double>> rows;
  int rowno = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_csv_line(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        row.push_back(0.0);
        continue;
      }
      try {
        row.push_back(std::stod(cells[c]));
      } catch (const std::exception&) {
        throw IoError("'" + path.string() + "' row " + std::to_string(rowno) +
                      ": cannot parse '" + cells[c] + "'");
      }
    }
    rows.push_back(std::move(row));
    ++rowno;
  }
  return rows;
}

/// Rebuilds a DecisionProfile from an emitted equilibrium.csv.
inline DecisionProfile load_equilibrium_csv(const std::filesystem::path& path,
                                            AsyState initial_state) {
  std::vector<std::string> header;
  auto rows = read_numeric_csv(path, &header);
  if (header != detail::equilibrium_columns())
    throw IoError("'" + path.string() + "': unexpected column layout");
  const int T = static_cast<int>(rows.size());
  TimeGrid grid{T, 1.0};
  DecisionProfile x = DecisionProfile::zeros(grid, initial_state);
  for (int t = 0; t < T; ++t) {
    const auto& r = rows[t];
    if (static_cast<int>(r.size()) != static_cast<int>(header.size()))
      throw IoError("'" + path.string() + "' row " + std::to_string(t) +
                    ": wrong column count");
    int c = 1;
    x.rg.sell_hp[t] = r[c++]; x.rg.sell_ra[t] = r[c++];
    x.rg.bes_charge[t] = r[c++]; x.rg.bes_discharge[t] = r[c++];
    x.rg.bes_soc[t] = r[c++]; x.rg.curtail[t] = r[c++];
    x.hp.buy_rg[t] = r[c++]; x.hp.elz_power[t] = r[c++];
    x.hp.h2_prod[t] = r[c++]; x.hp.h2_store[t] = r[c++];
    x.hp.sell_ra[t] = r[c++]; x.hp.bes_charge[t] = r[c++];
    x.hp.bes_discharge[t] = r[c++]; x.hp.bes_soc[t] = r[c++];
    x.ra.buy_hp[t] = r[c++]; x.ra.buy_rg[t] = r[c++];
    x.ra.back_power[t] = r[c++]; x.ra.asy_power[t] = r[c++];
    x.ra.nh3_prod[t] = r[c++]; x.ra.nh3_sell[t] = r[c++];
    x.ra.h2_buf[t] = r[c++]; x.ra.nh3_store[t] = r[c++];
    x.ra.schedule.pro[t] = static_cast<int>(std::lround(r[c++]));
    x.ra.schedule.by[t] = static_cast<int>(std::lround(r[c++]));
    x.ra.schedule.off[t] = static_cast<int>(std::lround(r[c++]));
    x.ra.schedule.su[t] = static_cast<int>(std::lround(r[c++]));
    x.ra.schedule.sd[t] = static_cast<int>(std::lround(r[c++]));
  }
  return x;
}

inline PriceVector load_prices_csv(const std::filesystem::path& path) {
  std::vector<std::string> header;
  auto rows = read_numeric_csv(path, &header);
  const int T = static_cast<int>(rows.size());
  PriceVector p = PriceVector::zeros(T);
  for (int t = 0; t < T; ++t) {
    if (rows[t].size() != 4)
      throw IoError("'" + path.string() + "': wrong column count");
    p.e_rg_hp[t] = rows[t][1];
    p.e_rg_ra[t] = rows[t][2];
    p.h_hp_ra[t] = rows[t][3];
  }
  return p;
}

// ---------------------------------------------------------------------------
// Study summary (machine-readable sibling of report.md; `compare` and
// `gap` work from these files).
// ---------------------------------------------------------------------------

struct StudySummary {
  StudyMode mode = StudyMode::M2;
  std::string status;  // converged | iter_limit | infeasible | optimal | error
  bool per_player_valid = false;  // false for M3 (transfers eliminated)
  Eigen::Vector3d revenue_cny = Eigen::Vector3d::Zero();
  double total_revenue_cny = 0.0;
  // averages are meaningful only when per_player_valid
  double avg_e_rg_hp = 0.0, avg_e_rg_ra = 0.0, avg_e_blend = 0.0;
  double avg_h_hp_ra = 0.0;
  double eps_used = 0.0, max_gap = 0.0;
  bool certified = false;
  int iterations = 0;
  std::string scenario_path, config_path;
};

inline nlohmann::json summary_to_json(const StudySummary& s) {
  nlohmann::json j;
  j["mode"] = to_string(s.mode);
  j["status"] = s.status;
  j["per_player_valid"] = s.per_player_valid;
  j["revenue_cny"] = {s.revenue_cny[0], s.revenue_cny[1], s.revenue_cny[2]};
  j["total_revenue_cny"] = s.total_revenue_cny;
  j["avg_e_rg_hp"] = s.avg_e_rg_hp;
  j["avg_e_rg_ra"] = s.avg_e_rg_ra;
  j["avg_e_blend"] = s.avg_e_blend;
  j["avg_h_hp_ra"] = s.avg_h_hp_ra;
  j["eps_used"] = s.eps_used;
  j["max_gap"] = s.max_gap;
  j["certified"] = s.certified;
  j["iterations"] = s.iterations;
  j["scenario_path"] = s.scenario_path;
  j["config_path"] = s.config_path;
  return j;
}

inline StudySummary summary_from_json(const nlohmann::json& j) {
  StudySummary s;
  s.mode = parse_mode(j.at("mode").get<std::string>());
  s.status = j.at("status").get<std::string>();
  s.per_player_valid = j.at("per_player_valid").get<bool>();
  for (int k = 0; k < 3; ++k) s.revenue_cny[k] = j.at("revenue_cny")[k];
  s.total_revenue_cny = j.at("total_revenue_cny").get<double>();
  s.avg_e_rg_hp = j.at("avg_e_rg_hp").get<double>();
  s.avg_e_rg_ra = j.at("avg_e_rg_ra").get<double>();
  s.avg_e_blend = j.at("avg_e_blend").get<double>();
  s.avg_h_hp_ra = j.at("avg_h_hp_ra").get<double>();
  s.eps_used = j.at("eps_used").get<double>();
  s.max_gap = j.at("max_gap").get<double>();
  s.certified = j.at("certified").get<bool>();
  s.iterations = j.at("iterations").get<int>();
  s.scenario_path = j.value("scenario_path", "");
  s.config_path = j.value("config_path", "");
  return s;
}

inline StudySummary load_summary(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "summary.json");
  if (!in)
    throw IoError("cannot open '" + (run_dir / "summary.json").string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    return summary_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + (run_dir / "summary.json").string() + "': " +
                  e.what());
  }
}

// ---------------------------------------------------------------------------
// run_study: the whole pipeline for one manifest.
// ---------------------------------------------------------------------------

// Exit codes shared with the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitIterLimit = 3;
inline constexpr int kExitIo = 4;

struct StudyOutcome {
  int exit_code = kExitOk;
  std::string message;  // diagnostic on failure
  StudySummary summary;
  std::optional<EquilibriumResult> equilibrium;  // M1/M2 only
};

namespace detail {

inline void write_manifest_echo(const RunManifest& m,
                                const std::filesystem::path& dir) {
  nlohmann::json j;
  j["mode"] = to_string(m.mode);
  j["scenario_path"] = m.scenario_path;
  j["config_path"] = m.config_path;
  j["out_dir"] = m.out_dir;
  j["seed"] = m.seed;
  j["tool_version"] = m.tool_version;
  open_out(dir / "manifest.json") << j.dump(2) << '\n';
}

inline void write_report_md(const RunManifest& m, const StudySummary& s,
                            const std::string& diagnostic,
                            const std::filesystem::path& dir) {
  auto out = open_out(dir / "report.md");
  out << "# Market study report\n\n";
  out << "- mode: " << to_string(s.mode) << "\n";
  out << "- scenario: " << m.scenario_path << "\n";
  out << "- config: " << m.config_path << "\n";
  out << "- status: " << s.status << "\n";
  out << "- iterations: " << s.iterations << "\n\n";
  if (!diagnostic.empty()) out << "Diagnostic: " << diagnostic << "\n\n";

  out << "## Revenues (10^4 CNY)\n\n";
  out << "| Player | Revenue |\n|---|---|\n";
  if (s.per_player_valid) {
    out << "| RG | " << fmt2(s.revenue_cny[0] / 1e4) << " |\n";
    out << "| HP | " << fmt2(s.revenue_cny[1] / 1e4) << " |\n";
    out << "| RA | " << fmt2(s.revenue_cny[2] / 1e4) << " |\n";
  } else {
    out << "| RG | n/a |\n| HP | n/a |\n| RA | n/a |\n";
  }
  // total is summed unrounded and rounded only here
  out << "| Total | " << fmt2(s.total_revenue_cny / 1e4) << " |\n\n";

  if (s.per_player_valid) {
    out << "## Average prices\n\n";
    out << "- electricity RG->HP: " << fmt2(s.avg_e_rg_hp) << " CNY/MWh\n";
    out << "- electricity RG->RA: " << fmt2(s.avg_e_rg_ra) << " CNY/MWh\n";
    out << "- electricity blended (volume-weighted across both markets): "
        << fmt2(s.avg_e_blend) << " CNY/MWh\n";
    out << "- hydrogen HP->RA: " << fmt2(s.avg_h_hp_ra) << " CNY/Nm3\n\n";
    out << "## Equilibrium certification\n\n";
    out << "- epsilon used: " << fmt_full(s.eps_used) << " CNY\n";
    out << "- max per-player gap d_k: " << fmt_full(s.max_gap) << " CNY\n";
    out << "- certified epsilon-Nash equilibrium: "
        << (s.certified ? "yes" : "no") << "\n";
  } else {
    out << "Cooperative benchmark: internal transfer prices are eliminated, "
           "so per-player revenues and market prices are not defined.\n";
  }
}

}  // namespace detail

inline StudyOutcome run_study(const RunManifest& manifest) {
  namespace fs = std::filesystem;
  StudyOutcome out;
  out.summary.mode = manifest.mode;
  out.summary.scenario_path = manifest.scenario_path;
  out.summary.config_path = manifest.config_path;

  const fs::path dir(manifest.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    out.exit_code = kExitIo;
    out.message = "cannot create output directory '" + dir.string() + "'";
    return out;
  }
  detail::write_manifest_echo(manifest, dir);

  GameContext ctx;
  try {
    StudyConfig cfg = load_config(manifest.config_path);
    const int T = scenario_row_count(manifest.scenario_path);
    ctx.grid = TimeGrid{T, cfg.dt};
    ctx.grid.validate();
    ctx.scenario = load_scenario(manifest.scenario_path, ctx.grid);
    ctx.rg = cfg.rg;
    ctx.hp = cfg.hp;
    ctx.ra = cfg.ra;
    ctx.rho = cfg.solver.rho;
    ctx.market_weights = cfg.solver.market_weights;
    // Mode wiring: the study mode decides hot-standby capability.
    ctx.ra.hsb_enabled = manifest.mode != StudyMode::M1;

    if (manifest.mode == StudyMode::M3) {
      auto prob = build_cooperative_problem(ctx);
      auto sol = solve_exact_miqp(prob.miqp, cfg.solver.bnb_budget,
                                  cfg.solver.qp, &prob.cols, &ctx.ra);
      out.summary.per_player_valid = false;
      out.summary.iterations = sol.iterations;
      if (sol.optimal()) {
        DecisionProfile x =
            unpack_cooperative(sol.primal, T, ctx.ra_initial_state);
        { auto f = detail::open_out(dir / "equilibrium.csv");
          emit_equilibrium_csv(x, T, f); }
        { auto f = detail::open_out(dir / "trace.csv");
          f << "iteration,phi,delta_phi,residual_norm\n"
            << "1," << detail::fmt_full(sol.objective) << ",0,0\n"; }
        out.summary.status = "optimal";
        out.summary.total_revenue_cny = -sol.objective;
        out.summary.max_gap = sol.gap;
        out.exit_code = kExitOk;
      } else {
        out.summary.status = sol.kind == SolveKind::Infeasible
                                 ? "infeasible"
                                 : "iter_limit";
        out.exit_code = sol.kind == SolveKind::Infeasible ? kExitInfeasible
                                                          : kExitIterLimit;
        out.message = "cooperative benchmark did not solve to optimality";
      }
    } else {
      EquilibriumResult res = iterate_to_equilibrium(ctx, cfg.solver);
      const int Tn = ctx.grid.T;
      { auto f = detail::open_out(dir / "equilibrium.csv");
        emit_equilibrium_csv(res.x, Tn, f); }
      { auto f = detail::open_out(dir / "prices.csv");
        emit_prices_csv(res.prices, f); }
      { auto f = detail::open_out(dir / "trace.csv");
        emit_convergence_trace(res, f); }

      StudySummary& s = out.summary;
      s.per_player_valid = true;
      for (int k = 0; k < 3; ++k)
        s.revenue_cny[k] =
            -evaluate_cost(ctx, static_cast<Stakeholder>(k), res.x, res.prices);
      s.total_revenue_cny = aggregate_revenues(s.revenue_cny);
      s.avg_e_rg_hp = average_price(res.prices.e_rg_hp, res.x.rg.sell_hp);
      s.avg_e_rg_ra = average_price(res.prices.e_rg_ra, res.x.rg.sell_ra);
      {
        Series pe(2 * Tn), ve(2 * Tn);
        pe << res.prices.e_rg_hp, res.prices.e_rg_ra;
        ve << res.x.rg.sell_hp, res.x.rg.sell_ra;
        s.avg_e_blend = average_price(pe, ve);
      }
      s.avg_h_hp_ra = average_price(res.prices.h_hp_ra, res.x.hp.sell_ra);
      const double phi_abs = std::abs(res.phi_trace.empty()
                                          ? 0.0
                                          : res.phi_trace.back());
      s.eps_used = std::max(cfg.solver.eps_bar * phi_abs,
                            cfg.solver.eps_floor);
      s.max_gap = res.eps_certified;
      s.certified = res.status == EquilibriumStatus::Converged &&
                    s.max_gap <= s.eps_used + 1e-9 * (1.0 + phi_abs);
      s.iterations = res.iterations;
      if (res.status == EquilibriumStatus::Converged) {
        s.status = "converged";
        out.exit_code = kExitOk;
      } else {
        s.status = "iter_limit";
        out.exit_code = kExitIterLimit;
        out.message = "iteration limit reached before the stop test";
      }
      out.equilibrium = std::move(res);
    }
  } catch (const IoError& e) {
    out.exit_code = kExitIo;
    out.message = e.what();
    out.summary.status = "error";
  } catch (const EquilibriumError& e) {
    out.exit_code = kExitInfeasible;
    out.message = e.what();
    out.summary.status = "infeasible";
  } catch (const std::exception& e) {
    out.exit_code = kExitInfeasible;
    out.message = e.what();
    out.summary.status = "error";
  }

  // report + summary are written in every case (post-mortem included)
  detail::open_out(dir / "summary.json")
      << summary_to_json(out.summary).dump(2) << '\n';
  detail::write_report_md(manifest, out.summary, out.message, dir);
  return out;
}

// ---------------------------------------------------------------------------
// Comparison across runs (Table I / Table II shape).
// ---------------------------------------------------------------------------

struct ComparisonReport {
  std::vector<StudySummary> runs;  // runs[0] is the baseline for gains
  std::string markdown;
};

inline ComparisonReport compare_runs(
    const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.empty()) throw IoError("compare: no run directories given");
  ComparisonReport rep;
  for (const auto& d : run_dirs) rep.runs.push_back(load_summary(d));

  const StudySummary& base = rep.runs.front();
  std::ostringstream md;
  auto gain_cell = [](double b, double n) {
    auto g = profit_gain(b, n);
    if (!g) return std::string("n/a");
    char buf[40];
    std::snprintf(buf, sizeof buf, "%+.2f%%", *g);
    return std::string(buf);
  };

  md << "# Run comparison\n\n";
  md << "Revenues in 10^4 CNY; gains are relative to the first run ("
     << to_string(base.mode) << ").\n\n";
  md << "| Run | RG | HP | RA | Total | RG gain | HP gain | RA gain "
        "| Total gain |\n";
  md << "|---|---|---|---|---|---|---|---|---|\n";
  for (size_t i = 0; i < rep.runs.size(); ++i) {
    const StudySummary& s = rep.runs[i];
    md << "| " << to_string(s.mode) << " (" << run_dirs[i].string() << ") |";
    for (int k = 0; k < 3; ++k)
      md << ' '
         << (s.per_player_valid ? detail::fmt2(s.revenue_cny[k] / 1e4)
                                : std::string("n/a"))
         << " |";
    md << ' ' << detail::fmt2(s.total_revenue_cny / 1e4) << " |";
    for (int k = 0; k < 3; ++k)
      md << ' '
         << (s.per_player_valid && base.per_player_valid
                 ? gain_cell(base.revenue_cny[k], s.revenue_cny[k])
                 : std::string("n/a"))
         << " |";
    md << ' ' << gain_cell(base.total_revenue_cny, s.total_revenue_cny)
       << " |\n";
  }
  md << "\n## Average prices\n\n";
  md << "| Run | e RG->HP (CNY/MWh) | e RG->RA (CNY/MWh) | e blended "
        "(CNY/MWh) | h2 (CNY/Nm3) |\n|---|---|---|---|---|\n";
  for (const StudySummary& s : rep.runs) {
    if (!s.per_player_valid) {
      md << "| " << to_string(s.mode) << " | n/a | n/a | n/a | n/a |\n";
      continue;
    }
    md << "| " << to_string(s.mode) << " | " << detail::fmt2(s.avg_e_rg_hp)
       << " | " << detail::fmt2(s.avg_e_rg_ra) << " | "
       << detail::fmt2(s.avg_e_blend) << " | " << detail::fmt2(s.avg_h_hp_ra)
       << " |\n";
  }
  rep.markdown = md.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Gap recheck: rebuild the context from a finished run's artifacts and
// recompute the per-player equilibrium gaps and certification.
// ---------------------------------------------------------------------------

struct GapRecheck {
  Certification cert;
  double eps_used = 0.0;
};

inline GapRecheck recheck_gap(const std::filesystem::path& run_dir) {
  std::ifstream min(run_dir / "manifest.json");
  if (!min)
    throw IoError("cannot open '" + (run_dir / "manifest.json").string() +
                  "'");
  nlohmann::json mj;
  try {
    min >> mj;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + (run_dir / "manifest.json").string() + "': " +
                  e.what());
  }
  StudyMode mode = parse_mode(mj.at("mode").get<std::string>());
  if (mode == StudyMode::M3)
    throw IoError("gap: the cooperative benchmark has no equilibrium gaps");

  StudyConfig cfg = load_config(mj.at("config_path").get<std::string>());
  const std::string scen = mj.at("scenario_path").get<std::string>();
  GameContext ctx;
  ctx.grid = TimeGrid{scenario_row_count(scen), cfg.dt};
  ctx.scenario = load_scenario(scen, ctx.grid);
  ctx.rg = cfg.rg;
  ctx.hp = cfg.hp;
  ctx.ra = cfg.ra;
  ctx.rho = cfg.solver.rho;
  ctx.market_weights = cfg.solver.market_weights;
  ctx.ra.hsb_enabled = mode != StudyMode::M1;

  DecisionProfile x =
      load_equilibrium_csv(run_dir / "equilibrium.csv", ctx.ra_initial_state);
  PriceVector prices = load_prices_csv(run_dir / "prices.csv");

  const double phi = evaluate_potential(ctx, x, prices);
  GapRecheck out;
  out.eps_used =
      std::max(cfg.solver.eps_bar * std::abs(phi), cfg.solver.eps_floor);
  out.cert = certify_epsilon_ne(ctx, x, prices, out.eps_used, cfg.solver);
  return out;
}

}  // namespace rep2a
