// Command-line front end: run market studies from scenario + config files,
// compare finished runs, and re-check equilibrium certification.
//
// Exit codes: 0 success, 2 infeasible, 3 iteration limit, 4 I/O or parse
// failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rep2a/report.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Renewable power-to-ammonia market equilibrium tool"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rep2a::kToolVersion));

  // --- solve ---------------------------------------------------------------
  std::string scenario_path, config_path, mode_str = "m2", out_dir;
  long seed = 0;
  auto* solve = app.add_subcommand(
      "solve", "Run one study and write its artifacts to --out");
  solve->add_option("--scenario", scenario_path, "Scenario CSV")->required();
  solve->add_option("--config", config_path, "Config file (JSON)")->required();
  solve->add_option("--mode", mode_str, "m1 | m2 | m3")->required();
  solve->add_option("--out", out_dir, "Output directory")->required();
  solve->add_option("--seed", seed, "Seed echoed into the manifest");

  // --- compare -------------------------------------------------------------
  std::vector<std::string> run_dirs;
  std::string compare_out;
  auto* compare = app.add_subcommand(
      "compare", "Build a comparison report from finished run directories");
  compare->add_option("--runs", run_dirs, "Run directories (first = baseline)")
      ->required()
      ->expected(-1);
  compare->add_option("--out", compare_out, "Output file (markdown)")
      ->required();

  // --- gap -----------------------------------------------------------------
  std::string gap_run;
  auto* gap = app.add_subcommand(
      "gap", "Recompute equilibrium gaps and certification for a run");
  gap->add_option("--run", gap_run, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      rep2a::RunManifest m;
      m.mode = rep2a::parse_mode(mode_str);
      m.scenario_path = scenario_path;
      m.config_path = config_path;
      m.out_dir = out_dir;
      m.seed = seed;
      auto out = rep2a::run_study(m);
      if (out.exit_code == 0) {
        std::cout << "status: " << out.summary.status << " ("
                  << out.summary.iterations << " iterations)\n"
                  << "total revenue: "
                  << rep2a::detail::fmt2(out.summary.total_revenue_cny / 1e4)
                  << " x 10^4 CNY\n"
                  << "artifacts: " << out_dir << "\n";
      } else {
        std::cerr << "status: " << out.summary.status << "\n"
                  << "error: " << out.message << "\n"
                  << "post-mortem artifacts: " << out_dir << "\n";
      }
      return out.exit_code;
    }

    if (compare->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      auto rep = rep2a::compare_runs(dirs);
      std::ofstream out(compare_out, std::ios::binary);
      if (!out)
        throw rep2a::IoError("cannot write '" + compare_out + "'");
      out << rep.markdown;
      std::cout << "wrote " << compare_out << " (" << rep.runs.size()
                << " runs)\n";
      return 0;
    }

    if (gap->parsed()) {
      auto gr = rep2a::recheck_gap(gap_run);
      std::cout << "epsilon used: " << gr.eps_used << " CNY\n";
      const char* names[3] = {"RG", "HP", "RA"};
      for (int k = 0; k < 3; ++k)
        std::cout << "d_" << names[k] << ": " << gr.cert.gaps.d[k]
                  << (gr.cert.gaps.upper_bound[k] ? " (upper bound)" : "")
                  << "\n";
      std::cout << "certified epsilon-Nash equilibrium: "
                << (gr.cert.certified ? "yes" : "no") << "\n";
      return gr.cert.certified ? 0 : 2;
    }
  } catch (const rep2a::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return rep2a::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return rep2a::kExitInfeasible;
  }
  return 0;
}
