#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <sstream>

#include "rep2a/scenario_io.hpp"

using namespace rep2a;

namespace {

const char* kHeader =
    "t,wind_mw,solar_mw,ammonia_price_cny_per_t,backup_price_cny_per_mwh\n";

ScenarioData parse_text(const std::string& body, int T) {
  std::istringstream in(body);
  TimeGrid grid{T, 1.0};
  return parse_scenario(in, grid);
}

/// Writes `text` to a unique temp file and returns its path.
struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& text, const char* ext = ".csv") {
    path = std::filesystem::temp_directory_path() /
           ("rep2a_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++) + ext);
    std::ofstream(path) << text;
  }
  ~TempFile() { std::filesystem::remove(path); }
  static inline int counter = 0;
};

}  // namespace

TEST_CASE("scenario: four all-zero rows parse to four zero series") {
  std::string body = kHeader;
  for (int t = 0; t < 4; ++t) body += std::to_string(t) + ",0,0,0,0\n";
  ScenarioData sc = parse_text(body, 4);
  CHECK(sc.wind_avail.size() == 4);
  CHECK(sc.wind_avail.norm() == 0.0);
  CHECK(sc.solar_avail.norm() == 0.0);
  CHECK(sc.ammonia_price.norm() == 0.0);
  CHECK(sc.backup_price.norm() == 0.0);
}

TEST_CASE("scenario: values land in the right columns") {
  std::string body = kHeader;
  body += "0,25.5,10.25,4500,800\n";
  body += "1,0,3,4600.5,810\n";
  ScenarioData sc = parse_text(body, 2);
  CHECK(sc.wind_avail[0] == 25.5);
  CHECK(sc.solar_avail[0] == 10.25);
  CHECK(sc.ammonia_price[0] == 4500.0);
  CHECK(sc.backup_price[0] == 800.0);
  CHECK(sc.wind_avail[1] == 0.0);
  CHECK(sc.solar_avail[1] == 3.0);
  CHECK(sc.ammonia_price[1] == 4600.5);
  CHECK(sc.backup_price[1] == 810.0);
}

TEST_CASE("scenario: three rows against T=4 is a length-mismatch error") {
  std::string body = kHeader;
  for (int t = 0; t < 3; ++t) body += std::to_string(t) + ",1,1,1,1\n";
  CHECK_THROWS_WITH(parse_text(body, 4),
                    Catch::Matchers::ContainsSubstring("expected 4 data rows") &&
                        Catch::Matchers::ContainsSubstring("got 3"));
}

TEST_CASE("scenario: five rows against T=4 is also rejected") {
  std::string body = kHeader;
  for (int t = 0; t < 5; ++t) body += std::to_string(t) + ",1,1,1,1\n";
  CHECK_THROWS_WITH(parse_text(body, 4),
                    Catch::Matchers::ContainsSubstring("more than T=4"));
}

TEST_CASE("scenario: negative wind cites the offending row and column") {
  std::string body = kHeader;
  body += "0,1,1,1,1\n";
  body += "1,1,1,1,1\n";
  body += "2,-1,1,1,1\n";
  body += "3,1,1,1,1\n";
  CHECK_THROWS_WITH(parse_text(body, 4),
                    Catch::Matchers::ContainsSubstring("row 2") &&
                        Catch::Matchers::ContainsSubstring("wind_mw") &&
                        Catch::Matchers::ContainsSubstring("negative"));
}

TEST_CASE("scenario: wrong header is rejected") {
  std::string body = "time,wind,solar,nh3,backup\n0,1,1,1,1\n";
  CHECK_THROWS_WITH(parse_text(body, 1),
                    Catch::Matchers::ContainsSubstring("header"));
}

TEST_CASE("scenario: unparsable cell names its row and column") {
  std::string body = kHeader;
  body += "0,1,abc,1,1\n";
  CHECK_THROWS_WITH(parse_text(body, 1),
                    Catch::Matchers::ContainsSubstring("row 0") &&
                        Catch::Matchers::ContainsSubstring("solar_mw") &&
                        Catch::Matchers::ContainsSubstring("abc"));
}

TEST_CASE("scenario: wrong column count names the row") {
  std::string body = kHeader;
  body += "0,1,1,1\n";
  CHECK_THROWS_WITH(parse_text(body, 1),
                    Catch::Matchers::ContainsSubstring("row 0") &&
                        Catch::Matchers::ContainsSubstring("columns"));
}

TEST_CASE("scenario: t column must match the row index") {
  std::string body = kHeader;
  body += "0,1,1,1,1\n";
  body += "5,1,1,1,1\n";
  CHECK_THROWS_WITH(parse_text(body, 2),
                    Catch::Matchers::ContainsSubstring("row 1"));
}

TEST_CASE("scenario: file loading, CRLF endings, and row counting") {
  std::string body = kHeader;
  body += "0,2,3,4,5\r\n1,6,7,8,9\r\n";
  TempFile f(body);
  CHECK(scenario_row_count(f.path) == 2);
  ScenarioData sc = load_scenario(f.path, TimeGrid{2, 1.0});
  CHECK(sc.wind_avail[1] == 6.0);
  CHECK(sc.backup_price[1] == 9.0);
}

TEST_CASE("scenario: missing file is an IoError") {
  CHECK_THROWS_AS(load_scenario("/nonexistent/nope.csv", TimeGrid{1, 1.0}),
                  IoError);
  CHECK_THROWS_AS(scenario_row_count("/nonexistent/nope.csv"), IoError);
}

// ---------------------------------------------------------------------------
// Config files.
// ---------------------------------------------------------------------------

TEST_CASE("config: empty object yields all defaults") {
  StudyConfig cfg = parse_config(nlohmann::json::object());
  RgParams rg_def;
  SolverConfig sv_def;
  CHECK(cfg.dt == 1.0);
  CHECK(cfg.rg.rated_wind == rg_def.rated_wind);
  CHECK(cfg.solver.rho == sv_def.rho);
  CHECK(cfg.solver.max_iters == sv_def.max_iters);
  CHECK(cfg.ra.hsb_enabled == RaParams{}.hsb_enabled);
}

TEST_CASE("config: every section key reaches its struct field") {
  nlohmann::json j = {
      {"dt", 0.5},
      {"rg", {{"rated_wind", 42.0}, {"bes_eff_charge", 0.9}}},
      {"hp", {{"elz_power_cap", 12.5}, {"deg_cost", 7.0}}},
      {"ra",
       {{"asy_cap", 4.0},
        {"min_downtime", 3},
        {"startup_cost", 123.0},
        {"hsb_enabled", false}}},
      {"solver",
       {{"rho", 2.5},
        {"market_weights", {1.0, 1.0, 2e-5}},
        {"max_iters", 77},
        {"eps_bar", 5e-5},
        {"init_elec_price", 250.0},
        {"qp_tol", 1e-8},
        {"bnb_max_nodes", 99},
        {"exact_ra_br", true}}}};
  StudyConfig cfg = parse_config(j);
  CHECK(cfg.dt == 0.5);
  CHECK(cfg.rg.rated_wind == 42.0);
  CHECK(cfg.rg.bes_eff_charge == 0.9);
  CHECK(cfg.hp.elz_power_cap == 12.5);
  CHECK(cfg.hp.deg_cost == 7.0);
  CHECK(cfg.ra.asy_cap == 4.0);
  CHECK(cfg.ra.min_downtime == 3);
  CHECK(cfg.ra.startup_cost == 123.0);
  CHECK(cfg.ra.hsb_enabled == false);
  CHECK(cfg.solver.rho == 2.5);
  CHECK(cfg.solver.market_weights[2] == 2e-5);
  CHECK(cfg.solver.max_iters == 77);
  CHECK(cfg.solver.eps_bar == 5e-5);
  CHECK(cfg.solver.init_elec_price == 250.0);
  CHECK(cfg.solver.qp.tol == 1e-8);
  CHECK(cfg.solver.bnb_budget.max_nodes == 99);
  CHECK(cfg.solver.exact_ra_br == true);
}

TEST_CASE("config: unknown keys are rejected with their path") {
  CHECK_THROWS_WITH(parse_config({{"bogus", 1}}),
                    Catch::Matchers::ContainsSubstring("bogus"));
  CHECK_THROWS_WITH(parse_config({{"rg", {{"rated_widn", 1.0}}}}),
                    Catch::Matchers::ContainsSubstring("rg.rated_widn"));
  CHECK_THROWS_WITH(parse_config({{"solver", {{"rho_", 1.0}}}}),
                    Catch::Matchers::ContainsSubstring("solver.rho_"));
}

TEST_CASE("config: type errors name the key") {
  CHECK_THROWS_WITH(parse_config({{"ra", {{"min_downtime", 2.5}}}}),
                    Catch::Matchers::ContainsSubstring("ra.min_downtime"));
  CHECK_THROWS_WITH(parse_config({{"ra", {{"hsb_enabled", 1}}}}),
                    Catch::Matchers::ContainsSubstring("ra.hsb_enabled"));
  CHECK_THROWS_WITH(
      parse_config({{"solver", {{"market_weights", {1.0, 2.0}}}}}),
      Catch::Matchers::ContainsSubstring("market_weights"));
}

TEST_CASE("config: dt must be positive") {
  CHECK_THROWS_WITH(parse_config({{"dt", 0.0}}),
                    Catch::Matchers::ContainsSubstring("dt"));
}

TEST_CASE("config: file loading and malformed JSON") {
  TempFile good(R"({"solver": {"rho": 3.0}})", ".json");
  StudyConfig cfg = load_config(good.path);
  CHECK(cfg.solver.rho == 3.0);

  TempFile bad("{not json", ".json");
  CHECK_THROWS_AS(load_config(bad.path), IoError);
  CHECK_THROWS_AS(load_config("/nonexistent/nope.json"), IoError);
}
