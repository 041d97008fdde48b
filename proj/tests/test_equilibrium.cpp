#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "rep2a/equilibrium.hpp"
#include "test_support.hpp"

using namespace rep2a;
using namespace rep2a::testing;

namespace {

SolverConfig config_for(const GameContext& ctx) {
  SolverConfig cfg;
  cfg.rho = ctx.rho;
  cfg.market_weights = ctx.market_weights;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Price update.
// ---------------------------------------------------------------------------

TEST_CASE("prices: cleared market leaves prices unchanged") {
  const int T = 3;
  std::mt19937 rng(11);
  PriceVector p = random_prices(T, rng);
  Series phi = Series::Zero(3 * T);
  PriceVector q = update_prices(p, phi, 10.0, Eigen::Vector3d(1.0, 2.0, 3.0));
  CHECK((q.e_rg_hp - p.e_rg_hp).norm() == 0.0);
  CHECK((q.e_rg_ra - p.e_rg_ra).norm() == 0.0);
  CHECK((q.h_hp_ra - p.h_hp_ra).norm() == 0.0);
}

TEST_CASE("prices: one dual step moves each market by rho*w*phi") {
  PriceVector p;
  p.e_rg_hp = Series::Constant(1, 100.0);
  p.e_rg_ra = Series::Constant(1, 100.0);
  p.h_hp_ra = Series::Constant(1, 100.0);
  Series phi(3);
  phi << 3.0, -3.0, 5.0;
  PriceVector q = update_prices(p, phi, 2.0, Eigen::Vector3d(1.0, 1.0, 0.5));
  // Step along -phi: oversupply (phi > 0) lowers the price, excess demand
  // raises it (see the dual-orientation note on update_prices).
  CHECK(q.e_rg_hp[0] == Catch::Approx(94.0));
  CHECK(q.e_rg_ra[0] == Catch::Approx(106.0));
  CHECK(q.h_hp_ra[0] == Catch::Approx(95.0));
}

TEST_CASE("prices: persistent excess demand raises the price both steps") {
  // T=1 toy: the buyer wants 8 MW, the seller offers 5 MW, so
  // phi = sell - buy = -3 in market 0 and the price must climb.
  PriceVector p;
  p.e_rg_hp = Series::Constant(1, 300.0);
  p.e_rg_ra = Series::Zero(1);
  p.h_hp_ra = Series::Zero(1);
  Series phi(3);
  phi << 5.0 - 8.0, 0.0, 0.0;
  PriceVector q1 = update_prices(p, phi, 10.0, Eigen::Vector3d::Ones());
  PriceVector q2 = update_prices(q1, phi, 10.0, Eigen::Vector3d::Ones());
  CHECK(q1.e_rg_hp[0] > p.e_rg_hp[0]);
  CHECK(q2.e_rg_hp[0] > q1.e_rg_hp[0]);
  CHECK(q2.e_rg_hp[0] == Catch::Approx(300.0 + 2.0 * 10.0 * 3.0));
}

// ---------------------------------------------------------------------------
// Degenerate instance.
// ---------------------------------------------------------------------------

TEST_CASE("loop: zero renewables and zero ammonia price converge at once") {
  const int T = 4;
  GameContext ctx = desk_context(T);
  ctx.scenario.wind_avail.setZero();
  ctx.scenario.solar_avail.setZero();
  ctx.scenario.ammonia_price.setZero();
  SolverConfig cfg = config_for(ctx);
  auto res = iterate_to_equilibrium(ctx, cfg);
  REQUIRE(res.status == EquilibriumStatus::Converged);
  CHECK(res.iterations == 1);
  CHECK(std::abs(res.phi_trace.back()) < 1e-6);
  CHECK(clearing_residual(res.x).norm() < 1e-6);
  CHECK(res.x.rg.sell_hp.norm() + res.x.rg.sell_ra.norm() < 1e-6);
  CHECK(res.x.ra.nh3_sell.norm() < 1e-6);
}

// ---------------------------------------------------------------------------
// Monotone potential under exact best responses.
// ---------------------------------------------------------------------------

TEST_CASE("loop: potential is nonincreasing across sub-steps (exact BRs)") {
  const int T = 4;
  std::mt19937 rng(3);
  GameContext ctx = random_context(T, rng);
  SolverConfig cfg = config_for(ctx);
  cfg.exact_ra_br = true;  // RA via branch and bound: every sub-step exact
  cfg.max_iters = 8;
  auto res = iterate_to_equilibrium(ctx, cfg);
  REQUIRE(res.substeps.size() >= 3);
  for (const auto& sub : res.substeps) {
    // A best response can only lower the mover's J, hence Phi, up to the
    // solver's certified error bound for that sub-step.
    const double slack = sub.eps + 1e-6 * (1.0 + std::abs(sub.phi_before));
    CHECK(sub.phi_after <= sub.phi_before + slack);
  }
}

// ---------------------------------------------------------------------------
// Relax-and-round error bound.
// ---------------------------------------------------------------------------

TEST_CASE("ra BR: relax-round eps upper-bounds the true BR error") {
  const int T = 4;
  std::mt19937 rng(19);
  for (int trial = 0; trial < 3; ++trial) {
    GameContext ctx = random_context(T, rng);
    SolverConfig cfg = config_for(ctx);
    cfg.max_iters = 2;  // stop mid-flight: a generic, non-equilibrium state
    auto res = iterate_to_equilibrium(ctx, cfg);

    DecisionProfile x = res.x;
    auto br = best_response(ctx, Stakeholder::Ra, x, res.prices, cfg,
                            std::abs(res.phi_trace.back()));
    const double j_achieved =
        evaluate_penalized_cost(ctx, Stakeholder::Ra, x, res.prices);
    CHECK(j_achieved == Catch::Approx(br.j).margin(1e-6));

    auto prob = build_ra_subproblem(ctx, res.prices, x);
    auto exact = solve_exact_miqp(prob.miqp, cfg.bnb_budget, cfg.qp,
                                  &prob.cols, &ctx.ra);
    REQUIRE(exact.optimal());
    const double true_err = j_achieved - exact.objective;
    CHECK(true_err <= br.eps + 1e-6 * (1.0 + std::abs(exact.objective)));
  }
}

TEST_CASE("ra BR: integral relaxation makes the approximate BR exact") {
  // With hydrogen free and ammonia valuable the relaxation lands on an
  // integral all-Production schedule, so relax-and-round incurs ~no error.
  const int T = 3;
  GameContext ctx = desk_context(T);
  DecisionProfile x = DecisionProfile::zeros(ctx.grid, ctx.ra_initial_state);
  x.hp.sell_ra = Series::Constant(T, 6000.0);
  PriceVector p;
  p.e_rg_hp = Series::Constant(T, 300.0);
  p.e_rg_ra = Series::Constant(T, 300.0);
  p.h_hp_ra = Series::Constant(T, 0.5);
  SolverConfig cfg = config_for(ctx);
  auto br = best_response(ctx, Stakeholder::Ra, x, p, cfg, 1e4);
  for (int t = 0; t < T; ++t) CHECK(x.ra.schedule.pro[t] == 1);
  auto prob = build_ra_subproblem(ctx, p, x);
  auto exact = solve_exact_miqp(prob.miqp, cfg.bnb_budget, cfg.qp, &prob.cols,
                                &ctx.ra);
  REQUIRE(exact.optimal());
  CHECK(br.j <= exact.objective + 1e-4 * (1.0 + std::abs(exact.objective)));
}

// ---------------------------------------------------------------------------
// Fixed point, gaps, and certification on a converged run.
// ---------------------------------------------------------------------------

TEST_CASE("loop: converged run satisfies the stop test and the gap bound") {
  const int T = 4;
  std::mt19937 rng(7);
  GameContext ctx = random_context(T, rng);
  SolverConfig cfg = config_for(ctx);
  cfg.max_iters = 1500;
  auto res = iterate_to_equilibrium(ctx, cfg);
  REQUIRE(res.status == EquilibriumStatus::Converged);

  const auto& last = res.iterations_detail.back();
  CHECK(std::abs(last.delta_phi) < res.g1);
  CHECK(last.residual < res.g2);

  // Gaps are nonnegative and obey the certified-epsilon bound
  // max_k d_k <= eps_bar * |Phi| (+ solver tolerance).
  const double phi_abs = std::abs(res.phi_trace.back());
  for (int k = 0; k < 3; ++k) CHECK(res.gaps[k] >= 0.0);
  CHECK(res.eps_certified <= cfg.eps_bar * phi_abs + 1e-6 * (1.0 + phi_abs));

  SECTION("re-solving a player at the fixed point changes nothing") {
    DecisionProfile x = res.x;
    const double j_before =
        evaluate_penalized_cost(ctx, Stakeholder::Rg, x, res.prices);
    auto br = best_response(ctx, Stakeholder::Rg, x, res.prices, cfg,
                            phi_abs);
    CHECK(br.j == Catch::Approx(j_before).margin(
                      1e-5 * (1.0 + std::abs(j_before))));
  }

  SECTION("certification accepts the converged point") {
    const double eps = std::max(res.eps_certified * 2.0, 1e-4);
    auto cert = certify_epsilon_ne(ctx, res.x, res.prices, eps, cfg);
    CHECK(cert.certified);
    CHECK(cert.margins.minCoeff() >= 0.0);
  }

  SECTION("certification rejects a deliberately suboptimal strategy") {
    DecisionProfile bad = res.x;
    // Replace RG's block with its best response to zeroed-out electricity
    // prices: feasible for RG, but far from optimal at the real prices.
    PriceVector zeroed = res.prices;
    zeroed.e_rg_hp.setZero();
    zeroed.e_rg_ra.setZero();
    best_response(ctx, Stakeholder::Rg, bad, zeroed, cfg, phi_abs);
    auto gaps = equilibrium_gap(ctx, bad, res.prices, cfg);
    CHECK(gaps.d[0] > 10.0 * std::max(res.eps_certified, 1e-4));
    auto cert = certify_epsilon_ne(ctx, bad, res.prices,
                                   std::max(res.eps_certified * 2.0, 1e-4),
                                   cfg);
    CHECK_FALSE(cert.certified);
  }
}

TEST_CASE("loop: iteration budget of one reports IterLimit with traces") {
  const int T = 4;
  std::mt19937 rng(23);
  GameContext ctx = random_context(T, rng);
  SolverConfig cfg = config_for(ctx);
  cfg.max_iters = 1;
  auto res = iterate_to_equilibrium(ctx, cfg);
  CHECK(res.status == EquilibriumStatus::IterLimit);
  CHECK(res.iterations == 1);
  REQUIRE(res.phi_trace.size() == 1);
  REQUIRE(res.residual_trace.size() == 1);
  CHECK(res.substeps.size() == 3);
}
