#include <catch2/catch_amalgamated.hpp>

#include "rep2a/schedule.hpp"

using namespace rep2a;

namespace {

// Independent oracle: walk the state machine with a downtime counter.
// Feasible iff every Idle spell entered inside the horizon lasts at least
// min(min_downtime, steps remaining).
bool simulate_feasible(const std::vector<AsyState>& states, AsyState initial,
                       int min_downtime) {
  const int T = static_cast<int>(states.size());
  AsyState prev = initial;
  for (int t = 0; t < T; ++t) {
    if (states[t] == AsyState::Idle && prev != AsyState::Idle) {
      int len = 0;
      while (t + len < T && states[t + len] == AsyState::Idle) ++len;
      if (len < std::min(min_downtime, T - t)) return false;
    }
    prev = states[t];
  }
  return true;
}

std::vector<AsyState> decode(int code, int T) {
  std::vector<AsyState> s(T);
  for (int t = 0; t < T; ++t) {
    s[t] = static_cast<AsyState>(code % 3);
    code /= 3;
  }
  return s;
}

RaParams params_with_downtime(int td) {
  RaParams p;
  p.min_downtime = td;
  return p;
}

}  // namespace

TEST_CASE("all-production schedule is feasible") {
  auto s = schedule_from_states(std::vector<AsyState>(4, AsyState::Production),
                                AsyState::Production);
  CHECK(validate_asy_schedule(s, params_with_downtime(2)).ok());
}

TEST_CASE("short idle spell violates minimum downtime") {
  auto s = schedule_from_states(
      {AsyState::Production, AsyState::Idle, AsyState::Production},
      AsyState::Production);
  auto rep = validate_asy_schedule(s, params_with_downtime(2));
  REQUIRE_FALSE(rep.ok());
  CHECK(rep.violations[0].kind == ScheduleViolation::Kind::Downtime);
  CHECK(rep.violations[0].t == 1);
}

TEST_CASE("derive_transitions marks startups and shutdowns") {
  {
    auto [su, sd] = derive_transitions(
        {AsyState::Idle, AsyState::Production, AsyState::Production},
        AsyState::Idle);
    CHECK(su == std::vector<int>{0, 1, 0});
    CHECK(sd == std::vector<int>{0, 0, 0});
  }
  {
    auto [su, sd] = derive_transitions(
        {AsyState::Production, AsyState::Idle, AsyState::Hsb},
        AsyState::Production);
    CHECK(su == std::vector<int>{0, 0, 1});
    CHECK(sd == std::vector<int>{0, 1, 0});
  }
  {
    auto [su, sd] = derive_transitions(std::vector<AsyState>(3, AsyState::Hsb),
                                       AsyState::Hsb);
    CHECK(su == std::vector<int>{0, 0, 0});
    CHECK(sd == std::vector<int>{0, 0, 0});
  }
}

TEST_CASE("missing startup flag is rejected") {
  auto s = schedule_from_states(
      {AsyState::Idle, AsyState::Idle, AsyState::Production}, AsyState::Idle);
  s.su[2] = 0;  // break the coverage
  auto rep = validate_asy_schedule(s, params_with_downtime(1));
  REQUIRE_FALSE(rep.ok());
  CHECK(rep.violations[0].kind == ScheduleViolation::Kind::Startup);
}

TEST_CASE("broken partition is rejected") {
  auto s = schedule_from_states(std::vector<AsyState>(3, AsyState::Production),
                                AsyState::Production);
  s.by[1] = 1;
  auto rep = validate_asy_schedule(s, params_with_downtime(1));
  REQUIRE_FALSE(rep.ok());
  CHECK(rep.violations[0].kind == ScheduleViolation::Kind::Partition);
}

TEST_CASE("hsb steps rejected when hsb is disabled") {
  auto s = schedule_from_states({AsyState::Production, AsyState::Hsb},
                                AsyState::Production);
  RaParams p = params_with_downtime(1);
  p.hsb_enabled = false;
  auto rep = validate_asy_schedule(s, p);
  REQUIRE_FALSE(rep.ok());
  CHECK(rep.violations[0].kind == ScheduleViolation::Kind::HsbDisabled);
}

TEST_CASE("brute force: validation equals state-machine simulation, T<=6") {
  for (int T : {5, 6}) {
    int total = 1;
    for (int i = 0; i < T; ++i) total *= 3;
    for (int td : {1, 2, 3}) {
      RaParams p = params_with_downtime(td);
      for (AsyState init :
           {AsyState::Production, AsyState::Hsb, AsyState::Idle}) {
        for (int code = 0; code < total; ++code) {
          auto states = decode(code, T);
          auto sched = schedule_from_states(states, init);
          bool accepted = validate_asy_schedule(sched, p).ok();
          bool expected = simulate_feasible(states, init, td);
          INFO("T=" << T << " td=" << td << " init=" << to_string(init)
                    << " code=" << code);
          REQUIRE(accepted == expected);
        }
      }
    }
  }
}

TEST_CASE("derived transitions always satisfy coverage") {
  // downtime excluded: use min_downtime=1 so only (3)-(5) can fail
  const int T = 5;
  RaParams p = params_with_downtime(1);
  for (AsyState init : {AsyState::Production, AsyState::Hsb, AsyState::Idle}) {
    for (int code = 0; code < 243; ++code) {
      auto sched = schedule_from_states(decode(code, T), init);
      REQUIRE(validate_asy_schedule(sched, p).ok());
    }
  }
}
