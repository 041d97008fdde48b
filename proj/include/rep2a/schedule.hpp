#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "rep2a/core.hpp"

namespace rep2a {

enum class AsyState { Production, Hsb, Idle };

inline const char* to_string(AsyState s) {
  switch (s) {
    case AsyState::Production: return "production";
    case AsyState::Hsb: return "hsb";
    case AsyState::Idle: return "idle";
  }
  return "?";
}

/// Binary commitment trajectory of the synthesis unit. pro/by/off partition
/// every step; su/sd mark Idle->on and on->Idle transitions.
struct AsySchedule {
  std::vector<int> pro;
  std::vector<int> by;
  std::vector<int> off;
  std::vector<int> su;
  std::vector<int> sd;
  AsyState initial_state = AsyState::Production;

  int size() const { return static_cast<int>(pro.size()); }

  AsyState state_at(int t) const {
    if (pro[t]) return AsyState::Production;
    if (by[t]) return AsyState::Hsb;
    return AsyState::Idle;
  }

  std::vector<AsyState> states() const {
    std::vector<AsyState> out(pro.size());
    for (int t = 0; t < size(); ++t) out[t] = state_at(t);
    return out;
  }
};

/// Minimal startup/shutdown indicators implied by a state sequence.
/// su[t]=1 iff the unit leaves Idle at t; sd[t]=1 iff it enters Idle at t.
inline std::pair<std::vector<int>, std::vector<int>> derive_transitions(
    const std::vector<AsyState>& states, AsyState initial_state) {
  const int T = static_cast<int>(states.size());
  std::vector<int> su(T, 0), sd(T, 0);
  AsyState prev = initial_state;
  for (int t = 0; t < T; ++t) {
    const bool was_off = (prev == AsyState::Idle);
    const bool is_off = (states[t] == AsyState::Idle);
    if (was_off && !is_off) su[t] = 1;
    if (!was_off && is_off) sd[t] = 1;
    prev = states[t];
  }
  return {std::move(su), std::move(sd)};
}

/// Build a full schedule (with minimal transitions) from a state sequence.
inline AsySchedule schedule_from_states(const std::vector<AsyState>& states,
                                        AsyState initial_state) {
  AsySchedule s;
  const int T = static_cast<int>(states.size());
  s.pro.assign(T, 0);
  s.by.assign(T, 0);
  s.off.assign(T, 0);
  s.initial_state = initial_state;
  for (int t = 0; t < T; ++t) {
    switch (states[t]) {
      case AsyState::Production: s.pro[t] = 1; break;
      case AsyState::Hsb: s.by[t] = 1; break;
      case AsyState::Idle: s.off[t] = 1; break;
    }
  }
  std::tie(s.su, s.sd) = derive_transitions(states, initial_state);
  return s;
}

struct ScheduleViolation {
  enum class Kind { Partition, Startup, Shutdown, Downtime, HsbDisabled };
  Kind kind;
  int t;
  std::string detail;
};

struct ScheduleReport {
  std::vector<ScheduleViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Check the state partition, startup/shutdown coverage, minimum downtime
/// (window truncated at the horizon) and, when HSB is disabled, absence of
/// standby steps. Pre-horizon state comes from initial_state.
inline ScheduleReport validate_asy_schedule(const AsySchedule& s,
                                            const RaParams& p) {
  ScheduleReport rep;
  const int T = s.size();
  using K = ScheduleViolation::Kind;

  for (int t = 0; t < T; ++t) {
    if (s.pro[t] + s.by[t] + s.off[t] != 1)
      rep.violations.push_back(
          {K::Partition, t, "pro+by+off != 1 at t=" + std::to_string(t)});
  }
  if (!rep.ok()) return rep;  // later checks assume a well-formed partition

  int prev_off = (s.initial_state == AsyState::Idle) ? 1 : 0;
  for (int t = 0; t < T; ++t) {
    const int on = s.pro[t] + s.by[t];
    if (on + prev_off - 1 > s.su[t])
      rep.violations.push_back(
          {K::Startup, t, "startup at t=" + std::to_string(t) + " not flagged"});
    if ((1 - prev_off) + s.off[t] - 1 > s.sd[t])
      rep.violations.push_back(
          {K::Shutdown, t,
           "shutdown at t=" + std::to_string(t) + " not flagged"});
    prev_off = s.off[t];
  }

  // Minimum downtime: each Idle entry must stay Idle for min_downtime steps,
  // truncated at the horizon tail.
  prev_off = (s.initial_state == AsyState::Idle) ? 1 : 0;
  for (int t = 0; t < T; ++t) {
    if (s.off[t] == 1 && prev_off == 0) {
      const int window = std::min(p.min_downtime, T - t);
      int stay = 0;
      for (int tau = t; tau < t + window; ++tau) stay += s.off[tau];
      if (stay < window)
        rep.violations.push_back(
            {K::Downtime, t,
             "idle spell entered at t=" + std::to_string(t) + " shorter than " +
                 std::to_string(p.min_downtime) + " steps"});
    }
    prev_off = s.off[t];
  }

  if (!p.hsb_enabled) {
    for (int t = 0; t < T; ++t)
      if (s.by[t])
        rep.violations.push_back(
            {K::HsbDisabled, t, "hsb step at t=" + std::to_string(t) +
                                    " but hsb is disabled"});
  }
  return rep;
}

}  // namespace rep2a
