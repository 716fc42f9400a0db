#pragma once

#include <map>
#include <string>
#include <vector>

#include "atcsim/exercise/scenario.hpp"
#include "atcsim/sim/conflicts.hpp"

namespace atcsim::exercise {

// Semantic checks on a parsed scenario. Never throws; an empty result means
// the scenario is fit to run.
inline std::vector<ValidationIssue> validate_scenario(const Scenario& s) {
  std::vector<ValidationIssue> issues;
  const std::uint64_t last_tick = s.duration_ticks();

  std::map<std::string, std::size_t> first_index;
  for (std::size_t i = 0; i < s.schedule.size(); ++i) {
    const auto& e = s.schedule[i];
    const std::string path = "/schedule/" + std::to_string(i);
    if (auto [it, inserted] = first_index.emplace(e.callsign, i); !inserted) {
      issues.push_back({Severity::Error, "DuplicateCallsign", path + "/callsign",
                        e.callsign + " already used by /schedule/" + std::to_string(it->second)});
    }
    if (e.entry_tick >= last_tick) {
      issues.push_back({Severity::Error, "SpawnAfterDuration", path + "/entry_tick",
                        "entry tick " + std::to_string(e.entry_tick) + " is not before the end of the exercise (tick " +
                            std::to_string(last_tick) + ")"});
    }
  }

  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& ev = s.events[i];
    const std::string path = "/events/" + std::to_string(i);
    if (!first_index.count(ev.callsign)) {
      issues.push_back({Severity::Error, "UnknownEventTarget", path + "/callsign",
                        ev.callsign + " is not in the schedule"});
    }
    if (ev.trigger_tick >= last_tick) {
      issues.push_back({Severity::Error, "EventAfterDuration", path + "/trigger_tick",
                        "trigger tick " + std::to_string(ev.trigger_tick) + " is not before the end of the exercise"});
    }
  }

  // Entries launched on the same tick must not start inside each other's
  // separation bubble.
  std::map<std::uint64_t, std::vector<std::size_t>> by_tick;
  for (std::size_t i = 0; i < s.schedule.size(); ++i) by_tick[s.schedule[i].entry_tick].push_back(i);
  for (const auto& [tick, indices] : by_tick) {
    if (indices.size() < 2) continue;
    std::vector<sim::AircraftState> group;
    std::map<std::string, std::size_t> index_of;
    for (const auto i : indices) {
      group.push_back(make_aircraft(s.schedule[i]));
      index_of.emplace(s.schedule[i].callsign, i);
    }
    for (const auto& ev : sim::detect_conflicts(group, s.minima, tick)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s and %s enter at tick %llu %.2f NM / %.0f ft apart", ev.first.c_str(),
                    ev.second.c_str(), static_cast<unsigned long long>(tick), ev.lateral_nm, ev.vertical_ft);
      issues.push_back({Severity::Warning, "SpawnConflict", "/schedule/" + std::to_string(index_of[ev.second]), buf});
    }
  }
  return issues;
}

inline bool has_errors(const std::vector<ValidationIssue>& issues) {
  for (const auto& i : issues) {
    if (i.severity == Severity::Error) return true;
  }
  return false;
}

}  // namespace atcsim::exercise
