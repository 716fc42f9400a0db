#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atcsim/error.hpp"
#include "atcsim/exercise/scenario.hpp"
#include "atcsim/host/event_log.hpp"
#include "atcsim/host/runner.hpp"

namespace atcsim::host {

struct Divergence {
  std::uint64_t tick = 0;
  std::string recorded;
  std::string replayed;
};

struct ReplayResult {
  std::vector<std::pair<std::uint64_t, std::string>> digests;  // ticks 1..N
  std::uint64_t ticks = 0;
  std::size_t separation_events = 0;
  std::string final_digest;
  std::size_t verified = 0;  // recorded digests that were compared
  std::optional<Divergence> divergence;  // first mismatch when verifying
};

// Re-executes a run from its log. Only entries flagged as applied feed the
// world; a STOP ends the run as it did live.
inline ReplayResult replay(const EventLog& log, const exercise::Scenario& scenario, bool verify_digests = false) {
  if (exercise::scenario_digest(scenario) != log.header.scenario_digest) {
    throw Error(ErrorCode::ScenarioMismatch, "log was recorded against scenario " + log.header.scenario_digest);
  }

  std::map<std::uint64_t, std::string> recorded;
  for (const auto& e : log.entries) {
    if (e.digest) recorded.insert_or_assign(e.tick_index, *e.digest);
  }

  ExerciseRunner runner(scenario);
  ReplayResult result;
  std::size_t idx = 0;
  const auto& entries = log.entries;
  const std::uint64_t last_recorded_tick = recorded.empty() ? 0 : recorded.rbegin()->first;

  while (!runner.finished()) {
    const std::uint64_t t = runner.tick();
    for (; idx < entries.size() && entries[idx].tick_index <= t; ++idx) {
      const auto& e = entries[idx];
      if (!e.message || !e.apply) continue;
      const auto& m = *e.message;
      if (m.is<protocol::SupervisorCmd>() && m.as<protocol::SupervisorCmd>().verb == protocol::SupervisorVerb::Stop) {
        runner.stop();
      } else {
        runner.queue(m);
      }
    }
    if (runner.finished()) break;
    // The log records how far the live run got.
    if (t >= last_recorded_tick) break;

    auto report = runner.advance();
    result.separation_events += report.separations.size();
    result.digests.emplace_back(report.tick, report.digest);
    if (verify_digests) {
      if (const auto it = recorded.find(report.tick); it != recorded.end()) {
        ++result.verified;
        if (it->second != report.digest && !result.divergence) {
          result.divergence = Divergence{report.tick, it->second, report.digest};
        }
      }
    }
  }
  result.ticks = runner.tick();
  result.final_digest = sim::world_digest(runner.world());
  if (verify_digests && !result.divergence && result.verified != recorded.size()) {
    // Recorded digests beyond what the replay produced.
    for (const auto& [tick, digest] : recorded) {
      if (tick > result.ticks) {
        result.divergence = Divergence{tick, digest, ""};
        break;
      }
    }
  }
  return result;
}

}  // namespace atcsim::host
