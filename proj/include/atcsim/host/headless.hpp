#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <set>
#include <string>
#include <vector>

#include "atcsim/error.hpp"
#include "atcsim/exercise/scenario.hpp"
#include "atcsim/host/session.hpp"
#include "atcsim/sim/command.hpp"

namespace atcsim::host {

struct ScriptLine {
  std::uint64_t at_tick = 0;
  sim::PilotCommand command;
  std::size_t line = 0;
};

// "<tick> <pilot command>" per line; blank lines and '#' comments skipped.
// Ticks must not decrease. Commands are checked against the scenario.
inline std::vector<ScriptLine> parse_pilot_script(std::istream& in, const exercise::Scenario& scenario) {
  const auto waypoints = scenario.waypoint_table();
  std::set<std::string, std::less<>> callsigns;
  for (const auto& e : scenario.schedule) callsigns.insert(e.callsign);

  std::vector<ScriptLine> out;
  std::string text;
  std::size_t lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    const auto first = text.find_first_not_of(" \t");
    if (first == std::string::npos || text[first] == '#') continue;
    const auto where = "line " + std::to_string(lineno) + ": ";

    const auto space = text.find(' ', first);
    if (space == std::string::npos) throw Error(ErrorCode::SyntaxError, where + "expected '<tick> <command>'");
    ScriptLine s;
    s.line = lineno;
    const char* b = text.data() + first;
    const char* e = text.data() + space;
    const auto [ptr, ec] = std::from_chars(b, e, s.at_tick);
    if (ec != std::errc() || ptr != e) throw Error(ErrorCode::SyntaxError, where + "bad tick '" + std::string(b, e) + "'");
    if (!out.empty() && s.at_tick < out.back().at_tick) throw Error(ErrorCode::SyntaxError, where + "tick goes backwards");

    try {
      s.command = sim::parse_pilot_command(text.substr(space + 1), waypoints);
    } catch (const Error& err) {
      throw Error(err.code(), where + err.what());
    }
    if (!callsigns.count(s.command.callsign)) throw Error(ErrorCode::UnknownCallsign, where + s.command.callsign);
    out.push_back(std::move(s));
  }
  return out;
}

struct HeadlessResult {
  std::uint64_t ticks = 0;
  std::string final_digest;
  std::uint64_t separation_events = 0;
  std::vector<std::string> rejects;  // REJECTs the scripted pilot received
};

// Runs one exercise in-process: a supervisor starts it, a pseudo-pilot
// sends the script, and a STOP closes it if the scenario has not ended.
inline HeadlessResult run_headless(const exercise::Scenario& scenario, const std::vector<ScriptLine>& script,
                                   double duration_s, LogFactory logs = {}) {
  Session session("HEADLESS", protocol::BlockConfig{"B1"}, scenario, {}, std::move(logs));
  const std::uint64_t ticks = std::min<std::uint64_t>(
      static_cast<std::uint64_t>(std::floor(duration_s / scenario.tick_seconds + 1e-9)), scenario.duration_ticks());

  constexpr ConnectionId kSupervisor = 1;
  constexpr ConnectionId kPilot = 2;
  std::uint64_t sup_seq = 0;
  std::uint64_t pilot_seq = 0;
  HeadlessResult result;

  const auto send = [&](ConnectionId conn, std::uint64_t& seq, const char* name, protocol::Payload p) {
    protocol::Message m;
    m.seq = ++seq;
    m.sent_at_tick = session.runner().tick();
    m.session_id = session.id();
    m.sender = name;
    m.payload = std::move(p);
    for (const auto& o : session.receive(conn, std::move(m))) {
      if (o.connection == kPilot && o.message.is<protocol::Reject>()) {
        result.rejects.push_back(o.message.as<protocol::Reject>().detail);
      }
    }
  };
  const auto supervisor = [](protocol::SupervisorVerb verb) {
    protocol::SupervisorCmd cmd;
    cmd.verb = verb;
    return cmd;
  };
  const auto collect = [&](const Outbox& out) {
    for (const auto& o : out) {
      if (o.connection == kPilot && o.message.is<protocol::Reject>()) {
        result.rejects.push_back(o.message.as<protocol::Reject>().detail);
      }
    }
  };

  send(kSupervisor, sup_seq, "supervisor", protocol::Hello{Role::Supervisor, std::nullopt, "supervisor", "", std::nullopt});
  send(kPilot, pilot_seq, "pilot", protocol::Hello{Role::PseudoPilot, std::nullopt, "pilot", "", std::nullopt});
  send(kSupervisor, sup_seq, "supervisor", supervisor(protocol::SupervisorVerb::Start));

  std::size_t next = 0;
  for (std::uint64_t t = 0; t < ticks && session.phase() == Phase::Running; ++t) {
    for (; next < script.size() && script[next].at_tick <= t; ++next) {
      send(kPilot, pilot_seq, "pilot", protocol::PilotCmd{script[next].command});
    }
    collect(session.run_tick());
  }
  if (session.phase() == Phase::Running || session.phase() == Phase::Paused) {
    send(kSupervisor, sup_seq, "supervisor", supervisor(protocol::SupervisorVerb::Stop));
  }
  if (auto* log = session.log()) log->sync();

  result.ticks = session.runner().tick();
  result.final_digest = sim::world_digest(session.runner().world());
  result.separation_events = session.stats().separation_events;
  return result;
}

}  // namespace atcsim::host
