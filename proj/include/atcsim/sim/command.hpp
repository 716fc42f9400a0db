#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atcsim/error.hpp"
#include "atcsim/sim/types.hpp"

namespace atcsim::sim {

enum class CommandVerb { FlyHeading, ClimbTo, DescendTo, Speed, DirectTo };

inline std::string_view to_string(CommandVerb v) {
  switch (v) {
    case CommandVerb::FlyHeading: return "FLY_HEADING";
    case CommandVerb::ClimbTo: return "CLIMB_TO";
    case CommandVerb::DescendTo: return "DESCEND_TO";
    case CommandVerb::Speed: return "SPEED";
    case CommandVerb::DirectTo: return "DIRECT_TO";
  }
  return "?";
}

inline std::optional<CommandVerb> verb_from_string(std::string_view s) {
  if (s == "FLY_HEADING") return CommandVerb::FlyHeading;
  if (s == "CLIMB_TO") return CommandVerb::ClimbTo;
  if (s == "DESCEND_TO") return CommandVerb::DescendTo;
  if (s == "SPEED") return CommandVerb::Speed;
  if (s == "DIRECT_TO") return CommandVerb::DirectTo;
  return std::nullopt;
}

struct PilotCommand {
  std::string callsign;
  CommandVerb verb = CommandVerb::FlyHeading;
  double value = 0.0;    // numeric verbs
  std::string waypoint;  // DIRECT_TO only
  std::string issued_by;

  bool operator==(const PilotCommand&) const = default;
};

// Domain of the argument, independent of any scenario. Throws DomainError.
inline void check_command_domain(const PilotCommand& cmd) {
  if (cmd.verb == CommandVerb::DirectTo) {
    if (cmd.waypoint.empty()) throw Error(ErrorCode::DomainError, "DIRECT_TO needs a waypoint");
    return;
  }
  if (!std::isfinite(cmd.value)) throw Error(ErrorCode::DomainError, "argument is not finite");
  if (cmd.verb == CommandVerb::FlyHeading && !(cmd.value >= 0.0 && cmd.value < 360.0)) {
    throw Error(ErrorCode::DomainError, "heading must be in [0,360)");
  }
  if (cmd.value < 0.0) throw Error(ErrorCode::DomainError, std::string(to_string(cmd.verb)) + " must be >= 0");
}

namespace detail {

inline std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

inline bool is_identifier(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

}  // namespace detail

// Pilot console grammar:
//   <CALLSIGN> (FH <hdg> | C <alt_ft> | D <alt_ft> | SPD <kt> | DCT <waypoint>)
// Case-insensitive, tokens separated by exactly one space.
inline PilotCommand parse_pilot_command(std::string_view text, const WaypointTable& waypoints) {
  std::vector<std::string_view> tokens;
  std::size_t start = 0;
  while (true) {
    const auto sp = text.find(' ', start);
    tokens.push_back(text.substr(start, sp == std::string_view::npos ? std::string_view::npos : sp - start));
    if (sp == std::string_view::npos) break;
    start = sp + 1;
  }
  if (tokens.size() != 3) throw Error(ErrorCode::SyntaxError, "expected '<CALLSIGN> <VERB> <ARG>': '" + std::string(text) + "'");
  for (const auto t : tokens) {
    if (t.empty()) throw Error(ErrorCode::SyntaxError, "tokens must be separated by single spaces");
  }

  PilotCommand cmd;
  if (!detail::is_identifier(tokens[0])) throw Error(ErrorCode::SyntaxError, "bad callsign '" + std::string(tokens[0]) + "'");
  cmd.callsign = detail::upper(tokens[0]);

  const std::string verb = detail::upper(tokens[1]);
  if (verb == "FH") {
    cmd.verb = CommandVerb::FlyHeading;
  } else if (verb == "C") {
    cmd.verb = CommandVerb::ClimbTo;
  } else if (verb == "D") {
    cmd.verb = CommandVerb::DescendTo;
  } else if (verb == "SPD") {
    cmd.verb = CommandVerb::Speed;
  } else if (verb == "DCT") {
    cmd.verb = CommandVerb::DirectTo;
  } else {
    throw Error(ErrorCode::SyntaxError, "unknown verb '" + std::string(tokens[1]) + "'");
  }

  const auto arg = tokens[2];
  if (cmd.verb == CommandVerb::DirectTo) {
    if (!detail::is_identifier(arg)) throw Error(ErrorCode::SyntaxError, "bad waypoint '" + std::string(arg) + "'");
    cmd.waypoint = detail::upper(arg);
    if (waypoints.find(cmd.waypoint) == waypoints.end()) {
      throw Error(ErrorCode::DomainError, "waypoint " + cmd.waypoint + " is not in the scenario");
    }
    return cmd;
  }

  const char* first = arg.data();
  const char* last = arg.data() + arg.size();
  if (*first == '+') throw Error(ErrorCode::SyntaxError, "bad number '" + std::string(arg) + "'");
  const auto [ptr, ec] = std::from_chars(first, last, cmd.value, std::chars_format::fixed);
  if (ec != std::errc{} || ptr != last) throw Error(ErrorCode::SyntaxError, "bad number '" + std::string(arg) + "'");
  check_command_domain(cmd);
  return cmd;
}

// Sets the cleared target for the addressed aircraft. Kinematic state is not
// touched; the next step_world moves the aircraft.
inline WorldState apply_pilot_command(const WorldState& world, const PilotCommand& cmd) {
  check_command_domain(cmd);
  WorldState next = world;
  const auto it = std::find_if(next.aircraft.begin(), next.aircraft.end(),
                               [&](const AircraftState& a) { return a.callsign == cmd.callsign; });
  if (it == next.aircraft.end()) throw Error(ErrorCode::UnknownCallsign, cmd.callsign);
  AircraftState& a = *it;

  switch (cmd.verb) {
    case CommandVerb::FlyHeading:
      a.cleared_heading_deg = cmd.value;
      a.direct_to.reset();
      break;
    case CommandVerb::ClimbTo:
    case CommandVerb::DescendTo:
      a.cleared_alt_ft = cmd.value;
      break;
    case CommandVerb::Speed:
      a.cleared_speed_kt = cmd.value;
      break;
    case CommandVerb::DirectTo: {
      if (world.waypoints->find(cmd.waypoint) == world.waypoints->end()) {
        throw Error(ErrorCode::WaypointNotInScenario, cmd.waypoint);
      }
      // Rejoin the filed route after the fix if it is on it; otherwise the
      // remaining route is abandoned.
      const auto on_route = std::find(a.route.begin(), a.route.end(), cmd.waypoint);
      if (on_route != a.route.end()) {
        a.route.erase(a.route.begin(), on_route + 1);
      } else {
        a.route.clear();
      }
      a.direct_to = cmd.waypoint;
      a.cleared_heading_deg.reset();
      break;
    }
  }
  return next;
}

inline std::string format_pilot_command(const PilotCommand& cmd) {
  auto number = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  switch (cmd.verb) {
    case CommandVerb::FlyHeading: return cmd.callsign + " FH " + number(cmd.value);
    case CommandVerb::ClimbTo: return cmd.callsign + " C " + number(cmd.value);
    case CommandVerb::DescendTo: return cmd.callsign + " D " + number(cmd.value);
    case CommandVerb::Speed: return cmd.callsign + " SPD " + number(cmd.value);
    case CommandVerb::DirectTo: return cmd.callsign + " DCT " + cmd.waypoint;
  }
  return cmd.callsign;
}

}  // namespace atcsim::sim
