#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "atcsim/digest.hpp"
#include "atcsim/sim/types.hpp"

namespace atcsim::sim {

namespace detail {

inline void append_optional(std::string& out, const std::optional<double>& v) {
  out += v ? canonical_number(*v) : std::string("-");
}

inline void append_aircraft(std::string& out, const AircraftState& a) {
  out += a.callsign;
  for (const double v : {a.position.x_nm, a.position.y_nm, a.position.alt_ft, a.heading_deg, a.ground_speed_kt,
                         a.vertical_rate_fpm}) {
    out += ' ';
    out += canonical_number(v);
  }
  out += " ch=";
  append_optional(out, a.cleared_heading_deg);
  out += " ca=";
  append_optional(out, a.cleared_alt_ft);
  out += " cs=";
  append_optional(out, a.cleared_speed_kt);
  out += " dct=";
  out += a.direct_to.value_or("-");
  out += " route=";
  for (std::size_t i = 0; i < a.route.size(); ++i) {
    if (i) out += ',';
    out += a.route[i];
  }
  out += " sector=";
  out += a.controlling_sector;
  out += " st=";
  out += a.status.emergency ? 'E' : '-';
  out += a.status.radio_failure ? 'R' : '-';
  out += a.status.go_around ? 'G' : '-';
  out += '\n';
}

}  // namespace detail

// Canonical text form of a world: aircraft and pending entries sorted by
// callsign, numbers at fixed six decimals.
inline std::string canonical_world(const WorldState& world) {
  std::vector<const AircraftState*> aircraft;
  aircraft.reserve(world.aircraft.size());
  for (const auto& a : world.aircraft) aircraft.push_back(&a);
  std::sort(aircraft.begin(), aircraft.end(), [](auto* x, auto* y) { return x->callsign < y->callsign; });

  std::vector<const PendingSpawn*> spawns;
  for (const auto& s : world.pending_spawns) spawns.push_back(&s);
  std::sort(spawns.begin(), spawns.end(), [](auto* x, auto* y) {
    return std::tie(x->entry_tick, x->initial.callsign) < std::tie(y->entry_tick, y->initial.callsign);
  });

  std::string out = "world/1 tick=" + std::to_string(world.clock.tick_index) +
                    " dt=" + canonical_number(world.clock.tick_seconds) + '\n';
  for (const auto* a : aircraft) {
    out += "ac ";
    detail::append_aircraft(out, *a);
  }
  for (const auto* s : spawns) {
    out += "spawn " + std::to_string(s->entry_tick) + ' ';
    detail::append_aircraft(out, s->initial);
  }
  return out;
}

inline std::string world_digest(const WorldState& world) { return sha256_hex(canonical_world(world)); }

}  // namespace atcsim::sim
