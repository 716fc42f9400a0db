#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace atcsim::sim {

// Flat local frame: +x east, +y north, nautical miles. Headings are degrees
// clockwise from north.
struct Position {
  double x_nm = 0.0;
  double y_nm = 0.0;
  double alt_ft = 0.0;

  bool operator==(const Position&) const = default;
};

struct SimClock {
  std::uint64_t tick_index = 0;
  double tick_seconds = 1.0;

  double elapsed_s() const { return static_cast<double>(tick_index) * tick_seconds; }

  bool operator==(const SimClock&) const = default;
};

struct AircraftStatus {
  bool emergency = false;
  bool radio_failure = false;
  bool go_around = false;

  bool operator==(const AircraftStatus&) const = default;
};

struct AircraftState {
  std::string callsign;
  Position position;
  double heading_deg = 0.0;
  double ground_speed_kt = 0.0;
  double vertical_rate_fpm = 0.0;
  std::optional<double> cleared_heading_deg;
  std::optional<double> cleared_alt_ft;
  std::optional<double> cleared_speed_kt;
  std::optional<std::string> direct_to;
  // Waypoints still to fly after direct_to is reached.
  std::vector<std::string> route;
  std::string controlling_sector;
  AircraftStatus status;

  bool operator==(const AircraftState&) const = default;
};

struct Waypoint {
  std::string name;
  double x_nm = 0.0;
  double y_nm = 0.0;

  bool operator==(const Waypoint&) const = default;
};

using WaypointTable = std::map<std::string, Waypoint, std::less<>>;

struct SeparationMinima {
  double lateral_nm = 5.0;
  double vertical_ft = 1000.0;

  bool operator==(const SeparationMinima&) const = default;
};

struct SeparationEvent {
  std::string first;   // lexicographically smaller callsign
  std::string second;
  double lateral_nm = 0.0;
  double vertical_ft = 0.0;
  std::uint64_t tick_index = 0;

  bool operator==(const SeparationEvent&) const = default;
};

struct PendingSpawn {
  std::uint64_t entry_tick = 0;
  AircraftState initial;

  bool operator==(const PendingSpawn&) const = default;
};

// Performance envelope shared by every aircraft.
struct KinematicLimits {
  double turn_rate_dps = 3.0;
  double accel_kt_per_s = 1.0;
  double climb_fpm = 1800.0;
  double descent_fpm = 1500.0;
  double capture_radius_nm = 1.0;
};

struct WorldState {
  SimClock clock;
  // Sorted by callsign.
  std::vector<AircraftState> aircraft;
  // Sorted by (entry_tick, callsign).
  std::vector<PendingSpawn> pending_spawns;
  // Scenario waypoints; immutable and shared between copies of a world.
  std::shared_ptr<const WaypointTable> waypoints = std::make_shared<const WaypointTable>();

  const AircraftState* find(std::string_view callsign) const {
    for (const auto& a : aircraft) {
      if (a.callsign == callsign) return &a;
    }
    return nullptr;
  }

  friend bool operator==(const WorldState& a, const WorldState& b) {
    return a.clock == b.clock && a.aircraft == b.aircraft && a.pending_spawns == b.pending_spawns &&
           *a.waypoints == *b.waypoints;
  }
};

}  // namespace atcsim::sim
