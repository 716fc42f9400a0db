#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "atcsim/sim/conflicts.hpp"
#include "atcsim/sim/geometry.hpp"
#include "atcsim/sim/types.hpp"

namespace atcsim::sim {

namespace detail {

// Moves `current` toward `target` by at most `max_step`, landing exactly on
// the target when it is within reach.
inline double approach(double current, double target, double max_step) {
  const double diff = target - current;
  if (std::fabs(diff) <= max_step) return target;
  return current + (diff > 0 ? max_step : -max_step);
}

inline void advance_route(AircraftState& a, const WaypointTable& waypoints, double capture_nm) {
  while (a.direct_to) {
    const auto it = waypoints.find(*a.direct_to);
    if (it == waypoints.end()) {
      a.direct_to.reset();
      break;
    }
    if (distance_nm(a.position.x_nm, a.position.y_nm, it->second.x_nm, it->second.y_nm) > capture_nm) break;
    if (a.route.empty()) {
      a.direct_to.reset();
    } else {
      a.direct_to = a.route.front();
      a.route.erase(a.route.begin());
    }
  }
}

}  // namespace detail

// One explicit Euler step for one aircraft. Every rate is taken from the
// state at the start of the tick: the translation uses the pre-update heading
// and speed, then heading, altitude and speed move toward their targets.
inline AircraftState advance_aircraft(const AircraftState& a, double dt, const WaypointTable& waypoints,
                                      const KinematicLimits& lim) {
  AircraftState next = a;
  const double travel_nm = a.ground_speed_kt * dt / 3600.0;

  // Waypoint capture is judged on the pre-step position.
  detail::advance_route(next, waypoints, std::max(lim.capture_radius_nm, travel_nm));

  const auto [sin_h, cos_h] = sin_cos_deg(a.heading_deg);
  next.position.x_nm = a.position.x_nm + travel_nm * sin_h;
  next.position.y_nm = a.position.y_nm + travel_nm * cos_h;

  std::optional<double> target_heading = a.cleared_heading_deg;
  if (next.direct_to) {
    const auto& w = waypoints.find(*next.direct_to)->second;
    target_heading = bearing_deg(w.x_nm - a.position.x_nm, w.y_nm - a.position.y_nm);
  }
  if (target_heading) {
    const double delta = turn_delta(a.heading_deg, *target_heading);
    const double max_turn = lim.turn_rate_dps * dt;
    // Tolerance absorbs accumulated rounding from repeated fractional steps.
    if (std::fabs(delta) <= max_turn + 1e-9) {
      next.heading_deg = normalize_heading(*target_heading);
    } else {
      next.heading_deg = normalize_heading(a.heading_deg + (delta > 0 ? max_turn : -max_turn));
    }
  } else {
    next.heading_deg = normalize_heading(a.heading_deg);
  }

  if (a.cleared_alt_ft) {
    const double target = *a.cleared_alt_ft;
    const double current = a.position.alt_ft;
    if (target > current) {
      next.position.alt_ft = detail::approach(current, target, lim.climb_fpm * dt / 60.0);
      next.vertical_rate_fpm = next.position.alt_ft == target ? 0.0 : lim.climb_fpm;
    } else if (target < current) {
      next.position.alt_ft = detail::approach(current, target, lim.descent_fpm * dt / 60.0);
      next.vertical_rate_fpm = next.position.alt_ft == target ? 0.0 : -lim.descent_fpm;
    } else {
      next.vertical_rate_fpm = 0.0;
    }
  } else if (a.vertical_rate_fpm != 0.0) {
    next.position.alt_ft = std::max(0.0, a.position.alt_ft + a.vertical_rate_fpm * dt / 60.0);
    if (next.position.alt_ft == 0.0) next.vertical_rate_fpm = 0.0;
  }

  if (a.cleared_speed_kt) {
    next.ground_speed_kt = detail::approach(a.ground_speed_kt, *a.cleared_speed_kt, lim.accel_kt_per_s * dt);
  }
  return next;
}

struct StepResult {
  WorldState world;
  std::vector<SeparationEvent> separations;
};

// Pure: the returned world depends only on the arguments.
//
// Scheduled entries with entry_tick <= the current tick are launched into
// this step: they are integrated alongside existing traffic, so the world at
// tick k+1 shows an aircraft entering at tick k one tick along its track.
inline StepResult step_world(const WorldState& world, const SeparationMinima& minima,
                             const KinematicLimits& limits = {}) {
  StepResult out;
  WorldState& next = out.world;
  next.clock = world.clock;
  next.waypoints = world.waypoints;

  const double dt = world.clock.tick_seconds;
  const auto& waypoints = *world.waypoints;

  next.aircraft.reserve(world.aircraft.size());
  for (const auto& a : world.aircraft) next.aircraft.push_back(advance_aircraft(a, dt, waypoints, limits));

  bool spawned = false;
  for (const auto& spawn : world.pending_spawns) {
    if (spawn.entry_tick <= world.clock.tick_index) {
      next.aircraft.push_back(advance_aircraft(spawn.initial, dt, waypoints, limits));
      spawned = true;
    } else {
      next.pending_spawns.push_back(spawn);
    }
  }
  if (spawned) {
    std::sort(next.aircraft.begin(), next.aircraft.end(),
              [](const AircraftState& x, const AircraftState& y) { return x.callsign < y.callsign; });
  }

  next.clock.tick_index = world.clock.tick_index + 1;
  out.separations = detect_conflicts(next.aircraft, minima, next.clock.tick_index);
  return out;
}

}  // namespace atcsim::sim
