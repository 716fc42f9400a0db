#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "atcsim/error.hpp"

namespace atcsim::exercise {

// Practice window per rotation slot, seconds.
inline constexpr double kMinSlotSeconds = 1200.0;
inline constexpr double kMaxSlotSeconds = 1800.0;
// Smallest group that can staff a controller, a coordinator and a pilot.
inline constexpr std::size_t kMinGroupSize = 3;

enum class SeatRole { Controller, Coordinator, PseudoPilot };

inline const char* to_string(SeatRole r) {
  switch (r) {
    case SeatRole::Controller: return "CONTROLLER";
    case SeatRole::Coordinator: return "COORDINATOR";
    case SeatRole::PseudoPilot: return "PSEUDO_PILOT";
  }
  return "?";
}

struct SeatAssignment {
  SeatRole role = SeatRole::Controller;
  int station_index = 1;  // controller station for CONTROLLER/COORDINATOR, pilot station otherwise
  std::size_t student = 0;  // position within the group
  bool operator==(const SeatAssignment&) const = default;
};

struct RotationSlot {
  int slot_index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<SeatAssignment> seats;
  bool operator==(const RotationSlot&) const = default;
};

struct RotationSchedule {
  std::vector<RotationSlot> slots;
  // Set when the slots cannot give every student a turn as controller. The
  // schedule is still the best the formula allows.
  bool infeasible = false;
};

namespace detail {

inline RotationSchedule build_rotation(std::size_t group_size, double duration_s, int controller_stations) {
  RotationSchedule out;
  const auto stations = static_cast<std::size_t>(controller_stations);
  const double wanted = std::ceil(static_cast<double>(group_size) / static_cast<double>(2 * stations));

  double slot_len = std::clamp(duration_s / wanted, kMinSlotSeconds, kMaxSlotSeconds);
  std::size_t slot_count = static_cast<std::size_t>(std::floor(duration_s / slot_len + 1e-9));
  if (slot_count == 0) {
    // Shorter than one practice window: a single slot spans the exercise.
    slot_len = duration_s;
    slot_count = 1;
  }

  // One seat is always left for a pseudo pilot; coordinators fill before any
  // extra pilot stations.
  const std::size_t controllers = std::min(stations, group_size - 1);
  const std::size_t coordinators = std::min(stations, group_size - 1 - controllers);

  for (std::size_t s = 0; s < slot_count; ++s) {
    RotationSlot slot;
    slot.slot_index = static_cast<int>(s);
    slot.start_s = static_cast<double>(s) * slot_len;
    slot.end_s = static_cast<double>(s + 1) * slot_len;
    const std::size_t offset = (s * controllers) % group_size;
    for (std::size_t k = 0; k < group_size; ++k) {
      const std::size_t student = (offset + k) % group_size;
      if (k < controllers) {
        slot.seats.push_back({SeatRole::Controller, static_cast<int>(k + 1), student});
      } else if (k < controllers + coordinators) {
        slot.seats.push_back({SeatRole::Coordinator, static_cast<int>(k - controllers + 1), student});
      } else {
        slot.seats.push_back({SeatRole::PseudoPilot, static_cast<int>(k - controllers - coordinators + 1), student});
      }
    }
    out.slots.push_back(std::move(slot));
  }
  out.infeasible = slot_count * controllers < group_size;
  return out;
}

}  // namespace detail

// Slot length is duration / ceil(group / (2 * stations)), clamped to the
// 20-30 minute practice window.
inline RotationSchedule rotation_schedule(std::size_t group_size, double duration_s, int controller_stations) {
  if (group_size < kMinGroupSize) throw Error(ErrorCode::DomainError, "group_size must be >= 3");
  if (controller_stations < 1) throw Error(ErrorCode::DomainError, "controller_stations must be >= 1");
  if (!(duration_s > 0)) throw Error(ErrorCode::DomainError, "duration_s must be > 0");
  return detail::build_rotation(group_size, duration_s, controller_stations);
}

struct PlannedSession {
  int session_index = 0;
  std::vector<std::string> students;
  std::vector<RotationSlot> rotation;
  bool rotation_infeasible = false;
};

struct SessionPlan {
  std::size_t session_count = 0;
  std::vector<PlannedSession> sessions;
};

struct PlanOptions {
  double duration_s = 3600.0;
  int controller_stations = 2;
};

// Roster-order greedy split: ceil(n / capacity) sessions, all full except
// possibly the last.
inline SessionPlan plan_sessions(const std::vector<std::string>& student_ids, std::size_t session_capacity,
                                 const PlanOptions& options = {}) {
  if (session_capacity < kMinGroupSize) throw Error(ErrorCode::DomainError, "session capacity must be >= 3");
  if (options.controller_stations < 1) throw Error(ErrorCode::DomainError, "controller_stations must be >= 1");
  if (!(options.duration_s > 0)) throw Error(ErrorCode::DomainError, "duration_s must be > 0");

  SessionPlan plan;
  const std::size_t n = student_ids.size();
  plan.session_count = (n + session_capacity - 1) / session_capacity;
  for (std::size_t i = 0; i < plan.session_count; ++i) {
    PlannedSession session;
    session.session_index = static_cast<int>(i + 1);
    const auto begin = student_ids.begin() + static_cast<std::ptrdiff_t>(i * session_capacity);
    const auto end = student_ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, (i + 1) * session_capacity));
    session.students.assign(begin, end);
    if (session.students.size() >= kMinGroupSize) {
      auto rotation = detail::build_rotation(session.students.size(), options.duration_s, options.controller_stations);
      session.rotation = std::move(rotation.slots);
      session.rotation_infeasible = rotation.infeasible;
    } else {
      session.rotation_infeasible = true;
    }
    plan.sessions.push_back(std::move(session));
  }
  return plan;
}

}  // namespace atcsim::exercise
