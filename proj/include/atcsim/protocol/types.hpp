#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atcsim/digest.hpp"
#include "atcsim/sim/types.hpp"

namespace atcsim::protocol {

inline constexpr int kProtocolVersion = 1;

enum class Role { Controller, Coordinator, PseudoPilot, Supervisor, RemoteTutor };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::Controller: return "CONTROLLER";
    case Role::Coordinator: return "COORDINATOR";
    case Role::PseudoPilot: return "PSEUDO_PILOT";
    case Role::Supervisor: return "SUPERVISOR";
    case Role::RemoteTutor: return "REMOTE_TUTOR";
  }
  return "?";
}

inline std::optional<Role> role_from_string(std::string_view s) {
  if (s == "CONTROLLER") return Role::Controller;
  if (s == "COORDINATOR") return Role::Coordinator;
  if (s == "PSEUDO_PILOT") return Role::PseudoPilot;
  if (s == "SUPERVISOR") return Role::Supervisor;
  if (s == "REMOTE_TUTOR") return Role::RemoteTutor;
  return std::nullopt;
}

enum class StationKind { Controller, Pilot, Supervisor };

inline std::string_view to_string(StationKind k) {
  switch (k) {
    case StationKind::Controller: return "CONTROLLER_STN";
    case StationKind::Pilot: return "PILOT_STN";
    case StationKind::Supervisor: return "SUPERVISOR_STN";
  }
  return "?";
}

inline std::optional<StationKind> station_kind_from_string(std::string_view s) {
  if (s == "CONTROLLER_STN") return StationKind::Controller;
  if (s == "PILOT_STN") return StationKind::Pilot;
  if (s == "SUPERVISOR_STN") return StationKind::Supervisor;
  return std::nullopt;
}

struct StationId {
  std::string block_id;
  StationKind kind = StationKind::Controller;
  int index = 1;  // 1-based

  auto operator<=>(const StationId&) const = default;
  bool operator==(const StationId&) const = default;

  // "B1/C3", "B1/P10", "B1/S1"
  std::string label() const {
    const char k = kind == StationKind::Controller ? 'C' : kind == StationKind::Pilot ? 'P' : 'S';
    return block_id + "/" + k + std::to_string(index);
  }
};

// What a radar scope shows for one aircraft.
struct Track {
  std::string callsign;
  sim::Position position;
  double heading_deg = 0.0;
  double ground_speed_kt = 0.0;
  double vertical_rate_fpm = 0.0;
  std::optional<double> cleared_alt_ft;
  std::string sector;
  sim::AircraftStatus status;

  bool operator==(const Track&) const = default;
};

using Picture = std::map<std::string, Track>;

inline Track track_of(const sim::AircraftState& a) {
  return {a.callsign, a.position, a.heading_deg, a.ground_speed_kt, a.vertical_rate_fpm,
          a.cleared_alt_ft, a.controlling_sector, a.status};
}

inline Picture picture_of(const sim::WorldState& world) {
  Picture p;
  for (const auto& a : world.aircraft) p.emplace(a.callsign, track_of(a));
  return p;
}

inline std::string picture_digest(const Picture& picture) {
  std::string out = "picture/1\n";
  for (const auto& [callsign, t] : picture) {
    out += callsign;
    for (const double v : {t.position.x_nm, t.position.y_nm, t.position.alt_ft, t.heading_deg, t.ground_speed_kt,
                           t.vertical_rate_fpm}) {
      out += ' ';
      out += canonical_number(v);
    }
    out += " ca=";
    out += t.cleared_alt_ft ? canonical_number(*t.cleared_alt_ft) : std::string("-");
    out += " sector=" + t.sector + " st=";
    out += t.status.emergency ? 'E' : '-';
    out += t.status.radio_failure ? 'R' : '-';
    out += t.status.go_around ? 'G' : '-';
    out += '\n';
  }
  return sha256_hex(out);
}

enum class MirrorOpKind { Add, Remove, Move };

// ADD carries the whole track, REMOVE only the callsign, MOVE the track's
// mutable fields (everything but the callsign).
struct MirrorOp {
  MirrorOpKind kind = MirrorOpKind::Move;
  Track track;

  bool operator==(const MirrorOp&) const = default;
};

struct MirrorFrame {
  StationId target_station;
  std::string base_digest;
  std::optional<std::vector<MirrorOp>> ops;
  std::optional<std::vector<Track>> full_snapshot;

  bool operator==(const MirrorFrame&) const = default;
};

// Tutor identification drawn on the student's scope. Shape and colour are
// fixed by the protocol.
struct PointerOverlay {
  static constexpr std::string_view kShape = "CIRCLE";
  static constexpr std::string_view kColor = "RED";

  std::string tutor_id;
  StationId target_station;
  double x_nm = 0.0;
  double y_nm = 0.0;
  bool visible = true;

  bool operator==(const PointerOverlay&) const = default;
};

struct ControlGrant {
  std::string tutor_id;
  StationId target_station;
  std::uint64_t granted_at_tick = 0;
  bool active = true;

  bool operator==(const ControlGrant&) const = default;
};

struct TutorAttachment {
  std::string tutor_id;
  StationId controller_station;

  bool operator==(const TutorAttachment&) const = default;
};

enum class AlertKind { Separation, EmergencyDeclared, RadioFailure, GoAround };

inline std::string_view to_string(AlertKind k) {
  switch (k) {
    case AlertKind::Separation: return "SEPARATION";
    case AlertKind::EmergencyDeclared: return "EMERGENCY_DECLARED";
    case AlertKind::RadioFailure: return "RADIO_FAILURE";
    case AlertKind::GoAround: return "GO_AROUND";
  }
  return "?";
}

inline std::optional<AlertKind> alert_kind_from_string(std::string_view s) {
  if (s == "SEPARATION") return AlertKind::Separation;
  if (s == "EMERGENCY_DECLARED") return AlertKind::EmergencyDeclared;
  if (s == "RADIO_FAILURE") return AlertKind::RadioFailure;
  if (s == "GO_AROUND") return AlertKind::GoAround;
  return std::nullopt;
}

struct Alert {
  AlertKind kind = AlertKind::Separation;
  std::vector<std::string> callsigns;
  std::uint64_t tick = 0;
  std::optional<double> lateral_nm;
  std::optional<double> vertical_ft;
  std::string description;

  bool operator==(const Alert&) const = default;
};

inline Alert separation_alert(const sim::SeparationEvent& e) {
  return {AlertKind::Separation, {e.first, e.second}, e.tick_index, e.lateral_nm, e.vertical_ft, ""};
}

}  // namespace atcsim::protocol
