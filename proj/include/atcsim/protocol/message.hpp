#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "atcsim/error.hpp"
#include "atcsim/exercise/scenario.hpp"
#include "atcsim/protocol/types.hpp"
#include "atcsim/sim/command.hpp"

namespace atcsim::protocol {

using nlohmann::json;

enum class RejectReason {
  Version,
  BlockFull,
  StationTaken,
  NoSuchSession,
  NoOccupant,
  InvalidStation,
  AlreadyAttached,
  TutorBusy,
  NotAttached,
  GrantExists,
  BadPhase,
  NotSupervisor,
  Forbidden,
  NotJoined,
  DuplicateSeq,
  UnknownCallsign,
  WaypointNotInScenario,
  DomainError,
  GraceExpired,
  StationReassigned,
  InvalidScenario,
  BadRequest,
};

inline constexpr std::array<std::string_view, 22> kRejectReasonNames = {
    "VERSION",          "BLOCK_FULL",    "STATION_TAKEN",    "NO_SUCH_SESSION", "NO_OCCUPANT",
    "INVALID_STATION",  "ALREADY_ATTACHED", "TUTOR_BUSY",    "NOT_ATTACHED",    "GRANT_EXISTS",
    "BAD_PHASE",        "NOT_SUPERVISOR", "FORBIDDEN",       "NOT_JOINED",      "DUPLICATE_SEQ",
    "UNKNOWN_CALLSIGN", "WAYPOINT_NOT_IN_SCENARIO", "DOMAIN_ERROR", "GRACE_EXPIRED", "STATION_REASSIGNED",
    "INVALID_SCENARIO", "BAD_REQUEST",
};

inline std::string_view to_string(RejectReason r) { return kRejectReasonNames[static_cast<std::size_t>(r)]; }

inline std::optional<RejectReason> reject_reason_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kRejectReasonNames.size(); ++i) {
    if (kRejectReasonNames[i] == s) return static_cast<RejectReason>(i);
  }
  return std::nullopt;
}

struct Hello {
  Role role = Role::Controller;
  std::optional<int> station_index;
  std::string client_name;
  std::string session_token;
  std::optional<std::string> resume_token;
  bool operator==(const Hello&) const = default;
};

struct Welcome {
  std::string client_id;
  Role role = Role::Controller;
  std::optional<StationId> station;
  std::optional<std::string> tutor_id;
  std::string resume_token;
  std::uint64_t last_seq = 0;
  std::uint64_t tick = 0;
  std::string phase;
  bool operator==(const Welcome&) const = default;
};

struct Reject {
  RejectReason reason = RejectReason::BadRequest;
  std::string detail;
  std::optional<std::uint64_t> ref_seq;
  bool operator==(const Reject&) const = default;
};

struct StateSnapshot {
  std::uint64_t tick = 0;
  std::string phase;
  std::vector<Track> tracks;
  std::string digest;
  std::vector<Alert> alerts;
  bool operator==(const StateSnapshot&) const = default;
};

struct StateDelta {
  std::uint64_t tick = 0;
  std::string phase;
  std::string base_digest;
  std::vector<MirrorOp> ops;
  std::string digest;
  std::vector<Alert> alerts;
  bool operator==(const StateDelta&) const = default;
};

struct PilotCmd {
  sim::PilotCommand command;
  bool operator==(const PilotCmd&) const = default;
};

struct MirrorFrameMsg {
  MirrorFrame frame;
  std::uint64_t tick = 0;
  std::string digest;  // digest of the picture after applying the frame
  std::vector<Alert> alerts;
  bool operator==(const MirrorFrameMsg&) const = default;
};

struct Pointer {
  PointerOverlay overlay;
  bool operator==(const Pointer&) const = default;
};

struct ControlGrantMsg {
  ControlGrant grant;
  bool operator==(const ControlGrantMsg&) const = default;
};

struct ControlRevoke {
  std::string tutor_id;
  StationId target_station;
  bool operator==(const ControlRevoke&) const = default;
};

struct ControlInput {
  std::string tutor_id;
  StationId target_station;
  sim::PilotCommand command;
  bool operator==(const ControlInput&) const = default;
};

struct Transmission {
  std::string frequency;
  std::string text;
  std::string from;  // station label or role of the speaker, filled by the host
  std::optional<std::string> tutor_id;
  bool operator==(const Transmission&) const = default;
};

enum class SupervisorVerb { LoadScenario, Start, Pause, Resume, Stop, InjectEvent, ReassignStation };

inline constexpr std::array<std::string_view, 7> kSupervisorVerbNames = {
    "LOAD_SCENARIO", "START", "PAUSE", "RESUME", "STOP", "INJECT_EVENT", "REASSIGN_STATION"};

inline std::string_view to_string(SupervisorVerb v) { return kSupervisorVerbNames[static_cast<std::size_t>(v)]; }

struct SupervisorCmd {
  SupervisorVerb verb = SupervisorVerb::Start;
  std::optional<std::string> scenario;           // LOAD_SCENARIO
  std::optional<exercise::EventKind> event_kind;  // INJECT_EVENT
  std::optional<std::string> callsign;           // INJECT_EVENT
  std::string description;
  std::optional<std::string> client_id;  // REASSIGN_STATION
  std::optional<int> station_index;      // REASSIGN_STATION
  bool operator==(const SupervisorCmd&) const = default;
};

struct Heartbeat {
  // Digest of the receiver's current picture; a mismatch with the host's
  // view triggers a full snapshot.
  std::optional<std::string> picture_digest;
  bool operator==(const Heartbeat&) const = default;
};

struct Bye {
  std::string reason;
  bool operator==(const Bye&) const = default;
};

using Payload = std::variant<Hello, Welcome, Reject, StateSnapshot, StateDelta, PilotCmd, MirrorFrameMsg, Pointer,
                             ControlGrantMsg, ControlRevoke, ControlInput, Transmission, SupervisorCmd, Heartbeat, Bye>;

inline constexpr std::array<std::string_view, std::variant_size_v<Payload>> kPayloadTags = {
    "HELLO",         "WELCOME",        "REJECT",        "STATE_SNAPSHOT", "STATE_DELTA",
    "PILOT_CMD",     "MIRROR_FRAME",   "POINTER",       "CONTROL_GRANT",  "CONTROL_REVOKE",
    "CONTROL_INPUT", "TRANSMISSION",   "SUPERVISOR_CMD", "HEARTBEAT",     "BYE"};

template <class T, std::size_t I = 0>
constexpr std::size_t payload_index() {
  if constexpr (std::is_same_v<T, std::variant_alternative_t<I, Payload>>) {
    return I;
  } else {
    return payload_index<T, I + 1>();
  }
}

struct Message {
  int protocol_version = kProtocolVersion;
  std::uint64_t seq = 0;
  std::uint64_t sent_at_tick = 0;
  std::string session_id;
  std::string sender;
  Payload payload;

  bool operator==(const Message&) const = default;

  std::string_view tag() const { return kPayloadTags[payload.index()]; }

  template <class T>
  bool is() const {
    return std::holds_alternative<T>(payload);
  }
  template <class T>
  const T& as() const {
    return std::get<T>(payload);
  }
};

namespace detail {

[[noreturn]] inline void decode_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::DecodeError, where + ": " + what);
}

// Strict field access: every key must be consumed, types must match.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) decode_fail(where_, "expected an object");
  }

  const json* find(std::string_view key) {
    seen_.insert(std::string(key));
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  const json& at(std::string_view key) {
    const json* v = find(key);
    if (!v) decode_fail(path(key), "missing");
    return *v;
  }

  std::string path(std::string_view key) const { return where_ + "." + std::string(key); }

  std::string str(std::string_view key) {
    const json& v = at(key);
    if (!v.is_string()) decode_fail(path(key), "expected string");
    return v.get<std::string>();
  }
  std::optional<std::string> opt_str(std::string_view key) {
    if (!find(key)) return std::nullopt;
    return str(key);
  }
  std::uint64_t u64(std::string_view key) {
    const json& v = at(key);
    if (!v.is_number_unsigned()) decode_fail(path(key), "expected non-negative integer");
    return v.get<std::uint64_t>();
  }
  std::optional<std::uint64_t> opt_u64(std::string_view key) {
    if (!find(key)) return std::nullopt;
    return u64(key);
  }
  int integer(std::string_view key) {
    const json& v = at(key);
    if (!v.is_number_integer()) decode_fail(path(key), "expected integer");
    return v.get<int>();
  }
  std::optional<int> opt_int(std::string_view key) {
    if (!find(key)) return std::nullopt;
    return integer(key);
  }
  double number(std::string_view key) {
    const json& v = at(key);
    if (!v.is_number()) decode_fail(path(key), "expected number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) decode_fail(path(key), "expected finite number");
    return d;
  }
  std::optional<double> opt_number(std::string_view key) {
    if (!find(key)) return std::nullopt;
    return number(key);
  }
  bool boolean(std::string_view key) {
    const json& v = at(key);
    if (!v.is_boolean()) decode_fail(path(key), "expected boolean");
    return v.get<bool>();
  }
  const json& array(std::string_view key) {
    const json& v = at(key);
    if (!v.is_array()) decode_fail(path(key), "expected array");
    return v;
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) decode_fail(path(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <class E, class F>
E enum_field(Fields& f, std::string_view key, F from_string) {
  const std::string s = f.str(key);
  const auto v = from_string(s);
  if (!v) decode_fail(f.path(key), "unknown value '" + s + "'");
  return *v;
}

// --- encoders -------------------------------------------------------------

inline json station_to_json(const StationId& s) {
  return {{"block_id", s.block_id}, {"kind", std::string(to_string(s.kind))}, {"index", s.index}};
}

inline json status_to_json(const sim::AircraftStatus& s) {
  return {{"emergency", s.emergency}, {"radio_failure", s.radio_failure}, {"go_around", s.go_around}};
}

inline json track_fields(const Track& t) {
  json j = {{"x_nm", t.position.x_nm},
            {"y_nm", t.position.y_nm},
            {"alt_ft", t.position.alt_ft},
            {"heading_deg", t.heading_deg},
            {"ground_speed_kt", t.ground_speed_kt},
            {"vertical_rate_fpm", t.vertical_rate_fpm},
            {"sector", t.sector},
            {"status", status_to_json(t.status)}};
  if (t.cleared_alt_ft) j["cleared_alt_ft"] = *t.cleared_alt_ft;
  return j;
}

inline json track_to_json(const Track& t) {
  json j = track_fields(t);
  j["callsign"] = t.callsign;
  return j;
}

inline json tracks_to_json(const std::vector<Track>& tracks) {
  json a = json::array();
  for (const auto& t : tracks) a.push_back(track_to_json(t));
  return a;
}

inline json op_to_json(const MirrorOp& op) {
  switch (op.kind) {
    case MirrorOpKind::Add: return {{"op", "ADD"}, {"track", track_to_json(op.track)}};
    case MirrorOpKind::Remove: return {{"op", "REMOVE"}, {"callsign", op.track.callsign}};
    case MirrorOpKind::Move: {
      json j = {{"op", "MOVE"}, {"callsign", op.track.callsign}, {"track", track_fields(op.track)}};
      return j;
    }
  }
  return {};
}

inline json ops_to_json(const std::vector<MirrorOp>& ops) {
  json a = json::array();
  for (const auto& op : ops) a.push_back(op_to_json(op));
  return a;
}

inline json alerts_to_json(const std::vector<Alert>& alerts) {
  json a = json::array();
  for (const auto& al : alerts) {
    json j = {{"kind", std::string(to_string(al.kind))},
              {"callsigns", al.callsigns},
              {"tick", al.tick},
              {"description", al.description}};
    if (al.lateral_nm) j["lateral_nm"] = *al.lateral_nm;
    if (al.vertical_ft) j["vertical_ft"] = *al.vertical_ft;
    a.push_back(std::move(j));
  }
  return a;
}

inline json command_to_json(const sim::PilotCommand& c) {
  json j = {{"callsign", c.callsign}, {"verb", std::string(sim::to_string(c.verb))}};
  if (c.verb == sim::CommandVerb::DirectTo) {
    j["waypoint"] = c.waypoint;
  } else {
    j["value"] = c.value;
  }
  if (!c.issued_by.empty()) j["issued_by"] = c.issued_by;
  return j;
}

inline json frame_to_json(const MirrorFrame& f) {
  json j = {{"target_station", station_to_json(f.target_station)}, {"base_digest", f.base_digest}};
  if (f.ops) j["ops"] = ops_to_json(*f.ops);
  if (f.full_snapshot) j["full_snapshot"] = tracks_to_json(*f.full_snapshot);
  return j;
}

struct PayloadEncoder {
  json operator()(const Hello& p) const {
    json j = {{"role", std::string(to_string(p.role))}, {"client_name", p.client_name}, {"session_token", p.session_token}};
    if (p.station_index) j["station_index"] = *p.station_index;
    if (p.resume_token) j["resume_token"] = *p.resume_token;
    return j;
  }
  json operator()(const Welcome& p) const {
    json j = {{"client_id", p.client_id}, {"role", std::string(to_string(p.role))}, {"resume_token", p.resume_token},
              {"last_seq", p.last_seq},   {"tick", p.tick},                         {"phase", p.phase}};
    if (p.station) j["station"] = station_to_json(*p.station);
    if (p.tutor_id) j["tutor_id"] = *p.tutor_id;
    return j;
  }
  json operator()(const Reject& p) const {
    json j = {{"reason", std::string(to_string(p.reason))}, {"detail", p.detail}};
    if (p.ref_seq) j["ref_seq"] = *p.ref_seq;
    return j;
  }
  json operator()(const StateSnapshot& p) const {
    return {{"tick", p.tick}, {"phase", p.phase}, {"tracks", tracks_to_json(p.tracks)}, {"digest", p.digest},
            {"alerts", alerts_to_json(p.alerts)}};
  }
  json operator()(const StateDelta& p) const {
    return {{"tick", p.tick},     {"phase", p.phase},   {"base_digest", p.base_digest}, {"ops", ops_to_json(p.ops)},
            {"digest", p.digest}, {"alerts", alerts_to_json(p.alerts)}};
  }
  json operator()(const PilotCmd& p) const { return {{"command", command_to_json(p.command)}}; }
  json operator()(const MirrorFrameMsg& p) const {
    return {{"frame", frame_to_json(p.frame)}, {"tick", p.tick}, {"digest", p.digest}, {"alerts", alerts_to_json(p.alerts)}};
  }
  json operator()(const Pointer& p) const {
    return {{"tutor_id", p.overlay.tutor_id},
            {"target_station", station_to_json(p.overlay.target_station)},
            {"x_nm", p.overlay.x_nm},
            {"y_nm", p.overlay.y_nm},
            {"shape", std::string(PointerOverlay::kShape)},
            {"color", std::string(PointerOverlay::kColor)},
            {"visible", p.overlay.visible}};
  }
  json operator()(const ControlGrantMsg& p) const {
    return {{"tutor_id", p.grant.tutor_id},
            {"target_station", station_to_json(p.grant.target_station)},
            {"granted_at_tick", p.grant.granted_at_tick},
            {"active", p.grant.active}};
  }
  json operator()(const ControlRevoke& p) const {
    return {{"tutor_id", p.tutor_id}, {"target_station", station_to_json(p.target_station)}};
  }
  json operator()(const ControlInput& p) const {
    return {{"tutor_id", p.tutor_id},
            {"target_station", station_to_json(p.target_station)},
            {"command", command_to_json(p.command)}};
  }
  json operator()(const Transmission& p) const {
    json j = {{"frequency", p.frequency}, {"text", p.text}, {"from", p.from}};
    if (p.tutor_id) j["tutor_id"] = *p.tutor_id;
    return j;
  }
  json operator()(const SupervisorCmd& p) const {
    json j = {{"verb", std::string(to_string(p.verb))}, {"description", p.description}};
    if (p.scenario) j["scenario"] = *p.scenario;
    if (p.event_kind) j["event_kind"] = std::string(exercise::to_string(*p.event_kind));
    if (p.callsign) j["callsign"] = *p.callsign;
    if (p.client_id) j["client_id"] = *p.client_id;
    if (p.station_index) j["station_index"] = *p.station_index;
    return j;
  }
  json operator()(const Heartbeat& p) const {
    json j = json::object();
    if (p.picture_digest) j["picture_digest"] = *p.picture_digest;
    return j;
  }
  json operator()(const Bye& p) const { return {{"reason", p.reason}}; }
};

// --- decoders -------------------------------------------------------------

inline StationId station_from_json(const json& j, const std::string& where) {
  Fields f(j, where);
  StationId s;
  s.block_id = f.str("block_id");
  s.kind = enum_field<StationKind>(f, "kind", station_kind_from_string);
  s.index = f.integer("index");
  if (s.index < 1) decode_fail(f.path("index"), "station index is 1-based");
  f.done();
  return s;
}

inline sim::AircraftStatus status_from_json(const json& j, const std::string& where) {
  Fields f(j, where);
  sim::AircraftStatus s{f.boolean("emergency"), f.boolean("radio_failure"), f.boolean("go_around")};
  f.done();
  return s;
}

inline void read_track_fields(Fields& f, Track& t) {
  t.position.x_nm = f.number("x_nm");
  t.position.y_nm = f.number("y_nm");
  t.position.alt_ft = f.number("alt_ft");
  t.heading_deg = f.number("heading_deg");
  if (!(t.heading_deg >= 0 && t.heading_deg < 360)) decode_fail(f.path("heading_deg"), "must be in [0,360)");
  t.ground_speed_kt = f.number("ground_speed_kt");
  t.vertical_rate_fpm = f.number("vertical_rate_fpm");
  t.cleared_alt_ft = f.opt_number("cleared_alt_ft");
  t.sector = f.str("sector");
  t.status = status_from_json(f.at("status"), f.path("status"));
}

inline Track track_from_json(const json& j, const std::string& where) {
  Fields f(j, where);
  Track t;
  t.callsign = f.str("callsign");
  read_track_fields(f, t);
  f.done();
  return t;
}

inline std::vector<Track> tracks_from_json(const json& a, const std::string& where) {
  std::vector<Track> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(track_from_json(a[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline MirrorOp op_from_json(const json& j, const std::string& where) {
  Fields f(j, where);
  MirrorOp op;
  const std::string kind = f.str("op");
  if (kind == "ADD") {
    op.kind = MirrorOpKind::Add;
    op.track = track_from_json(f.at("track"), f.path("track"));
  } else if (kind == "REMOVE") {
    op.kind = MirrorOpKind::Remove;
    op.track.callsign = f.str("callsign");
  } else if (kind == "MOVE") {
    op.kind = MirrorOpKind::Move;
    op.track.callsign = f.str("callsign");
    Fields tf(f.at("track"), f.path("track"));
    read_track_fields(tf, op.track);
    tf.done();
  } else {
    decode_fail(f.path("op"), "unknown op '" + kind + "'");
  }
  f.done();
  return op;
}

inline std::vector<MirrorOp> ops_from_json(const json& a, const std::string& where) {
  std::vector<MirrorOp> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(op_from_json(a[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<Alert> alerts_from_json(const json& a, const std::string& where) {
  std::vector<Alert> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    Fields f(a[i], where + "[" + std::to_string(i) + "]");
    Alert al;
    al.kind = enum_field<AlertKind>(f, "kind", alert_kind_from_string);
    const json& cs = f.array("callsigns");
    for (const auto& c : cs) {
      if (!c.is_string()) decode_fail(f.path("callsigns"), "expected strings");
      al.callsigns.push_back(c.get<std::string>());
    }
    al.tick = f.u64("tick");
    al.lateral_nm = f.opt_number("lateral_nm");
    al.vertical_ft = f.opt_number("vertical_ft");
    al.description = f.str("description");
    f.done();
    out.push_back(std::move(al));
  }
  return out;
}

inline sim::PilotCommand command_from_json(const json& j, const std::string& where) {
  Fields f(j, where);
  sim::PilotCommand c;
  c.callsign = f.str("callsign");
  c.verb = enum_field<sim::CommandVerb>(f, "verb", sim::verb_from_string);
  if (c.verb == sim::CommandVerb::DirectTo) {
    c.waypoint = f.str("waypoint");
  } else {
    c.value = f.number("value");
  }
  c.issued_by = f.opt_str("issued_by").value_or("");
  f.done();
  try {
    sim::check_command_domain(c);
  } catch (const Error& e) {
    decode_fail(where, e.what());
  }
  return c;
}

inline MirrorFrame frame_from_json(const json& j, const std::string& where) {
  Fields f(j, where);
  MirrorFrame fr;
  fr.target_station = station_from_json(f.at("target_station"), f.path("target_station"));
  fr.base_digest = f.str("base_digest");
  if (f.find("ops")) fr.ops = ops_from_json(f.array("ops"), f.path("ops"));
  if (f.find("full_snapshot")) fr.full_snapshot = tracks_from_json(f.array("full_snapshot"), f.path("full_snapshot"));
  if (fr.ops.has_value() == fr.full_snapshot.has_value()) decode_fail(where, "exactly one of ops/full_snapshot");
  f.done();
  return fr;
}

inline Payload payload_from_json(std::size_t index, const json& j) {
  const std::string where = "payload";
  Fields f(j, where);
  f.find("type");
  Payload out;
  switch (index) {
    case 0: {
      Hello p;
      p.role = enum_field<Role>(f, "role", role_from_string);
      p.station_index = f.opt_int("station_index");
      p.client_name = f.str("client_name");
      p.session_token = f.str("session_token");
      p.resume_token = f.opt_str("resume_token");
      out = p;
      break;
    }
    case 1: {
      Welcome p;
      p.client_id = f.str("client_id");
      p.role = enum_field<Role>(f, "role", role_from_string);
      if (const json* s = f.find("station")) p.station = station_from_json(*s, f.path("station"));
      p.tutor_id = f.opt_str("tutor_id");
      p.resume_token = f.str("resume_token");
      p.last_seq = f.u64("last_seq");
      p.tick = f.u64("tick");
      p.phase = f.str("phase");
      out = p;
      break;
    }
    case 2: {
      Reject p;
      p.reason = enum_field<RejectReason>(f, "reason", reject_reason_from_string);
      p.detail = f.str("detail");
      p.ref_seq = f.opt_u64("ref_seq");
      out = p;
      break;
    }
    case 3: {
      StateSnapshot p;
      p.tick = f.u64("tick");
      p.phase = f.str("phase");
      p.tracks = tracks_from_json(f.array("tracks"), f.path("tracks"));
      p.digest = f.str("digest");
      p.alerts = alerts_from_json(f.array("alerts"), f.path("alerts"));
      out = p;
      break;
    }
    case 4: {
      StateDelta p;
      p.tick = f.u64("tick");
      p.phase = f.str("phase");
      p.base_digest = f.str("base_digest");
      p.ops = ops_from_json(f.array("ops"), f.path("ops"));
      p.digest = f.str("digest");
      p.alerts = alerts_from_json(f.array("alerts"), f.path("alerts"));
      out = p;
      break;
    }
    case 5: {
      out = PilotCmd{command_from_json(f.at("command"), f.path("command"))};
      break;
    }
    case 6: {
      MirrorFrameMsg p;
      p.frame = frame_from_json(f.at("frame"), f.path("frame"));
      p.tick = f.u64("tick");
      p.digest = f.str("digest");
      p.alerts = alerts_from_json(f.array("alerts"), f.path("alerts"));
      out = p;
      break;
    }
    case 7: {
      Pointer p;
      p.overlay.tutor_id = f.str("tutor_id");
      p.overlay.target_station = station_from_json(f.at("target_station"), f.path("target_station"));
      p.overlay.x_nm = f.number("x_nm");
      p.overlay.y_nm = f.number("y_nm");
      if (f.str("shape") != PointerOverlay::kShape) decode_fail(f.path("shape"), "pointer shape is always CIRCLE");
      if (f.str("color") != PointerOverlay::kColor) decode_fail(f.path("color"), "pointer color is always RED");
      p.overlay.visible = f.boolean("visible");
      out = p;
      break;
    }
    case 8: {
      ControlGrantMsg p;
      p.grant.tutor_id = f.str("tutor_id");
      p.grant.target_station = station_from_json(f.at("target_station"), f.path("target_station"));
      p.grant.granted_at_tick = f.u64("granted_at_tick");
      p.grant.active = f.boolean("active");
      out = p;
      break;
    }
    case 9: {
      ControlRevoke p;
      p.tutor_id = f.str("tutor_id");
      p.target_station = station_from_json(f.at("target_station"), f.path("target_station"));
      out = p;
      break;
    }
    case 10: {
      ControlInput p;
      p.tutor_id = f.str("tutor_id");
      p.target_station = station_from_json(f.at("target_station"), f.path("target_station"));
      p.command = command_from_json(f.at("command"), f.path("command"));
      out = p;
      break;
    }
    case 11: {
      Transmission p;
      p.frequency = f.str("frequency");
      p.text = f.str("text");
      p.from = f.str("from");
      p.tutor_id = f.opt_str("tutor_id");
      out = p;
      break;
    }
    case 12: {
      SupervisorCmd p;
      const std::string verb = f.str("verb");
      bool known = false;
      for (std::size_t i = 0; i < kSupervisorVerbNames.size(); ++i) {
        if (kSupervisorVerbNames[i] == verb) {
          p.verb = static_cast<SupervisorVerb>(i);
          known = true;
        }
      }
      if (!known) decode_fail(f.path("verb"), "unknown verb '" + verb + "'");
      p.scenario = f.opt_str("scenario");
      if (f.find("event_kind")) p.event_kind = enum_field<exercise::EventKind>(f, "event_kind", exercise::event_kind_from_string);
      p.callsign = f.opt_str("callsign");
      p.description = f.str("description");
      p.client_id = f.opt_str("client_id");
      p.station_index = f.opt_int("station_index");
      if (p.verb == SupervisorVerb::InjectEvent && (!p.event_kind || !p.callsign)) {
        decode_fail(where, "INJECT_EVENT needs event_kind and callsign");
      }
      if (p.verb == SupervisorVerb::LoadScenario && !p.scenario) decode_fail(where, "LOAD_SCENARIO needs scenario");
      if (p.verb == SupervisorVerb::ReassignStation && (!p.client_id || !p.station_index)) {
        decode_fail(where, "REASSIGN_STATION needs client_id and station_index");
      }
      out = p;
      break;
    }
    case 13: {
      out = Heartbeat{f.opt_str("picture_digest")};
      break;
    }
    case 14: {
      out = Bye{f.str("reason")};
      break;
    }
    default: decode_fail(where, "unhandled tag");
  }
  f.done();
  return out;
}

}  // namespace detail

inline json to_json(const Message& m) {
  json payload = std::visit(detail::PayloadEncoder{}, m.payload);
  payload["type"] = std::string(m.tag());
  return {{"protocol_version", m.protocol_version},
          {"seq", m.seq},
          {"sent_at_tick", m.sent_at_tick},
          {"session_id", m.session_id},
          {"sender", m.sender},
          {"payload", std::move(payload)}};
}

// Canonical UTF-8 JSON, one message per frame.
inline std::string encode_message(const Message& m) { return to_json(m).dump(); }

inline Message from_json(const json& j, int expected_version = kProtocolVersion) {
  detail::Fields env(j, "message");
  Message m;
  m.protocol_version = env.integer("protocol_version");
  m.seq = env.u64("seq");
  m.sent_at_tick = env.u64("sent_at_tick");
  m.session_id = env.str("session_id");
  m.sender = env.str("sender");
  if (m.protocol_version != expected_version) {
    throw Error(ErrorCode::VersionError, "protocol_version " + std::to_string(m.protocol_version) +
                                             " (host speaks " + std::to_string(expected_version) + ")");
  }
  const json& payload = env.at("payload");
  if (!payload.is_object()) detail::decode_fail("payload", "expected an object");
  const auto type = payload.find("type");
  if (type == payload.end() || !type->is_string()) detail::decode_fail("payload.type", "missing tag");
  const std::string tag = type->get<std::string>();
  std::size_t index = kPayloadTags.size();
  for (std::size_t i = 0; i < kPayloadTags.size(); ++i) {
    if (kPayloadTags[i] == tag) index = i;
  }
  if (index == kPayloadTags.size()) detail::decode_fail("payload.type", "unknown payload tag '" + tag + "'");
  m.payload = detail::payload_from_json(index, payload);
  env.done();
  return m;
}

inline Message decode_message(std::string_view bytes, int expected_version = kProtocolVersion) {
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::DecodeError, std::string("malformed frame: ") + e.what());
  } catch (const json::type_error& e) {
    throw Error(ErrorCode::DecodeError, std::string("malformed frame: ") + e.what());
  }
  return from_json(j, expected_version);
}

// Builds a message; used by both host and scripted clients.
template <class P>
Message make_message(std::string session_id, std::string sender, std::uint64_t seq, std::uint64_t tick, P payload) {
  Message m;
  m.seq = seq;
  m.sent_at_tick = tick;
  m.session_id = std::move(session_id);
  m.sender = std::move(sender);
  m.payload = std::move(payload);
  return m;
}

}  // namespace atcsim::protocol
