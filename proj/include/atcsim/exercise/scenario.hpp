#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "atcsim/digest.hpp"
#include "atcsim/error.hpp"
#include "atcsim/sim/types.hpp"

namespace atcsim::exercise {

using nlohmann::json;

inline constexpr int kScenarioSchemaVersion = 1;

struct Point2 {
  double x_nm = 0.0;
  double y_nm = 0.0;
  bool operator==(const Point2&) const = default;
};

struct Sector {
  std::string id;
  std::vector<Point2> boundary;
  std::string frequency_label;
  bool operator==(const Sector&) const = default;
};

struct InitialState {
  double x_nm = 0.0;
  double y_nm = 0.0;
  double alt_ft = 0.0;
  double heading_deg = 0.0;
  double ground_speed_kt = 0.0;
  double vertical_rate_fpm = 0.0;
  std::optional<double> cleared_heading_deg;
  std::optional<double> cleared_alt_ft;
  std::optional<double> cleared_speed_kt;
  bool operator==(const InitialState&) const = default;
};

struct ScheduledEntry {
  std::string callsign;
  std::uint64_t entry_tick = 0;
  InitialState initial;
  std::string sector;
  std::vector<std::string> route;
  bool operator==(const ScheduledEntry&) const = default;
};

enum class EventKind { EmergencyDeclared, RadioFailure, GoAround };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::EmergencyDeclared: return "EMERGENCY_DECLARED";
    case EventKind::RadioFailure: return "RADIO_FAILURE";
    case EventKind::GoAround: return "GO_AROUND";
  }
  return "?";
}

inline std::optional<EventKind> event_kind_from_string(std::string_view s) {
  if (s == "EMERGENCY_DECLARED") return EventKind::EmergencyDeclared;
  if (s == "RADIO_FAILURE") return EventKind::RadioFailure;
  if (s == "GO_AROUND") return EventKind::GoAround;
  return std::nullopt;
}

struct ScriptedEvent {
  std::uint64_t trigger_tick = 0;
  EventKind kind = EventKind::EmergencyDeclared;
  std::string callsign;
  std::string description;
  bool operator==(const ScriptedEvent&) const = default;
};

struct Scenario {
  int schema_version = kScenarioSchemaVersion;
  std::string title;
  double duration_s = 3600.0;
  double tick_seconds = 1.0;
  sim::SeparationMinima minima;
  std::vector<sim::Waypoint> waypoints;
  std::vector<Sector> sectors;
  std::vector<ScheduledEntry> schedule;
  std::vector<ScriptedEvent> events;
  // Fields not understood by this schema version, keyed by JSON pointer.
  // Only populated for documents written against a newer schema.
  std::map<std::string, json> preserved_fields;

  bool operator==(const Scenario&) const = default;

  std::uint64_t duration_ticks() const {
    return static_cast<std::uint64_t>(std::floor(duration_s / tick_seconds + 1e-9));
  }

  sim::WaypointTable waypoint_table() const {
    sim::WaypointTable table;
    for (const auto& w : waypoints) table.emplace(w.name, w);
    return table;
  }
};

enum class Severity { Error, Warning };

struct ValidationIssue {
  Severity severity = Severity::Error;
  std::string code;
  std::string path;
  std::string message;
  bool operator==(const ValidationIssue&) const = default;
};

// "SEVERITY CODE path: message"
inline std::string render_issue(const ValidationIssue& issue) {
  return std::string(issue.severity == Severity::Error ? "ERROR" : "WARNING") + ' ' + issue.code + ' ' + issue.path +
         ": " + issue.message;
}

struct ParsedScenario {
  Scenario scenario;
  std::vector<ValidationIssue> warnings;
};

namespace detail {

// Walks one JSON object, tracking which keys were consumed so leftovers can
// be reported with their full path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::SchemaError, (path.empty() ? std::string("/") : path) + ": " + what);
  }

  std::string child(std::string_view key) const { return path_ + "/" + std::string(key); }

  const json* get(std::string_view key) {
    seen_.insert(std::string(key));
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(std::string_view key) {
    const json* v = get(key);
    if (!v) fail(child(key), "required field missing");
    return *v;
  }

  double number(std::string_view key) { return as_number(require(key), child(key)); }

  std::optional<double> optional_number(std::string_view key) {
    const json* v = get(key);
    if (!v || v->is_null()) return std::nullopt;
    return as_number(*v, child(key));
  }

  std::string string(std::string_view key) { return as_string(require(key), child(key)); }

  std::optional<std::string> optional_string(std::string_view key) {
    const json* v = get(key);
    if (!v || v->is_null()) return std::nullopt;
    return as_string(*v, child(key));
  }

  std::uint64_t unsigned_integer(std::string_view key) {
    const json& v = require(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(child(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  const json& array(std::string_view key) {
    const json& v = require(key);
    if (!v.is_array()) fail(child(key), "expected an array");
    return v;
  }

  // Unknown keys either fail or are recorded for round-tripping.
  void finish(bool strict, std::map<std::string, json>& preserved, std::vector<ValidationIssue>& warnings) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (seen_.count(it.key())) continue;
      const std::string p = child(it.key());
      if (strict) fail(p, "unknown field");
      preserved[p] = it.value();
      warnings.push_back({Severity::Warning, "UnknownField", p, "field not in schema version " +
                                                                    std::to_string(kScenarioSchemaVersion) +
                                                                    "; preserved"});
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "expected a finite number");
    return d;
  }

  static std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  auto orient = [](const Point2& p, const Point2& q, const Point2& r) {
    const double v = (q.x_nm - p.x_nm) * (r.y_nm - p.y_nm) - (q.y_nm - p.y_nm) * (r.x_nm - p.x_nm);
    return (v > 0) - (v < 0);
  };
  auto on_segment = [](const Point2& p, const Point2& q, const Point2& r) {
    return std::min(p.x_nm, q.x_nm) <= r.x_nm && r.x_nm <= std::max(p.x_nm, q.x_nm) &&
           std::min(p.y_nm, q.y_nm) <= r.y_nm && r.y_nm <= std::max(p.y_nm, q.y_nm);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, b, c)) return true;
  if (o2 == 0 && on_segment(a, b, d)) return true;
  if (o3 == 0 && on_segment(c, d, a)) return true;
  if (o4 == 0 && on_segment(c, d, b)) return true;
  return false;
}

}  // namespace detail

inline bool polygon_is_simple(const std::vector<Point2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (detail::segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

inline bool is_waypoint_name(std::string_view s) {
  static const std::regex re("[A-Z0-9_]+");
  return std::regex_match(s.begin(), s.end(), re);
}

// Structural parse plus invariant checks that make a Scenario well-formed.
// Issues that leave the document usable (duplicate callsigns, late spawns,
// conflicts at entry, ...) are reported by validate_scenario instead.
inline ParsedScenario parse_scenario_document(const json& doc) {
  ParsedScenario out;
  Scenario& s = out.scenario;
  detail::ObjectReader top(doc, "");

  const json& version = top.require("schema_version");
  if (!version.is_number_integer() || version.get<std::int64_t>() < 1) {
    detail::ObjectReader::fail("/schema_version", "expected a positive integer");
  }
  s.schema_version = version.get<int>();
  // Documents from a newer schema are accepted; their extra fields are kept.
  const bool strict = s.schema_version == kScenarioSchemaVersion;
  if (s.schema_version > kScenarioSchemaVersion) {
    out.warnings.push_back({Severity::Warning, "NewerSchema", "/schema_version",
                            "document version " + std::to_string(s.schema_version) + " is newer than " +
                                std::to_string(kScenarioSchemaVersion)});
  }

  s.title = top.optional_string("title").value_or("");
  s.duration_s = top.optional_number("duration_s").value_or(3600.0);
  if (!(s.duration_s > 0)) detail::ObjectReader::fail("/duration_s", "must be > 0");
  s.tick_seconds = top.optional_number("tick_seconds").value_or(1.0);
  if (!(s.tick_seconds > 0)) detail::ObjectReader::fail("/tick_seconds", "must be > 0");

  if (const json* m = top.get("minima"); m && !m->is_null()) {
    detail::ObjectReader mr(*m, "/minima");
    s.minima.lateral_nm = mr.optional_number("lateral_nm").value_or(5.0);
    s.minima.vertical_ft = mr.optional_number("vertical_ft").value_or(1000.0);
    if (!(s.minima.lateral_nm > 0)) detail::ObjectReader::fail("/minima/lateral_nm", "must be > 0");
    if (!(s.minima.vertical_ft > 0)) detail::ObjectReader::fail("/minima/vertical_ft", "must be > 0");
    mr.finish(strict, s.preserved_fields, out.warnings);
  }

  std::set<std::string> waypoint_names;
  const json& wps = top.array("waypoints");
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const std::string path = "/waypoints/" + std::to_string(i);
    detail::ObjectReader r(wps[i], path);
    sim::Waypoint w;
    w.name = r.string("name");
    if (!is_waypoint_name(w.name)) detail::ObjectReader::fail(path + "/name", "must match [A-Z0-9_]+");
    if (!waypoint_names.insert(w.name).second) detail::ObjectReader::fail(path + "/name", "duplicate waypoint " + w.name);
    w.x_nm = r.number("x_nm");
    w.y_nm = r.number("y_nm");
    r.finish(strict, s.preserved_fields, out.warnings);
    s.waypoints.push_back(std::move(w));
  }

  std::set<std::string> sector_ids;
  const json& secs = top.array("sectors");
  if (secs.empty()) detail::ObjectReader::fail("/sectors", "at least one sector is required");
  for (std::size_t i = 0; i < secs.size(); ++i) {
    const std::string path = "/sectors/" + std::to_string(i);
    detail::ObjectReader r(secs[i], path);
    Sector sec;
    sec.id = r.string("id");
    if (sec.id.empty()) detail::ObjectReader::fail(path + "/id", "must not be empty");
    if (!sector_ids.insert(sec.id).second) detail::ObjectReader::fail(path + "/id", "duplicate sector " + sec.id);
    sec.frequency_label = r.optional_string("frequency_label").value_or("");
    const json& boundary = r.array("boundary");
    for (std::size_t k = 0; k < boundary.size(); ++k) {
      detail::ObjectReader pr(boundary[k], path + "/boundary/" + std::to_string(k));
      sec.boundary.push_back({pr.number("x_nm"), pr.number("y_nm")});
      pr.finish(strict, s.preserved_fields, out.warnings);
    }
    if (sec.boundary.size() < 3) detail::ObjectReader::fail(path + "/boundary", "polygon needs at least 3 vertices");
    if (!polygon_is_simple(sec.boundary)) detail::ObjectReader::fail(path + "/boundary", "polygon is self-intersecting");
    r.finish(strict, s.preserved_fields, out.warnings);
    s.sectors.push_back(std::move(sec));
  }

  const json& sched = top.array("schedule");
  for (std::size_t i = 0; i < sched.size(); ++i) {
    const std::string path = "/schedule/" + std::to_string(i);
    detail::ObjectReader r(sched[i], path);
    ScheduledEntry e;
    e.callsign = r.string("callsign");
    if (e.callsign.empty() || !is_waypoint_name(e.callsign)) {
      detail::ObjectReader::fail(path + "/callsign", "must match [A-Z0-9_]+");
    }
    e.entry_tick = r.unsigned_integer("entry_tick");
    e.sector = r.string("sector");
    if (!sector_ids.count(e.sector)) detail::ObjectReader::fail(path + "/sector", "undefined sector " + e.sector);

    if (const json* route = r.get("route"); route && !route->is_null()) {
      if (!route->is_array()) detail::ObjectReader::fail(path + "/route", "expected an array");
      for (std::size_t k = 0; k < route->size(); ++k) {
        const std::string wp = detail::ObjectReader::as_string((*route)[k], path + "/route/" + std::to_string(k));
        if (!waypoint_names.count(wp)) {
          detail::ObjectReader::fail(path + "/route/" + std::to_string(k), "undefined waypoint " + wp);
        }
        e.route.push_back(wp);
      }
    }

    detail::ObjectReader ir(r.require("initial"), path + "/initial");
    InitialState& init = e.initial;
    init.x_nm = ir.number("x_nm");
    init.y_nm = ir.number("y_nm");
    init.alt_ft = ir.number("alt_ft");
    if (init.alt_ft < 0) detail::ObjectReader::fail(path + "/initial/alt_ft", "must be >= 0");
    init.heading_deg = ir.number("heading_deg");
    if (!(init.heading_deg >= 0 && init.heading_deg < 360)) {
      detail::ObjectReader::fail(path + "/initial/heading_deg", "must be in [0,360)");
    }
    init.ground_speed_kt = ir.number("ground_speed_kt");
    if (init.ground_speed_kt < 0) detail::ObjectReader::fail(path + "/initial/ground_speed_kt", "must be >= 0");
    init.vertical_rate_fpm = ir.optional_number("vertical_rate_fpm").value_or(0.0);
    init.cleared_heading_deg = ir.optional_number("cleared_heading_deg");
    if (init.cleared_heading_deg && !(*init.cleared_heading_deg >= 0 && *init.cleared_heading_deg < 360)) {
      detail::ObjectReader::fail(path + "/initial/cleared_heading_deg", "must be in [0,360)");
    }
    init.cleared_alt_ft = ir.optional_number("cleared_alt_ft");
    if (init.cleared_alt_ft && *init.cleared_alt_ft < 0) {
      detail::ObjectReader::fail(path + "/initial/cleared_alt_ft", "must be >= 0");
    }
    init.cleared_speed_kt = ir.optional_number("cleared_speed_kt");
    if (init.cleared_speed_kt && *init.cleared_speed_kt < 0) {
      detail::ObjectReader::fail(path + "/initial/cleared_speed_kt", "must be >= 0");
    }
    ir.finish(strict, s.preserved_fields, out.warnings);
    r.finish(strict, s.preserved_fields, out.warnings);
    s.schedule.push_back(std::move(e));
  }

  if (const json* evs = top.get("events"); evs && !evs->is_null()) {
    if (!evs->is_array()) detail::ObjectReader::fail("/events", "expected an array");
    for (std::size_t i = 0; i < evs->size(); ++i) {
      const std::string path = "/events/" + std::to_string(i);
      detail::ObjectReader r((*evs)[i], path);
      ScriptedEvent ev;
      ev.trigger_tick = r.unsigned_integer("trigger_tick");
      const std::string kind = r.string("kind");
      const auto k = event_kind_from_string(kind);
      if (!k) detail::ObjectReader::fail(path + "/kind", "unknown event kind " + kind);
      ev.kind = *k;
      ev.callsign = r.string("callsign");
      ev.description = r.optional_string("description").value_or("");
      r.finish(strict, s.preserved_fields, out.warnings);
      s.events.push_back(std::move(ev));
    }
  }

  top.finish(strict, s.preserved_fields, out.warnings);
  return out;
}

inline ParsedScenario parse_scenario_with_warnings(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  return parse_scenario_document(doc);
}

inline Scenario parse_scenario(std::string_view bytes) { return parse_scenario_with_warnings(bytes).scenario; }

inline json to_json(const Scenario& s) {
  json doc;
  doc["schema_version"] = s.schema_version;
  doc["title"] = s.title;
  doc["duration_s"] = s.duration_s;
  doc["tick_seconds"] = s.tick_seconds;
  doc["minima"] = {{"lateral_nm", s.minima.lateral_nm}, {"vertical_ft", s.minima.vertical_ft}};
  doc["waypoints"] = json::array();
  for (const auto& w : s.waypoints) doc["waypoints"].push_back({{"name", w.name}, {"x_nm", w.x_nm}, {"y_nm", w.y_nm}});
  doc["sectors"] = json::array();
  for (const auto& sec : s.sectors) {
    json b = json::array();
    for (const auto& p : sec.boundary) b.push_back({{"x_nm", p.x_nm}, {"y_nm", p.y_nm}});
    doc["sectors"].push_back({{"id", sec.id}, {"frequency_label", sec.frequency_label}, {"boundary", b}});
  }
  doc["schedule"] = json::array();
  for (const auto& e : s.schedule) {
    json init = {{"x_nm", e.initial.x_nm},
                 {"y_nm", e.initial.y_nm},
                 {"alt_ft", e.initial.alt_ft},
                 {"heading_deg", e.initial.heading_deg},
                 {"ground_speed_kt", e.initial.ground_speed_kt},
                 {"vertical_rate_fpm", e.initial.vertical_rate_fpm}};
    if (e.initial.cleared_heading_deg) init["cleared_heading_deg"] = *e.initial.cleared_heading_deg;
    if (e.initial.cleared_alt_ft) init["cleared_alt_ft"] = *e.initial.cleared_alt_ft;
    if (e.initial.cleared_speed_kt) init["cleared_speed_kt"] = *e.initial.cleared_speed_kt;
    doc["schedule"].push_back({{"callsign", e.callsign},
                               {"entry_tick", e.entry_tick},
                               {"sector", e.sector},
                               {"route", e.route},
                               {"initial", init}});
  }
  doc["events"] = json::array();
  for (const auto& ev : s.events) {
    doc["events"].push_back({{"trigger_tick", ev.trigger_tick},
                             {"kind", std::string(to_string(ev.kind))},
                             {"callsign", ev.callsign},
                             {"description", ev.description}});
  }
  for (const auto& [pointer, value] : s.preserved_fields) doc[json::json_pointer(pointer)] = value;
  return doc;
}

inline std::string serialize_scenario(const Scenario& s) { return to_json(s).dump(2) + "\n"; }

// Identity of a scenario for log headers: hash of its compact canonical JSON.
inline std::string scenario_digest(const Scenario& s) { return sha256_hex(to_json(s).dump()); }

inline sim::AircraftState make_aircraft(const ScheduledEntry& e) {
  sim::AircraftState a;
  a.callsign = e.callsign;
  a.position = {e.initial.x_nm, e.initial.y_nm, e.initial.alt_ft};
  a.heading_deg = e.initial.heading_deg;
  a.ground_speed_kt = e.initial.ground_speed_kt;
  a.vertical_rate_fpm = e.initial.vertical_rate_fpm;
  a.cleared_heading_deg = e.initial.cleared_heading_deg;
  a.cleared_alt_ft = e.initial.cleared_alt_ft;
  a.cleared_speed_kt = e.initial.cleared_speed_kt;
  a.controlling_sector = e.sector;
  if (!e.route.empty() && !a.cleared_heading_deg) {
    a.direct_to = e.route.front();
    a.route.assign(e.route.begin() + 1, e.route.end());
  } else {
    a.route = e.route;
  }
  return a;
}

// Tick-0 world: nothing airborne yet, every schedule entry pending.
inline sim::WorldState initial_world(const Scenario& s) {
  sim::WorldState w;
  w.clock = {0, s.tick_seconds};
  w.waypoints = std::make_shared<const sim::WaypointTable>(s.waypoint_table());
  for (const auto& e : s.schedule) w.pending_spawns.push_back({e.entry_tick, make_aircraft(e)});
  std::stable_sort(w.pending_spawns.begin(), w.pending_spawns.end(), [](const auto& x, const auto& y) {
    return std::tie(x.entry_tick, x.initial.callsign) < std::tie(y.entry_tick, y.initial.callsign);
  });
  return w;
}

}  // namespace atcsim::exercise
