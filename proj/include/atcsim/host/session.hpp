#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "atcsim/error.hpp"
#include "atcsim/exercise/scenario.hpp"
#include "atcsim/exercise/validate.hpp"
#include "atcsim/host/event_log.hpp"
#include "atcsim/host/runner.hpp"
#include "atcsim/protocol/block.hpp"
#include "atcsim/protocol/liveness.hpp"
#include "atcsim/protocol/message.hpp"
#include "atcsim/protocol/mirror.hpp"
#include "atcsim/protocol/tutoring.hpp"

namespace atcsim::host {

using protocol::Message;
using protocol::RejectReason;
using protocol::Role;
using protocol::StationId;
using protocol::StationKind;

enum class Phase { Lobby, Running, Paused, Ended };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Lobby: return "LOBBY";
    case Phase::Running: return "RUNNING";
    case Phase::Paused: return "PAUSED";
    case Phase::Ended: return "ENDED";
  }
  return "?";
}

inline RejectReason reject_reason_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCallsign: return RejectReason::UnknownCallsign;
    case ErrorCode::WaypointNotInScenario: return RejectReason::WaypointNotInScenario;
    case ErrorCode::SyntaxError:
    case ErrorCode::DomainError: return RejectReason::DomainError;
    case ErrorCode::AlreadyAttached: return RejectReason::AlreadyAttached;
    case ErrorCode::TutorBusy: return RejectReason::TutorBusy;
    case ErrorCode::NoOccupant: return RejectReason::NoOccupant;
    case ErrorCode::NotAttached: return RejectReason::NotAttached;
    case ErrorCode::GrantExists: return RejectReason::GrantExists;
    case ErrorCode::BadPhase: return RejectReason::BadPhase;
    case ErrorCode::NotSupervisor: return RejectReason::NotSupervisor;
    case ErrorCode::ParseError:
    case ErrorCode::SchemaError:
    case ErrorCode::InvalidScenario: return RejectReason::InvalidScenario;
    case ErrorCode::GraceExpired: return RejectReason::GraceExpired;
    case ErrorCode::StationReassigned: return RejectReason::StationReassigned;
    case ErrorCode::VersionError: return RejectReason::Version;
    default: return RejectReason::BadRequest;
  }
}

// Rejection that has no library error code behind it.
struct Rejection : std::runtime_error {
  Rejection(RejectReason r, const std::string& detail) : std::runtime_error(detail), reason(r) {}
  RejectReason reason;
};

struct SessionOptions {
  double heartbeat_timeout_s = 10.0;
  double grace_s = 120.0;
  std::string session_token;  // empty accepts any token
  int snapshot_interval = protocol::kSnapshotInterval;
  sim::KinematicLimits limits;
  std::function<std::chrono::steady_clock::time_point()> clock = [] { return std::chrono::steady_clock::now(); };
};

using ConnectionId = std::uint64_t;

struct Outbound {
  ConnectionId connection = 0;
  Message message;
};
using Outbox = std::vector<Outbound>;

using LogFactory = std::function<std::unique_ptr<EventLogSink>(const LogHeader&)>;
// Resolves a LOAD_SCENARIO name; throws Error on failure.
using ScenarioLoader = std::function<exercise::Scenario(const std::string&)>;

struct ClientInfo {
  std::string id;
  std::string name;
  Role role = Role::Controller;
  std::optional<StationId> station;  // tutors: the attached controller station
  std::optional<ConnectionId> connection;
  std::uint64_t last_seen = 0;  // service tick
  bool seated = true;
  std::string resume_token;
  std::string known_digest;  // picture the client holds after our last frame
  std::string prev_digest;
  bool needs_snapshot = true;
  int frames_since_snapshot = 0;
};

struct SessionStats {
  std::uint64_t ticks_run = 0;
  std::chrono::microseconds max_tick_time{0};
  std::uint64_t rejects_sent = 0;
  std::uint64_t snapshots_sent = 0;
  std::uint64_t separation_events = 0;
};

inline std::string random_token() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

// One exercise on one block. Transport-agnostic: the caller feeds decoded
// messages and timer ticks in, and delivers the returned outbox. Not
// thread-safe; run it on a single serial executor.
class Session {
 public:
  Session(std::string session_id, protocol::BlockConfig block, exercise::Scenario scenario, SessionOptions opts = {},
          LogFactory logs = {}, ScenarioLoader loader = {})
      : id_(std::move(session_id)),
        occupancy_(std::move(block)),
        opts_(std::move(opts)),
        logs_(std::move(logs)),
        loader_(std::move(loader)) {
    reset_run(std::move(scenario));
  }

  const std::string& id() const { return id_; }
  Phase phase() const { return phase_; }
  const ExerciseRunner& runner() const { return *runner_; }
  const protocol::BlockOccupancy& occupancy() const { return occupancy_; }
  const protocol::TutorRegistry& tutors() const { return tutors_; }
  const protocol::GrantRegistry& grants() const { return grants_; }
  const protocol::Picture& picture() const { return picture_; }
  const std::string& picture_digest() const { return digest_; }
  const SessionStats& stats() const { return stats_; }
  EventLogSink* log() const { return log_.get(); }
  std::uint64_t service_ticks() const { return service_tick_; }
  std::size_t run_index() const { return run_index_; }
  std::size_t client_count() const { return clients_.size(); }
  std::size_t connected_count() const { return bound_.size(); }

  const ClientInfo* client(const std::string& client_id) const {
    const auto it = clients_.find(client_id);
    return it == clients_.end() ? nullptr : &it->second;
  }

  Outbox receive(ConnectionId conn, Message msg) {
    Outbox out;
    const auto b = bound_.find(conn);
    if (b == bound_.end()) {
      if (!msg.is<protocol::Hello>()) {
        reject_to(out, conn, RejectReason::NotJoined, "send HELLO first", msg.seq);
        return out;
      }
      handle_hello(conn, std::move(msg), out);
      return out;
    }

    ClientInfo& c = clients_.at(b->second);
    msg.sender = c.id;
    if (!seqs_.accept(c.id, msg.seq)) {
      reject_to(out, conn, RejectReason::DuplicateSeq, "seq " + std::to_string(msg.seq) + " already seen", msg.seq);
      return out;
    }
    c.last_seen = service_tick_;

    bool apply = false;
    try {
      dispatch(c, conn, msg, out, apply);
    } catch (const Error& e) {
      reject_to(out, conn, reject_reason_for(e.code()), e.what(), msg.seq);
    } catch (const Rejection& r) {
      reject_to(out, conn, r.reason, r.what(), msg.seq);
    }
    log_message(msg, apply);
    return out;
  }

  // Transport closed; the client keeps its seat until heartbeats declare it dead.
  Outbox disconnect(ConnectionId conn) {
    const auto b = bound_.find(conn);
    if (b != bound_.end()) {
      if (auto it = clients_.find(b->second); it != clients_.end()) it->second.connection.reset();
      bound_.erase(b);
    }
    return {};
  }

  // Advances the world one tick when RUNNING and fans the result out.
  Outbox run_tick() {
    Outbox out;
    if (phase_ != Phase::Running) return out;
    const auto t0 = std::chrono::steady_clock::now();

    auto report = runner_->advance();
    stats_.separation_events += report.separations.size();
    if (log_) log_->append_digest(report.tick, report.digest);
    const bool ended = runner_->finished();
    if (ended) phase_ = Phase::Ended;

    for (const auto& f : report.failures) {
      const auto it = clients_.find(f.sender);
      if (it != clients_.end() && it->second.connection) {
        reject_to(out, *it->second.connection, reject_reason_for(f.code), f.detail, f.seq);
      }
    }

    protocol::Picture curr = protocol::picture_of(runner_->world());
    const std::string curr_digest = protocol::picture_digest(curr);
    fan_out(curr, curr_digest, report.alerts, out);
    picture_ = std::move(curr);
    digest_ = curr_digest;
    if (ended && log_) log_->sync();

    ++stats_.ticks_run;
    const auto dt = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0);
    if (dt > stats_.max_tick_time) stats_.max_tick_time = dt;
    return out;
  }

  // Heartbeat bookkeeping; call once per tick period whatever the phase.
  Outbox service_tick() {
    Outbox out;
    ++service_tick_;
    std::vector<std::string> expired;
    for (auto& [cid, c] : clients_) {
      const auto state = protocol::check_heartbeat(c.last_seen, service_tick_, timeout_ticks_);
      if (state == protocol::Liveness::Dead && c.seated) vacate(c, out);
      if (!c.seated && service_tick_ - c.last_seen > grace_ticks_) expired.push_back(cid);
    }
    for (const auto& cid : expired) forget(cid);
    append(out, flush_pointers());
    return out;
  }

  Outbox on_timer() {
    Outbox out = service_tick();
    append(out, run_tick());
    return out;
  }

  Outbox flush_pointers() {
    Outbox out;
    for (const auto& p : throttle_.flush(opts_.clock())) forward_pointer(p, out);
    return out;
  }

  protocol::Liveness liveness(const std::string& client_id) const {
    const auto* c = client(client_id);
    if (!c || !c->seated) return protocol::Liveness::Dead;
    return protocol::check_heartbeat(c->last_seen, service_tick_, timeout_ticks_);
  }

 private:
  // Messages -----------------------------------------------------------------

  void dispatch(ClientInfo& c, ConnectionId conn, Message& msg, Outbox& out, bool& apply) {
    using namespace protocol;
    switch (msg.payload.index()) {
      case protocol::payload_index<Hello>(): throw Rejection(RejectReason::BadRequest, "already joined as " + c.id);
      case protocol::payload_index<PilotCmd>(): {
        if (c.role != Role::PseudoPilot && c.role != Role::Controller) forbid(c, msg);
        require_live_world();
        auto& cmd = std::get<PilotCmd>(msg.payload).command;
        check_command(cmd);
        cmd.issued_by = c.station ? c.station->label() : c.id;
        apply = true;
        runner_->queue(msg);
        return;
      }
      case protocol::payload_index<ControlInput>(): {
        if (c.role != Role::RemoteTutor) forbid(c, msg);
        auto& ci = std::get<ControlInput>(msg.payload);
        ci.tutor_id = c.id;
        if (!c.station || *c.station != ci.target_station) throw Error(ErrorCode::NotAttached, c.id + " -> " + ci.target_station.label());
        if (!grants_.holds(c.id, ci.target_station)) throw Rejection(RejectReason::Forbidden, "no active grant on " + ci.target_station.label());
        require_live_world();
        check_command(ci.command);
        ci.command.issued_by = c.id + "@" + ci.target_station.label();
        apply = true;
        runner_->queue(msg);
        send_to_station(out, ci.target_station, ci);
        send(out, c, ci);
        return;
      }
      case protocol::payload_index<Transmission>(): {
        auto& t = std::get<Transmission>(msg.payload);
        t.from = c.station && c.role != Role::RemoteTutor ? c.station->label() : std::string(to_string(c.role));
        t.tutor_id = c.role == Role::RemoteTutor ? std::optional<std::string>(c.id) : std::nullopt;
        for (auto& [_, other] : clients_) send(out, other, t);
        return;
      }
      case protocol::payload_index<SupervisorCmd>():
        if (c.role != Role::Supervisor) throw Error(ErrorCode::NotSupervisor, c.id + " is " + std::string(to_string(c.role)));
        handle_supervisor(msg, out, apply);
        return;
      case protocol::payload_index<Pointer>(): {
        if (c.role != Role::RemoteTutor) forbid(c, msg);
        auto& p = std::get<Pointer>(msg.payload).overlay;
        p.tutor_id = c.id;
        if (!c.station || *c.station != p.target_station) throw Error(ErrorCode::NotAttached, c.id + " -> " + p.target_station.label());
        if (throttle_.admit(p, opts_.clock())) forward_pointer(p, out);
        return;
      }
      case protocol::payload_index<ControlGrantMsg>(): {
        if (c.role != Role::RemoteTutor) forbid(c, msg);
        auto& g = std::get<ControlGrantMsg>(msg.payload).grant;
        g.tutor_id = c.id;
        if (!occupancy_.occupant(g.target_station)) throw Error(ErrorCode::NoOccupant, g.target_station.label());
        g = grants_.grant(c.id, g.target_station, runner_->tick(), tutors_);
        send_to_station(out, g.target_station, ControlGrantMsg{g});
        send(out, c, ControlGrantMsg{g});
        return;
      }
      case protocol::payload_index<ControlRevoke>(): {
        if (c.role != Role::RemoteTutor) forbid(c, msg);
        auto& r = std::get<ControlRevoke>(msg.payload);
        r.tutor_id = c.id;
        grants_.revoke(c.id, r.target_station);
        send_to_station(out, r.target_station, r);
        send(out, c, r);
        return;
      }
      case protocol::payload_index<Heartbeat>(): {
        const auto& hb = std::get<Heartbeat>(msg.payload);
        if (hb.picture_digest && *hb.picture_digest != c.known_digest && *hb.picture_digest != c.prev_digest) {
          send_sync(c, out);
        }
        return;
      }
      case protocol::payload_index<Bye>():
        if (c.seated) vacate(c, out, false);
        bound_.erase(conn);
        forget(std::string(c.id));
        return;
      default: forbid(c, msg);
    }
  }

  [[noreturn]] static void forbid(const ClientInfo& c, const Message& msg) {
    throw Rejection(RejectReason::Forbidden,
                    std::string(msg.tag()) + " not allowed for " + std::string(protocol::to_string(c.role)));
  }

  void require_live_world() const {
    if (phase_ == Phase::Ended) throw Error(ErrorCode::BadPhase, "exercise has ended");
  }

  void check_command(const sim::PilotCommand& cmd) const {
    sim::check_command_domain(cmd);
    const auto& s = runner_->scenario();
    bool known = false;
    for (const auto& e : s.schedule) known = known || e.callsign == cmd.callsign;
    if (!known) throw Error(ErrorCode::UnknownCallsign, cmd.callsign);
    if (cmd.verb == sim::CommandVerb::DirectTo && !runner_->world().waypoints->count(cmd.waypoint)) {
      throw Error(ErrorCode::WaypointNotInScenario, cmd.waypoint);
    }
  }

  void handle_hello(ConnectionId conn, Message msg, Outbox& out) {
    const auto& h = msg.as<protocol::Hello>();
    try {
      if (msg.session_id != id_) throw Rejection(RejectReason::NoSuchSession, msg.session_id);
      if (!opts_.session_token.empty() && h.session_token != opts_.session_token) {
        throw Rejection(RejectReason::Forbidden, "bad session token");
      }
      ClientInfo& c = h.resume_token ? resume(*h.resume_token) : join(h, msg.sender);
      if (c.connection && *c.connection != conn) bound_.erase(*c.connection);
      c.connection = conn;
      c.last_seen = service_tick_;
      c.needs_snapshot = true;
      bound_[conn] = c.id;
      seqs_.accept(c.id, msg.seq);
      msg.sender = c.id;
      log_message(msg, false);
      send(out, c, welcome_for(c));
      send_sync(c, out);
    } catch (const Error& e) {
      log_message(msg, false);
      reject_to(out, conn, reject_reason_for(e.code()), e.what(), msg.seq);
    } catch (const Rejection& r) {
      log_message(msg, false);
      reject_to(out, conn, r.reason, r.what(), msg.seq);
    }
  }

  ClientInfo& join(const protocol::Hello& h, const std::string& name) {
    ClientInfo c;
    c.id = "c" + std::to_string(next_client_ + 1);
    c.name = h.client_name.empty() ? name : h.client_name;
    c.role = h.role;
    if (h.role == Role::RemoteTutor) {
      if (!h.station_index) throw Rejection(RejectReason::InvalidStation, "tutors must name a controller station");
      const StationId st = occupancy_.station(StationKind::Controller, *h.station_index);
      tutors_.attach(c.id, st, occupancy_);
      c.station = st;
    } else {
      const auto outcome = occupancy_.join({h.role, h.station_index, c.id});
      if (const auto* r = std::get_if<RejectReason>(&outcome)) {
        throw Rejection(*r, std::string(protocol::to_string(h.role)) +
                                (h.station_index ? " station " + std::to_string(*h.station_index) : std::string()));
      }
      c.station = std::get<protocol::Seat>(outcome).station;
    }
    ++next_client_;
    c.resume_token = random_token();
    return clients_.emplace(c.id, std::move(c)).first->second;
  }

  ClientInfo& resume(const std::string& token) {
    auto it = clients_.begin();
    while (it != clients_.end() && it->second.resume_token != token) ++it;
    if (it == clients_.end()) throw Error(ErrorCode::GraceExpired, "unknown or expired resume token");
    ClientInfo& c = it->second;
    if (c.seated) return c;

    bool ok = false;
    if (c.role == Role::RemoteTutor) {
      try {
        tutors_.attach(c.id, *c.station, occupancy_);
        ok = true;
      } catch (const Error&) {
      }
    } else {
      const auto outcome =
          occupancy_.join({c.role, c.station ? std::optional<int>(c.station->index) : std::nullopt, c.id});
      ok = std::holds_alternative<protocol::Seat>(outcome);
    }
    if (!ok) {
      const std::string where = c.station ? c.station->label() : c.id;
      forget(std::string(c.id));
      throw Error(ErrorCode::StationReassigned, where + " is no longer available; join again");
    }
    c.seated = true;
    return c;
  }

  protocol::Welcome welcome_for(const ClientInfo& c) const {
    protocol::Welcome w;
    w.client_id = c.id;
    w.role = c.role;
    w.station = c.station;
    if (c.role == Role::RemoteTutor) w.tutor_id = c.id;
    w.resume_token = c.resume_token;
    w.last_seq = seqs_.last(c.id);
    w.tick = runner_->tick();
    w.phase = std::string(to_string(phase_));
    return w;
  }

  void handle_supervisor(Message& msg, Outbox& out, bool& apply) {
    using protocol::SupervisorVerb;
    const auto& cmd = msg.as<protocol::SupervisorCmd>();
    const auto bad_phase = [&] {
      throw Error(ErrorCode::BadPhase,
                  std::string(protocol::to_string(cmd.verb)) + " in phase " + std::string(to_string(phase_)));
    };
    switch (cmd.verb) {
      case SupervisorVerb::LoadScenario: {
        if (phase_ != Phase::Lobby && phase_ != Phase::Ended) bad_phase();
        if (!cmd.scenario) throw Error(ErrorCode::InvalidScenario, "no scenario named");
        if (!loader_) throw Error(ErrorCode::InvalidScenario, "scenario loading is not available");
        exercise::Scenario s = loader_(*cmd.scenario);
        for (const auto& issue : exercise::validate_scenario(s)) {
          if (issue.severity == exercise::Severity::Error) throw Error(ErrorCode::InvalidScenario, exercise::render_issue(issue));
        }
        reset_run(std::move(s));
        for (auto& [_, c] : clients_) send_sync(c, out);
        return;
      }
      case SupervisorVerb::Start:
        if (phase_ != Phase::Lobby) bad_phase();
        set_phase(Phase::Running, out);
        return;
      case SupervisorVerb::Pause:
        if (phase_ != Phase::Running) bad_phase();
        set_phase(Phase::Paused, out);
        return;
      case SupervisorVerb::Resume:
        if (phase_ != Phase::Paused) bad_phase();
        set_phase(Phase::Running, out);
        return;
      case SupervisorVerb::Stop:
        if (phase_ != Phase::Running && phase_ != Phase::Paused) bad_phase();
        runner_->stop();
        apply = true;
        set_phase(Phase::Ended, out);
        return;
      case SupervisorVerb::InjectEvent: {
        if (phase_ != Phase::Running && phase_ != Phase::Paused) bad_phase();
        if (!cmd.event_kind || !cmd.callsign) throw Rejection(RejectReason::BadRequest, "INJECT_EVENT needs event_kind and callsign");
        if (!runner_->world().find(*cmd.callsign)) throw Error(ErrorCode::UnknownCallsign, *cmd.callsign);
        apply = true;
        runner_->queue(msg);
        return;
      }
      case SupervisorVerb::ReassignStation: {
        if (!cmd.client_id || !cmd.station_index) throw Rejection(RejectReason::BadRequest, "REASSIGN_STATION needs client_id and station_index");
        const auto it = clients_.find(*cmd.client_id);
        if (it == clients_.end() || !it->second.seated) throw Rejection(RejectReason::InvalidStation, "no such client " + *cmd.client_id);
        ClientInfo& target = it->second;
        if (target.role != Role::Controller && target.role != Role::PseudoPilot) {
          throw Rejection(RejectReason::InvalidStation, "only controller and pilot seats can be reassigned");
        }
        const auto old = target.station;
        occupancy_.leave(target.id);
        auto outcome = occupancy_.join({target.role, *cmd.station_index, target.id});
        if (const auto* r = std::get_if<RejectReason>(&outcome)) {
          const RejectReason reason = *r;
          occupancy_.join({target.role, old ? std::optional<int>(old->index) : std::nullopt, target.id});
          throw Rejection(reason, "station " + std::to_string(*cmd.station_index));
        }
        if (old && old->kind == StationKind::Controller) revoke_station_grants(*old, out);
        target.station = std::get<protocol::Seat>(outcome).station;
        send(out, target, welcome_for(target));
        return;
      }
    }
  }

  void set_phase(Phase p, Outbox& out) {
    phase_ = p;
    if (log_) log_->sync();
    protocol::StateDelta d;
    d.tick = runner_->tick();
    d.phase = std::string(to_string(phase_));
    d.base_digest = digest_;
    d.digest = digest_;
    for (auto& [_, c] : clients_) {
      if (!c.connection || c.role == Role::RemoteTutor) continue;
      if (c.needs_snapshot || c.known_digest != digest_) {
        send_sync(c, out);
      } else {
        send(out, c, d);
      }
    }
  }

  // Fan-out ------------------------------------------------------------------

  void fan_out(const protocol::Picture& curr, const std::string& curr_digest, const std::vector<protocol::Alert>& alerts,
               Outbox& out) {
    protocol::StateDelta delta;
    delta.tick = runner_->tick();
    delta.phase = std::string(to_string(phase_));
    delta.base_digest = digest_;
    delta.ops = protocol::diff_pictures(picture_, curr);
    delta.digest = curr_digest;
    delta.alerts = alerts;

    for (auto& [_, c] : clients_) {
      if (!c.connection || !c.seated) continue;
      if (c.role == Role::RemoteTutor) {
        const bool resync = c.needs_snapshot || c.known_digest != digest_;
        protocol::MirrorFrameMsg m;
        m.frame = protocol::make_mirror_frame(resync ? std::nullopt : std::optional<protocol::Picture>(picture_), curr,
                                              c.frames_since_snapshot, *c.station, opts_.snapshot_interval);
        c.frames_since_snapshot = m.frame.full_snapshot ? 0 : c.frames_since_snapshot + 1;
        if (m.frame.full_snapshot) ++stats_.snapshots_sent;
        m.tick = delta.tick;
        m.digest = curr_digest;
        m.alerts = alerts;
        send(out, c, std::move(m));
      } else if (c.needs_snapshot || c.known_digest != digest_) {
        send(out, c, snapshot_of(curr, curr_digest, alerts));
        ++stats_.snapshots_sent;
      } else {
        send(out, c, delta);
      }
      c.needs_snapshot = false;
      c.prev_digest = c.known_digest;
      c.known_digest = curr_digest;
    }
  }

  protocol::StateSnapshot snapshot_of(const protocol::Picture& p, const std::string& digest,
                                      const std::vector<protocol::Alert>& alerts) const {
    return {runner_->tick(), std::string(to_string(phase_)), protocol::snapshot_tracks(p), digest, alerts};
  }

  // Full picture for one client, outside the tick cadence.
  void send_sync(ClientInfo& c, Outbox& out) {
    if (!c.connection || !c.seated) return;
    if (c.role == Role::RemoteTutor) {
      protocol::MirrorFrameMsg m;
      m.frame = protocol::make_mirror_frame(std::nullopt, picture_, 0, *c.station, opts_.snapshot_interval);
      m.tick = runner_->tick();
      m.digest = digest_;
      send(out, c, std::move(m));
      c.frames_since_snapshot = 0;
    } else {
      send(out, c, snapshot_of(picture_, digest_, {}));
    }
    ++stats_.snapshots_sent;
    c.needs_snapshot = false;
    c.prev_digest = c.known_digest;
    c.known_digest = digest_;
  }

  void forward_pointer(const protocol::PointerOverlay& p, Outbox& out) {
    send_to_station(out, p.target_station, protocol::Pointer{p});
  }

  // Controller and coordinator seated at a controller station.
  template <class P>
  void send_to_station(Outbox& out, const StationId& st, const P& payload) {
    if (const auto who = occupancy_.occupant(st)) {
      if (auto it = clients_.find(*who); it != clients_.end()) send(out, it->second, payload);
    }
    if (st.kind == StationKind::Controller) {
      if (const auto who = occupancy_.coordinator(st.index)) {
        if (auto it = clients_.find(*who); it != clients_.end()) send(out, it->second, payload);
      }
    }
  }

  template <class P>
  void send(Outbox& out, const ClientInfo& c, P payload) {
    if (!c.connection) return;
    out.push_back({*c.connection, protocol::make_message(id_, "host", ++out_seq_, runner_->tick(), std::move(payload))});
  }

  void reject_to(Outbox& out, ConnectionId conn, RejectReason reason, const std::string& detail,
                 std::optional<std::uint64_t> ref_seq) {
    ++stats_.rejects_sent;
    out.push_back({conn, protocol::make_message(id_, "host", ++out_seq_, runner_->tick(),
                                                protocol::Reject{reason, detail, ref_seq})});
  }

  // Seats and lifecycle ------------------------------------------------------

  void revoke_station_grants(const StationId& st, Outbox& out) {
    if (const auto* g = grants_.active_for(st)) {
      const std::string tutor = g->tutor_id;
      grants_.revoke(tutor, st);
      const protocol::ControlRevoke r{tutor, st};
      if (auto it = clients_.find(tutor); it != clients_.end()) send(out, it->second, r);
      send_to_station(out, st, r);
    }
  }

  // Frees everything the client holds; the record survives for the grace period.
  void vacate(ClientInfo& c, Outbox& out, bool notify = true) {
    if (c.role == Role::RemoteTutor) {
      if (c.station && grants_.holds(c.id, *c.station)) revoke_station_grants(*c.station, out);
      tutors_.detach(c.id);
      throttle_.forget(c.id);
    } else if (c.role == Role::Controller && c.station) {
      revoke_station_grants(*c.station, out);
    }
    occupancy_.leave(c.id);
    c.seated = false;
    if (c.connection) {
      if (notify) send(out, c, protocol::Bye{"heartbeat timeout"});
      bound_.erase(*c.connection);
      c.connection.reset();
    }
  }

  void forget(std::string client_id) {
    seqs_.forget(client_id);
    throttle_.forget(client_id);
    clients_.erase(client_id);
  }

  void reset_run(exercise::Scenario scenario) {
    runner_ = std::make_unique<ExerciseRunner>(std::move(scenario), opts_.limits);
    const auto& s = runner_->scenario();
    phase_ = Phase::Lobby;
    timeout_ticks_ = static_cast<std::uint64_t>(std::ceil(opts_.heartbeat_timeout_s / s.tick_seconds - 1e-9));
    grace_ticks_ = static_cast<std::uint64_t>(std::ceil(opts_.grace_s / s.tick_seconds - 1e-9));
    ++run_index_;
    if (logs_) {
      log_.reset();
      log_ = logs_(LogHeader{kLogSchemaVersion, exercise::scenario_digest(s), s.tick_seconds, utc_timestamp(), id_,
                             occupancy_.config().block_id});
    }
    picture_ = protocol::picture_of(runner_->world());
    digest_ = protocol::picture_digest(picture_);
    for (auto& [_, c] : clients_) c.needs_snapshot = true;
  }

  void log_message(const Message& m, bool apply) {
    if (log_) log_->append_message(runner_->tick(), m, apply);
  }

  static void append(Outbox& out, Outbox more) {
    out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }

  std::string id_;
  protocol::BlockOccupancy occupancy_;
  SessionOptions opts_;
  LogFactory logs_;
  ScenarioLoader loader_;

  std::unique_ptr<ExerciseRunner> runner_;
  std::unique_ptr<EventLogSink> log_;
  Phase phase_ = Phase::Lobby;
  std::size_t run_index_ = 0;

  std::map<std::string, ClientInfo> clients_;
  std::map<ConnectionId, std::string> bound_;
  std::uint64_t next_client_ = 0;
  protocol::SeqTracker seqs_;
  protocol::TutorRegistry tutors_;
  protocol::GrantRegistry grants_;
  protocol::PointerThrottle throttle_;

  protocol::Picture picture_;
  std::string digest_;
  std::uint64_t out_seq_ = 0;
  std::uint64_t service_tick_ = 0;
  std::uint64_t timeout_ticks_ = 10;
  std::uint64_t grace_ticks_ = 120;
  SessionStats stats_;
};

}  // namespace atcsim::host
