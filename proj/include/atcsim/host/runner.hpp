#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atcsim/error.hpp"
#include "atcsim/exercise/scenario.hpp"
#include "atcsim/protocol/message.hpp"
#include "atcsim/sim/command.hpp"
#include "atcsim/sim/kinematics.hpp"
#include "atcsim/sim/world_digest.hpp"

namespace atcsim::host {

// A queued world input that could not be applied when its tick came.
struct InputFailure {
  std::string sender;
  std::uint64_t seq = 0;
  ErrorCode code = ErrorCode::UnknownCallsign;
  std::string detail;
};

struct TickReport {
  std::uint64_t tick = 0;  // tick index after the step
  std::string digest;
  std::vector<sim::SeparationEvent> separations;
  std::vector<protocol::Alert> alerts;
  std::vector<InputFailure> failures;
};

inline protocol::AlertKind alert_kind_of(exercise::EventKind k) {
  switch (k) {
    case exercise::EventKind::EmergencyDeclared: return protocol::AlertKind::EmergencyDeclared;
    case exercise::EventKind::RadioFailure: return protocol::AlertKind::RadioFailure;
    case exercise::EventKind::GoAround: return protocol::AlertKind::GoAround;
  }
  return protocol::AlertKind::EmergencyDeclared;
}

inline void set_status(sim::AircraftStatus& st, exercise::EventKind k) {
  switch (k) {
    case exercise::EventKind::EmergencyDeclared: st.emergency = true; break;
    case exercise::EventKind::RadioFailure: st.radio_failure = true; break;
    case exercise::EventKind::GoAround: st.go_around = true; break;
  }
}

// Owns the world of one exercise run. Inputs queued between ticks are
// applied, in arrival order, at the start of the next advance(); live
// sessions and log replay both drive the world only through this class.
class ExerciseRunner {
 public:
  explicit ExerciseRunner(exercise::Scenario scenario, sim::KinematicLimits limits = {})
      : scenario_(std::move(scenario)),
        limits_(limits),
        world_(exercise::initial_world(scenario_)),
        fired_(scenario_.events.size(), false) {}

  const exercise::Scenario& scenario() const { return scenario_; }
  const sim::WorldState& world() const { return world_; }
  std::uint64_t tick() const { return world_.clock.tick_index; }
  bool stopped() const { return stopped_; }
  bool finished() const { return stopped_ || tick() >= scenario_.duration_ticks(); }
  std::size_t queued() const { return queue_.size(); }

  // PILOT_CMD, CONTROL_INPUT or an INJECT_EVENT supervisor command.
  void queue(const protocol::Message& m) { queue_.push_back(m); }
  void stop() { stopped_ = true; }

  TickReport advance() {
    TickReport report;
    const std::uint64_t next_tick = tick() + 1;
    std::vector<protocol::Alert> event_alerts;

    for (const auto& m : queue_) {
      try {
        apply(m, event_alerts, next_tick);
      } catch (const Error& e) {
        report.failures.push_back({m.sender, m.seq, e.code(), e.what()});
      }
    }
    queue_.clear();

    for (std::size_t i = 0; i < scenario_.events.size(); ++i) {
      const auto& ev = scenario_.events[i];
      if (fired_[i] || ev.trigger_tick > tick()) continue;
      if (fire(ev.kind, ev.callsign, ev.description, event_alerts, next_tick)) fired_[i] = true;
    }

    auto step = sim::step_world(world_, scenario_.minima, limits_);
    world_ = std::move(step.world);
    report.tick = tick();
    report.separations = std::move(step.separations);
    report.alerts = std::move(event_alerts);
    for (const auto& s : report.separations) report.alerts.push_back(protocol::separation_alert(s));
    report.digest = sim::world_digest(world_);
    return report;
  }

 private:
  void apply(const protocol::Message& m, std::vector<protocol::Alert>& alerts, std::uint64_t alert_tick) {
    if (m.is<protocol::PilotCmd>()) {
      world_ = sim::apply_pilot_command(world_, m.as<protocol::PilotCmd>().command);
    } else if (m.is<protocol::ControlInput>()) {
      world_ = sim::apply_pilot_command(world_, m.as<protocol::ControlInput>().command);
    } else if (m.is<protocol::SupervisorCmd>()) {
      const auto& cmd = m.as<protocol::SupervisorCmd>();
      if (cmd.verb != protocol::SupervisorVerb::InjectEvent || !cmd.event_kind || !cmd.callsign) {
        throw Error(ErrorCode::BadPhase, "not a world input");
      }
      if (!fire(*cmd.event_kind, *cmd.callsign, cmd.description, alerts, alert_tick)) {
        throw Error(ErrorCode::UnknownCallsign, *cmd.callsign);
      }
    } else {
      throw Error(ErrorCode::BadPhase, std::string(m.tag()) + " is not a world input");
    }
  }

  bool fire(exercise::EventKind kind, const std::string& callsign, const std::string& description,
            std::vector<protocol::Alert>& alerts, std::uint64_t alert_tick) {
    for (auto& a : world_.aircraft) {
      if (a.callsign != callsign) continue;
      set_status(a.status, kind);
      alerts.push_back({alert_kind_of(kind), {callsign}, alert_tick, std::nullopt, std::nullopt, description});
      return true;
    }
    return false;
  }

  exercise::Scenario scenario_;
  sim::KinematicLimits limits_;
  sim::WorldState world_;
  std::vector<bool> fired_;
  std::vector<protocol::Message> queue_;
  bool stopped_ = false;
};

}  // namespace atcsim::host
