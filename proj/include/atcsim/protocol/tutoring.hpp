#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "atcsim/error.hpp"
#include "atcsim/protocol/block.hpp"
#include "atcsim/protocol/types.hpp"

namespace atcsim::protocol {

// Tutor <-> controller station, kept one-to-one in both directions.
class TutorRegistry {
 public:
  TutorAttachment attach(const std::string& tutor_id, const StationId& controller_station,
                         const BlockOccupancy& occupancy) {
    if (controller_station.kind != StationKind::Controller) {
      throw Error(ErrorCode::NoOccupant, "tutors attach to controller stations only");
    }
    if (!occupancy.occupant(controller_station)) throw Error(ErrorCode::NoOccupant, controller_station.label());
    if (const auto it = by_station_.find(controller_station); it != by_station_.end()) {
      throw Error(ErrorCode::AlreadyAttached, controller_station.label() + " already has tutor " + it->second);
    }
    if (const auto it = by_tutor_.find(tutor_id); it != by_tutor_.end()) {
      throw Error(ErrorCode::TutorBusy, tutor_id + " is attached to " + it->second.label());
    }
    by_station_.emplace(controller_station, tutor_id);
    by_tutor_.emplace(tutor_id, controller_station);
    return {tutor_id, controller_station};
  }

  bool detach(const std::string& tutor_id) {
    const auto it = by_tutor_.find(tutor_id);
    if (it == by_tutor_.end()) return false;
    by_station_.erase(it->second);
    by_tutor_.erase(it);
    return true;
  }

  std::optional<StationId> station_of(const std::string& tutor_id) const {
    const auto it = by_tutor_.find(tutor_id);
    if (it == by_tutor_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::string> tutor_at(const StationId& station) const {
    const auto it = by_station_.find(station);
    if (it == by_station_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return by_tutor_.size(); }
  const std::map<std::string, StationId>& attachments() const { return by_tutor_; }

 private:
  std::map<StationId, std::string> by_station_;
  std::map<std::string, StationId> by_tutor_;
};

// Remote-control grants: at most one active grant per station, and only for
// the tutor attached to it.
class GrantRegistry {
 public:
  ControlGrant grant(const std::string& tutor_id, const StationId& station, std::uint64_t tick,
                     const TutorRegistry& tutors) {
    const auto attached = tutors.station_of(tutor_id);
    if (!attached || *attached != station) throw Error(ErrorCode::NotAttached, tutor_id + " -> " + station.label());
    if (const auto it = active_.find(station); it != active_.end()) {
      throw Error(ErrorCode::GrantExists, station.label() + " is controlled by " + it->second.tutor_id);
    }
    ControlGrant g{tutor_id, station, tick, true};
    active_.emplace(station, g);
    return g;
  }

  // Idempotent; returns whether a grant was actually deactivated.
  bool revoke(const std::string& tutor_id, const StationId& station) {
    const auto it = active_.find(station);
    if (it == active_.end() || it->second.tutor_id != tutor_id) return false;
    active_.erase(it);
    return true;
  }

  std::size_t revoke_all(const std::string& tutor_id) {
    std::size_t n = 0;
    for (auto it = active_.begin(); it != active_.end();) {
      if (it->second.tutor_id == tutor_id) {
        it = active_.erase(it);
        ++n;
      } else {
        ++it;
      }
    }
    return n;
  }

  std::size_t revoke_station(const StationId& station) { return active_.erase(station); }

  const ControlGrant* active_for(const StationId& station) const {
    const auto it = active_.find(station);
    return it == active_.end() ? nullptr : &it->second;
  }

  bool holds(const std::string& tutor_id, const StationId& station) const {
    const auto* g = active_for(station);
    return g && g->tutor_id == tutor_id;
  }

  std::size_t size() const { return active_.size(); }

 private:
  std::map<StationId, ControlGrant> active_;
};

}  // namespace atcsim::protocol
