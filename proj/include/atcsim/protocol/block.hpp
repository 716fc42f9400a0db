#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>

#include "atcsim/error.hpp"
#include "atcsim/protocol/message.hpp"
#include "atcsim/protocol/types.hpp"

namespace atcsim::protocol {

// One supervisor's unit of capacity. Limits are fixed; blocks scale by
// cloning, not by growing.
struct BlockConfig {
  static constexpr int kMaxControllerStations = 10;
  static constexpr int kMaxPilotStations = 10;
  static constexpr int kSupervisorCount = 1;

  std::string block_id;
  int max_controller_stations = kMaxControllerStations;
  int max_pilot_stations = kMaxPilotStations;
  int supervisor_count = kSupervisorCount;

  bool operator==(const BlockConfig&) const = default;
};

class BlockRegistry {
 public:
  const BlockConfig& add(BlockConfig config) {
    if (blocks_.count(config.block_id)) throw Error(ErrorCode::DuplicateBlockId, config.block_id);
    return blocks_.emplace(config.block_id, std::move(config)).first->second;
  }

  // Same limits as the template under a fresh id.
  const BlockConfig& clone_block(const BlockConfig& tmpl, const std::string& new_block_id) {
    BlockConfig copy = tmpl;
    copy.block_id = new_block_id;
    return add(std::move(copy));
  }

  const BlockConfig* find(const std::string& id) const {
    const auto it = blocks_.find(id);
    return it == blocks_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return blocks_.size(); }
  const std::map<std::string, BlockConfig>& all() const { return blocks_; }

 private:
  std::map<std::string, BlockConfig> blocks_;
};

struct JoinRequest {
  Role role = Role::Controller;
  std::optional<int> station_index;
  std::string client_id;
};

struct Seat {
  Role role = Role::Controller;
  std::optional<StationId> station;
  bool operator==(const Seat&) const = default;
};

using JoinOutcome = std::variant<Seat, RejectReason>;

// Who sits where in one block. Coordinators sit beside an occupied
// controller station and do not consume block capacity; tutors are tracked
// by TutorRegistry.
class BlockOccupancy {
 public:
  explicit BlockOccupancy(BlockConfig config) : config_(std::move(config)) {}

  const BlockConfig& config() const { return config_; }

  JoinOutcome join(const JoinRequest& req) {
    switch (req.role) {
      case Role::Controller: return take(controllers_, config_.max_controller_stations, StationKind::Controller, req);
      case Role::PseudoPilot: return take(pilots_, config_.max_pilot_stations, StationKind::Pilot, req);
      case Role::Supervisor: return take(supervisors_, config_.supervisor_count, StationKind::Supervisor, req);
      case Role::Coordinator: {
        if (!req.station_index) return RejectReason::InvalidStation;
        const int idx = *req.station_index;
        if (idx < 1 || idx > config_.max_controller_stations) return RejectReason::InvalidStation;
        if (!controllers_.count(idx)) return RejectReason::NoOccupant;
        if (coordinators_.count(idx)) return RejectReason::StationTaken;
        coordinators_.emplace(idx, req.client_id);
        return Seat{Role::Coordinator, station(StationKind::Controller, idx)};
      }
      case Role::RemoteTutor: return Seat{Role::RemoteTutor, std::nullopt};
    }
    return RejectReason::BadRequest;
  }

  // Frees every seat held by the client.
  void leave(const std::string& client_id) {
    for (auto* m : {&controllers_, &pilots_, &supervisors_, &coordinators_}) {
      for (auto it = m->begin(); it != m->end();) {
        it = it->second == client_id ? m->erase(it) : std::next(it);
      }
    }
  }

  std::optional<std::string> occupant(const StationId& s) const {
    const auto* m = s.kind == StationKind::Controller ? &controllers_ : s.kind == StationKind::Pilot ? &pilots_ : &supervisors_;
    const auto it = m->find(s.index);
    if (it == m->end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::string> coordinator(int controller_index) const {
    const auto it = coordinators_.find(controller_index);
    if (it == coordinators_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t controller_count() const { return controllers_.size(); }
  std::size_t pilot_count() const { return pilots_.size(); }
  std::size_t supervisor_count() const { return supervisors_.size(); }
  std::size_t coordinator_count() const { return coordinators_.size(); }

  StationId station(StationKind kind, int index) const { return {config_.block_id, kind, index}; }

 private:
  JoinOutcome take(std::map<int, std::string>& seats, int capacity, StationKind kind, const JoinRequest& req) {
    if (req.station_index) {
      const int idx = *req.station_index;
      if (idx < 1 || idx > capacity) return RejectReason::InvalidStation;
      if (seats.count(idx)) return RejectReason::StationTaken;
      seats.emplace(idx, req.client_id);
      return Seat{req.role, station(kind, idx)};
    }
    for (int idx = 1; idx <= capacity; ++idx) {
      if (!seats.count(idx)) {
        seats.emplace(idx, req.client_id);
        return Seat{req.role, station(kind, idx)};
      }
    }
    return RejectReason::BlockFull;
  }

  BlockConfig config_;
  std::map<int, std::string> controllers_;
  std::map<int, std::string> pilots_;
  std::map<int, std::string> supervisors_;
  std::map<int, std::string> coordinators_;
};

inline JoinOutcome join_session(const JoinRequest& req, BlockOccupancy& block) { return block.join(req); }

}  // namespace atcsim::protocol
