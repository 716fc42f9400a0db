#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "atcsim/protocol/types.hpp"

namespace atcsim::protocol {

enum class Liveness { Alive, Suspect, Dead };

inline const char* to_string(Liveness l) {
  switch (l) {
    case Liveness::Alive: return "ALIVE";
    case Liveness::Suspect: return "SUSPECT";
    case Liveness::Dead: return "DEAD";
  }
  return "?";
}

// ALIVE up to half the timeout, SUSPECT up to the timeout, DEAD beyond.
inline Liveness check_heartbeat(std::uint64_t last_seen_tick, std::uint64_t now_tick, std::uint64_t timeout_ticks) {
  const std::uint64_t gap = now_tick > last_seen_tick ? now_tick - last_seen_tick : 0;
  if (2 * gap <= timeout_ticks) return Liveness::Alive;
  if (gap <= timeout_ticks) return Liveness::Suspect;
  return Liveness::Dead;
}

// Duplicate suppression: a sender's seq must strictly increase.
class SeqTracker {
 public:
  bool accept(const std::string& sender, std::uint64_t seq) {
    const auto it = last_.find(sender);
    if (it != last_.end() && seq <= it->second) return false;
    last_[sender] = seq;
    return true;
  }

  std::uint64_t last(const std::string& sender) const {
    const auto it = last_.find(sender);
    return it == last_.end() ? 0 : it->second;
  }

  void forget(const std::string& sender) { last_.erase(sender); }

 private:
  std::map<std::string, std::uint64_t> last_;
};

// Forwards at most one pointer update per interval per tutor. Updates that
// arrive too early are parked; the latest parked one is flushed later so the
// final position always reaches the student.
class PointerThrottle {
 public:
  using Clock = std::chrono::steady_clock;
  static constexpr std::chrono::milliseconds kInterval{100};  // 10 updates/s

  bool admit(const PointerOverlay& p, Clock::time_point now) {
    auto& slot = slots_[p.tutor_id];
    if (!slot.last_sent || now - *slot.last_sent >= kInterval) {
      slot.last_sent = now;
      slot.parked.reset();
      return true;
    }
    slot.parked = p;
    return false;
  }

  // Parked updates whose interval has elapsed.
  std::vector<PointerOverlay> flush(Clock::time_point now) {
    std::vector<PointerOverlay> out;
    for (auto& [_, slot] : slots_) {
      if (slot.parked && (!slot.last_sent || now - *slot.last_sent >= kInterval)) {
        out.push_back(*slot.parked);
        slot.parked.reset();
        slot.last_sent = now;
      }
    }
    return out;
  }

  void forget(const std::string& tutor_id) { slots_.erase(tutor_id); }

 private:
  struct Slot {
    std::optional<Clock::time_point> last_sent;
    std::optional<PointerOverlay> parked;
  };
  std::map<std::string, Slot> slots_;
};

}  // namespace atcsim::protocol
