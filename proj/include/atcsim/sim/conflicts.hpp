#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "atcsim/sim/types.hpp"

namespace atcsim::sim {

namespace detail {

struct CellKey {
  std::int64_t cx;
  std::int64_t cy;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    const auto a = static_cast<std::uint64_t>(k.cx) * 0x9E3779B97F4A7C15ull;
    const auto b = static_cast<std::uint64_t>(k.cy) * 0xC2B2AE3D27D4EB4Full;
    return static_cast<std::size_t>(a ^ (b >> 1) ^ (b << 7));
  }
};

}  // namespace detail

// A pair is in conflict only when both lateral and vertical spacing are
// strictly below the minima. Uses a uniform grid with cell size equal to the
// lateral minimum, so only the 3x3 neighbourhood of each aircraft is scanned.
inline std::vector<SeparationEvent> detect_conflicts(std::span<const AircraftState> aircraft,
                                                     const SeparationMinima& minima,
                                                     std::uint64_t tick_index = 0) {
  std::vector<SeparationEvent> events;
  if (aircraft.size() < 2) return events;

  const double cell = minima.lateral_nm;
  auto key_of = [cell](const AircraftState& a) {
    return detail::CellKey{static_cast<std::int64_t>(std::floor(a.position.x_nm / cell)),
                           static_cast<std::int64_t>(std::floor(a.position.y_nm / cell))};
  };

  std::unordered_map<detail::CellKey, std::vector<std::size_t>, detail::CellKeyHash> grid;
  grid.reserve(aircraft.size());
  for (std::size_t i = 0; i < aircraft.size(); ++i) grid[key_of(aircraft[i])].push_back(i);

  for (std::size_t i = 0; i < aircraft.size(); ++i) {
    const auto& a = aircraft[i];
    const auto k = key_of(a);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = grid.find({k.cx + dx, k.cy + dy});
        if (it == grid.end()) continue;
        for (const std::size_t j : it->second) {
          if (j <= i) continue;
          const auto& b = aircraft[j];
          const double lateral = std::hypot(a.position.x_nm - b.position.x_nm, a.position.y_nm - b.position.y_nm);
          const double vertical = std::fabs(a.position.alt_ft - b.position.alt_ft);
          if (lateral < minima.lateral_nm && vertical < minima.vertical_ft) {
            const bool a_first = a.callsign < b.callsign;
            events.push_back({a_first ? a.callsign : b.callsign, a_first ? b.callsign : a.callsign, lateral,
                              vertical, tick_index});
          }
        }
      }
    }
  }

  std::sort(events.begin(), events.end(), [](const SeparationEvent& x, const SeparationEvent& y) {
    return std::tie(x.first, x.second) < std::tie(y.first, y.second);
  });
  return events;
}

}  // namespace atcsim::sim
