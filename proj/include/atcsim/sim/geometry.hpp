#pragma once

#include <cmath>
#include <numbers>
#include <utility>

namespace atcsim::sim {

inline double normalize_heading(double deg) {
  double h = std::fmod(deg, 360.0);
  if (h < 0.0) h += 360.0;
  // fmod of a tiny negative plus 360 can land exactly on 360.
  if (h >= 360.0) h = 0.0;
  return h == 0.0 ? 0.0 : h;
}

// Signed shortest rotation from `from` to `to`, positive = clockwise (right).
// An exact reversal resolves to +180 so ties always turn right.
inline double turn_delta(double from_deg, double to_deg) {
  const double d = normalize_heading(to_deg - from_deg);
  return d <= 180.0 ? d : d - 360.0;
}

// sin/cos of a heading, exact on the four cardinal directions so that a
// due-east track leaves y bit-for-bit unchanged.
inline std::pair<double, double> sin_cos_deg(double deg) {
  const double h = normalize_heading(deg);
  if (h == 0.0) return {0.0, 1.0};
  if (h == 90.0) return {1.0, 0.0};
  if (h == 180.0) return {0.0, -1.0};
  if (h == 270.0) return {-1.0, 0.0};
  const double rad = h * std::numbers::pi / 180.0;
  return {std::sin(rad), std::cos(rad)};
}

inline double bearing_deg(double dx_nm, double dy_nm) {
  if (dx_nm == 0.0 && dy_nm == 0.0) return 0.0;
  return normalize_heading(std::atan2(dx_nm, dy_nm) * 180.0 / std::numbers::pi);
}

inline double distance_nm(double x0, double y0, double x1, double y1) {
  return std::hypot(x1 - x0, y1 - y0);
}

}  // namespace atcsim::sim
