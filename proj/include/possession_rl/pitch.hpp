#pragma once

#include <cmath>

namespace prl::pitch {

inline constexpr double kLength = 105.0;
inline constexpr double kWidth = 68.0;
inline constexpr double kGoalWidth = 7.32;
inline constexpr double kGoalCenterY = kWidth / 2.0;
inline constexpr double kPostLowY = kGoalCenterY - kGoalWidth / 2.0;   // 30.34
inline constexpr double kPostHighY = kGoalCenterY + kGoalWidth / 2.0;  // 37.66
inline constexpr double kHalfLengthSeconds = 2700.0;

inline bool in_bounds(double x, double y) {
  return x >= 0.0 && x <= kLength && y >= 0.0 && y <= kWidth;
}

/// Euclidean distance to the centre of the attacked goal line (105, 34).
inline double distance_to_goal(double x, double y) {
  return std::hypot(kLength - x, kGoalCenterY - y);
}

/// Angle subtended by the goal posts at (x, y), in [0, pi].
/// Equals pi between the posts on the goal line and 0 on the line outside them.
inline double angle_to_goal(double x, double y) {
  const double ax = kLength - x, ay = kPostLowY - y;
  const double bx = kLength - x, by = kPostHighY - y;
  const double cross = ax * by - ay * bx;
  const double dot = ax * bx + ay * by;
  return std::abs(std::atan2(cross, dot));
}

// Coordinates from the other team's attacking perspective.
inline double mirror_x(double x) { return kLength - x; }
inline double mirror_y(double y) { return kWidth - y; }

}  // namespace prl::pitch
