#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace seqsprt {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Planar rigid pose (x, y in meters, theta in radians).
struct Pose2
{
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  /// this * other
  Pose2 compose(const Pose2& other) const;
  Pose2 inverse() const;
  /// this^-1 * other, the pose of `other` expressed in this frame.
  Pose2 between(const Pose2& other) const;

  double translation_norm() const { return std::hypot(x, y); }

  bool operator==(const Pose2&) const = default;
};

using Trajectory = std::vector<Pose2>;

} // namespace seqsprt
