#include "seqsprt/geometry.hpp"

namespace seqsprt {

double wrap_angle(double a)
{
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi)
    a += two_pi;
  else if (a > std::numbers::pi)
    a -= two_pi;
  return a;
}

Pose2 Pose2::compose(const Pose2& o) const
{
  const double c = std::cos(theta), s = std::sin(theta);
  return {x + c * o.x - s * o.y, y + s * o.x + c * o.y, wrap_angle(theta + o.theta)};
}

Pose2 Pose2::inverse() const
{
  const double c = std::cos(theta), s = std::sin(theta);
  return {-c * x - s * y, s * x - c * y, wrap_angle(-theta)};
}

Pose2 Pose2::between(const Pose2& o) const
{
  const double c = std::cos(theta), s = std::sin(theta);
  const double dx = o.x - x, dy = o.y - y;
  return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(o.theta - theta)};
}

} // namespace seqsprt
