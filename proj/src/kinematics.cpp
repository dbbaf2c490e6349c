#include "diffbot/kinematics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace diffbot {

void ChassisGeometry::validate() const {
  if (!(std::isfinite(track_width) && track_width > 0.0)) {
    throw std::invalid_argument("track_width must be positive");
  }
  if (!(std::isfinite(wheel_radius) && wheel_radius > 0.0)) {
    throw std::invalid_argument("wheel_radius must be positive");
  }
}

double normalize_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle, two_pi);
  if (wrapped <= -std::numbers::pi) {
    wrapped += two_pi;
  } else if (wrapped > std::numbers::pi) {
    wrapped -= two_pi;
  }
  return wrapped;
}

Matrix3 rotation_matrix(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {{{c, s, 0.0}, {-s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

Twist2D global_to_local(double theta, const Twist2D& global_rate) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * global_rate.vx + s * global_rate.vy,
          -s * global_rate.vx + c * global_rate.vy,
          global_rate.omega};
}

Twist2D local_to_global(double theta, const Twist2D& local_rate) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * local_rate.vx - s * local_rate.vy,
          s * local_rate.vx + c * local_rate.vy,
          local_rate.omega};
}

Twist2D synthesize(const WheelSpeeds& wheels, const ChassisGeometry& geom) {
  return {(wheels.right + wheels.left) / 2.0, 0.0,
          (wheels.right - wheels.left) / geom.track_width};
}

WheelSpeeds decompose(const Twist2D& twist, const ChassisGeometry& geom) {
  const double half_track = geom.track_width / 2.0;
  return {twist.vx - twist.omega * half_track,
          twist.vx + twist.omega * half_track};
}

IccResult icc(const WheelSpeeds& wheels, const ChassisGeometry& geom) {
  if (wheels.left == wheels.right) {
    return StraightLine{};
  }
  const Twist2D body = synthesize(wheels, geom);
  return IccArc{body.vx / body.omega, body.omega};
}

}  // namespace diffbot
