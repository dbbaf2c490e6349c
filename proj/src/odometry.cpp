#include "diffbot/odometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace diffbot {

void EncoderConfig::validate() const {
  if (ticks_per_rev <= 0) {
    throw std::invalid_argument("ticks_per_rev must be positive");
  }
  if (!(std::isfinite(wheel_radius) && wheel_radius > 0.0)) {
    throw std::invalid_argument("encoder wheel_radius must be positive");
  }
}

double EncoderConfig::meters_per_tick() const {
  return 2.0 * std::numbers::pi * wheel_radius /
         static_cast<double>(ticks_per_rev);
}

WheelSpeeds ticks_to_wheel_speed(const EncoderSample& sample,
                                 const EncoderConfig& cfg) {
  if (!(sample.dt > 0.0)) {
    throw std::invalid_argument("encoder sample dt must be positive, got " +
                                std::to_string(sample.dt));
  }
  const double scale = cfg.meters_per_tick() / sample.dt;
  return {static_cast<double>(sample.delta_ticks_left) * scale,
          static_cast<double>(sample.delta_ticks_right) * scale};
}

Pose2D odometry_step(const Pose2D& pose, const WheelSpeeds& wheels,
                     const ChassisGeometry& geom, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("odometry dt must be positive, got " +
                                std::to_string(dt));
  }
  const double forward = (wheels.right + wheels.left) / 2.0;
  const double turn_rate = (wheels.right - wheels.left) / geom.track_width;
  return {pose.x + std::cos(pose.theta) * forward * dt,
          pose.y + std::sin(pose.theta) * forward * dt,
          pose.theta + turn_rate * dt};
}

Pose2D integrate(const Pose2D& initial, std::span<const OdometrySample> samples,
                 const ChassisGeometry& geom) {
  Pose2D pose = initial;
  for (const auto& [wheels, dt] : samples) {
    pose = odometry_step(pose, wheels, geom, dt);
  }
  return pose;
}

OdometryState correct(const OdometryState& state, const Pose2D& reference) {
  if (!(std::isfinite(reference.x) && std::isfinite(reference.y) &&
        std::isfinite(reference.theta))) {
    throw std::invalid_argument("correction reference must be finite");
  }
  OdometryState corrected = state;
  corrected.pose = reference;
  return corrected;
}

}  // namespace diffbot
