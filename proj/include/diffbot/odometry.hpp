#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "diffbot/kinematics.hpp"

namespace diffbot {

/// Encoder ticks accumulated by each wheel over one sampling interval.
struct EncoderSample {
  std::int64_t delta_ticks_left{0};
  std::int64_t delta_ticks_right{0};
  double dt{0.0};  ///< [s]

  friend bool operator==(const EncoderSample&, const EncoderSample&) = default;
};

struct EncoderConfig {
  std::int64_t ticks_per_rev{1024};
  double wheel_radius{0.034};  ///< [m]

  void validate() const;

  /// Rim travel per tick [m].
  double meters_per_tick() const;
};

struct OdometryState {
  Pose2D pose{};
  double sample_time{0.02};  ///< [s]
};

/// One (wheel speeds, dt) pair of an odometry log.
using OdometrySample = std::pair<WheelSpeeds, double>;

WheelSpeeds ticks_to_wheel_speed(const EncoderSample& sample,
                                 const EncoderConfig& cfg);

/// One explicit Euler step of the dead-reckoning sum. The trigonometric
/// terms use the heading from before the step.
Pose2D odometry_step(const Pose2D& pose, const WheelSpeeds& wheels,
                     const ChassisGeometry& geom, double dt);

/// Left fold of odometry_step over the samples.
Pose2D integrate(const Pose2D& initial, std::span<const OdometrySample> samples,
                 const ChassisGeometry& geom);

/// Replaces the dead-reckoned pose with an externally known reference.
OdometryState correct(const OdometryState& state, const Pose2D& reference);

}  // namespace diffbot
