#pragma once

#include <array>
#include <variant>

namespace diffbot {

/// Planar pose in the global frame. theta accumulates unbounded; use
/// normalize_angle() when a wrapped value is needed.
struct Pose2D {
  double x{0.0};      ///< [m]
  double y{0.0};      ///< [m]
  double theta{0.0};  ///< [rad]

  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

/// Planar body velocity, the `cmd_vel` payload.
struct Twist2D {
  double vx{0.0};     ///< [m/s]
  double vy{0.0};     ///< [m/s]
  double omega{0.0};  ///< [rad/s]

  friend bool operator==(const Twist2D&, const Twist2D&) = default;
};

/// Left/right wheel rim speeds [m/s].
struct WheelSpeeds {
  double left{0.0};
  double right{0.0};

  friend bool operator==(const WheelSpeeds&, const WheelSpeeds&) = default;
};

struct ChassisGeometry {
  double track_width{0.2};    ///< distance between the drive wheels [m]
  double wheel_radius{0.034}; ///< [m]

  /// Throws std::invalid_argument unless both dimensions are positive and finite.
  void validate() const;
};

/// Returned by icc() when both wheels turn at the same speed.
struct StraightLine {
  friend bool operator==(const StraightLine&, const StraightLine&) = default;
};

/// Instantaneous centre of curvature: signed radius and the angular rate
/// about it. radius * omega equals the forward speed.
struct IccArc {
  double radius{0.0};  ///< [m], positive when the ICC lies to the left
  double omega{0.0};   ///< [rad/s], never zero

  friend bool operator==(const IccArc&, const IccArc&) = default;
};

using IccResult = std::variant<StraightLine, IccArc>;

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Wraps an angle into (-pi, pi].
double normalize_angle(double angle);

/// Global-to-local rotation [[c, s, 0], [-s, c, 0], [0, 0, 1]].
Matrix3 rotation_matrix(double theta);

Twist2D global_to_local(double theta, const Twist2D& global_rate);
Twist2D local_to_global(double theta, const Twist2D& local_rate);

/// Body twist from wheel speeds. vy is always zero (no lateral slip).
Twist2D synthesize(const WheelSpeeds& wheels, const ChassisGeometry& geom);

/// Wheel speeds for a body twist; vy is ignored. No clamping.
WheelSpeeds decompose(const Twist2D& twist, const ChassisGeometry& geom);

IccResult icc(const WheelSpeeds& wheels, const ChassisGeometry& geom);

}  // namespace diffbot
