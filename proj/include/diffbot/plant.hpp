#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "diffbot/control.hpp"
#include "diffbot/kinematics.hpp"
#include "diffbot/odometry.hpp"
#include "diffbot/world.hpp"

namespace diffbot {

// ---------------------------------------------------------------------------
// Motor model

/// First-order DC motor seen through an 8-bit PWM driver.
struct MotorParams {
  double tau{0.15};       ///< time constant [s]
  double v_max{0.7};      ///< rim speed at |pwm| = 255 [m/s]
  int deadband_pwm{0};    ///< |pwm| below this produces no torque
  double noise_std{0.0};  ///< speed noise density [m/s per sqrt(s)]

  void validate() const;
};

/// Steady-state speed commanded by a PWM value.
double motor_command_speed(int pwm, const MotorParams& params);

/// Exact exponential update of the lag; stable for any dt. Throws on pwm
/// outside [-255, 255] or dt <= 0.
double motor_step(double v, int pwm, const MotorParams& params, double dt);
double motor_step(double v, int pwm, const MotorParams& params, double dt,
                  std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Ground truth kinematics

struct GroundTruth {
  Pose2D pose{};
  WheelSpeeds wheel_speeds{};
  double time{0.0};
  bool collision{false};  ///< last step was blocked by a wall or the bounds
};

/// Exact unicycle arc for constant wheel speeds over dt.
GroundTruth true_pose_step(const GroundTruth& truth, const ChassisGeometry& geom,
                           double dt);

/// As above, but a move that would bring the body (a disc of body_radius)
/// into a wall or out of the bounds keeps the old position and only rotates.
GroundTruth true_pose_step(const GroundTruth& truth, const ChassisGeometry& geom,
                           double dt, const World& world, double body_radius);

// ---------------------------------------------------------------------------
// Encoders

/// Running totals for tick quantization; emitted ticks always equal the floor
/// of the ideal total, so no motion is lost.
struct EncoderResidual {
  double ideal_left{0.0};
  double ideal_right{0.0};
  std::int64_t emitted_left{0};
  std::int64_t emitted_right{0};
};

EncoderSample encoder_sample(const GroundTruth& truth, const EncoderConfig& cfg,
                             double dt, EncoderResidual& residual);

// ---------------------------------------------------------------------------
// Sensors

inline constexpr double kNoReturn = std::numeric_limits<double>::infinity();

struct LidarConfig {
  int beams{360};
  double max_range{8.0};  ///< [m]
  double scan_rate{5.5};  ///< [Hz]

  void validate() const;
};

/// Full-circle scan. Beam i points at heading + angle_min + i * angle_increment
/// and holds kNoReturn when nothing is within max_range.
struct LidarScan {
  double angle_min{0.0};
  double angle_increment{0.0};
  double max_range{0.0};
  std::vector<double> ranges;

  friend bool operator==(const LidarScan&, const LidarScan&) = default;
};

LidarScan lidar_scan(const World& world, const Pose2D& pose,
                     const LidarConfig& cfg);

inline constexpr double kCliffProbeOffset = 0.05;  ///< [m] ahead of the pose

bool cliff_check(const World& world, const Pose2D& pose);

inline constexpr double kUltrasonicMaxRange = 3.0;

/// Minimum range over five rays spanning +-15 degrees ahead, or kNoReturn.
double ultrasonic_range(const World& world, const Pose2D& pose);

// ---------------------------------------------------------------------------
// Plant

struct PlantConfig {
  ChassisGeometry geometry{};
  EncoderConfig encoder{};
  MotorParams left_motor{};
  MotorParams right_motor{};
  double body_radius{0.1};  ///< [m], collision disc
  std::uint64_t seed{0};

  void validate() const;
};

/// The simulated robot: motors, exact-arc body motion and quantized
/// encoders, advanced only by step().
class Plant {
 public:
  Plant(PlantConfig config, World world, Pose2D start);

  void apply(const PwmPair& pwm) { pwm_ = pwm; }
  const PwmPair& applied() const { return pwm_; }

  /// Advances motors and body by dt and returns the encoder ticks for it.
  EncoderSample step(double dt);

  const GroundTruth& truth() const { return truth_; }
  const World& world() const { return world_; }
  const PlantConfig& config() const { return config_; }

  /// Teleports the body without touching motor or encoder state.
  void set_pose(const Pose2D& pose) { truth_.pose = pose; }

  LidarScan scan(const LidarConfig& cfg) const {
    return lidar_scan(world_, truth_.pose, cfg);
  }
  bool cliff() const { return cliff_check(world_, truth_.pose); }
  double ultrasonic() const { return ultrasonic_range(world_, truth_.pose); }

 private:
  PlantConfig config_;
  World world_;
  GroundTruth truth_;
  EncoderResidual residual_;
  PwmPair pwm_;
  std::mt19937_64 rng_;
};

/// Calibration bench: a Plant in open space whose measured speeds come from
/// its encoders, averaged over each run() span.
class PlantRig : public SpeedRig {
 public:
  explicit PlantRig(const PlantConfig& config, double dt = 0.02);

  void apply(const PwmPair& pwm) override;
  WheelSpeeds run(double duration) override;

  const Plant& plant() const { return plant_; }

 private:
  Plant plant_;
  double dt_;
};

}  // namespace diffbot
