#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffbot/kinematics.hpp"

namespace diffbot {

inline constexpr int kPwmLimit = 255;

/// Signed 8-bit PWM duty per wheel. Construction rejects values outside
/// [-255, 255].
class PwmPair {
 public:
  PwmPair() = default;
  PwmPair(int left, int right);

  int left() const { return left_; }
  int right() const { return right_; }

  friend bool operator==(const PwmPair&, const PwmPair&) = default;

 private:
  int left_{0};
  int right_{0};
};

// ---------------------------------------------------------------------------
// Discrete PID

struct PidGains {
  double kp{300.0};  ///< PWM per (m/s)
  double ki{1500.0}; ///< PWM per (m/s * s)
  double kd{5.0};    ///< PWM per (m/s / s)
  double sample_time{0.1};  ///< [s]

  void validate() const;
};

struct PidState {
  double integral{0.0};    ///< accumulated error [(m/s) * s]
  double prev_error{0.0};  ///< [m/s]
  bool saturated{false};

  friend bool operator==(const PidState&, const PidState&) = default;
};

struct PidOutput {
  int pwm{0};
  PidState state{};
};

/// One controller period. The integral is held (not accumulated) on ticks
/// whose unclamped output leaves [-255, 255].
PidOutput pid_step(const PidState& state, const PidGains& gains, double target,
                   double measured);

// ---------------------------------------------------------------------------
// Segmented (lookup) control

struct CalibrationPoint {
  int pwm{0};
  double speed{0.0};  ///< steady-state rim speed [m/s]

  friend bool operator==(const CalibrationPoint&,
                         const CalibrationPoint&) = default;
};

class InvalidTableError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// PWM -> steady speed map of one wheel, sorted by pwm, monotone in speed,
/// always containing (0, 0).
class WheelTable {
 public:
  WheelTable() = default;

  /// Validates without modification. Throws InvalidTableError.
  static WheelTable from_points(std::vector<CalibrationPoint> points);

  /// Sorts, pins the 0 entry to zero speed and enforces monotone speeds by
  /// a running max outward from pwm 0 (running min on the negative side).
  static WheelTable monotonized(std::vector<CalibrationPoint> points);

  /// Adds the mirrored negative half (-pwm, -speed) of a nonnegative table.
  WheelTable mirrored() const;

  const std::vector<CalibrationPoint>& points() const { return points_; }

  /// Largest pwm on the positive side that still yields zero speed.
  int deadband_pwm() const;
  double max_speed() const;

  friend bool operator==(const WheelTable&, const WheelTable&) = default;

 private:
  explicit WheelTable(std::vector<CalibrationPoint> points)
      : points_(std::move(points)) {}

  std::vector<CalibrationPoint> points_;
};

struct CalibrationTable {
  WheelTable left;
  WheelTable right;

  friend bool operator==(const CalibrationTable&,
                         const CalibrationTable&) = default;
};

/// Open-loop PWM for a target speed, interpolated linearly between the
/// bracketing entries and rounded to the nearest count.
int segmented_lookup(const WheelTable& table, double target);

PwmPair segmented_command(const CalibrationTable& table,
                          const WheelSpeeds& targets);

// ---------------------------------------------------------------------------
// Calibration sweep

class CommandRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Something that can be driven with a PWM pair and report measured wheel
/// speeds. apply() may throw CommandRejected.
class SpeedRig {
 public:
  virtual ~SpeedRig() = default;
  virtual void apply(const PwmPair& pwm) = 0;
  /// Advances the rig by `duration` seconds and returns the mean measured
  /// wheel speeds over that span.
  virtual WheelSpeeds run(double duration) = 0;
};

struct CalibrationOptions {
  int step{15};
  double settle_time{1.0};         ///< [s]
  double measurement_window{0.5};  ///< [s]
  bool signed_sweep{false};  ///< sweep negative pwm too instead of mirroring

  void validate() const;
};

/// Nonnegative sweep levels: 0, step, 2*step, ... and 255 appended if the
/// step does not land on it.
std::vector<int> sweep_levels(int step);

/// Drives each wheel in turn through the sweep with the other wheel held at
/// zero and records the mean speed after settling.
CalibrationTable calibrate(SpeedRig& rig, const CalibrationOptions& options);

// CSV with header `wheel,pwm,speed_mps`, sorted by wheel then pwm.
void write_calibration_csv(std::ostream& out, const CalibrationTable& table);
void save_calibration_csv(const std::filesystem::path& path,
                          const CalibrationTable& table);
CalibrationTable read_calibration_csv(std::istream& in);
CalibrationTable load_calibration_csv(const std::filesystem::path& path);

}  // namespace diffbot
