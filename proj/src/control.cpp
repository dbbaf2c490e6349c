#include "diffbot/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "diffbot/format.hpp"

namespace diffbot {

namespace {

void check_pwm(int value, const char* which) {
  if (value < -kPwmLimit || value > kPwmLimit) {
    throw std::invalid_argument(std::string(which) + " pwm " +
                                std::to_string(value) +
                                " outside [-255, 255]");
  }
}

// Interpolation over a side whose pwm and speed both increase from (0, 0).
int lookup_positive(const std::vector<CalibrationPoint>& side, double target) {
  const auto upper =
      std::find_if(side.begin(), side.end(), [target](const CalibrationPoint& p) {
        return p.speed >= target;
      });
  if (upper == side.end()) {
    return kPwmLimit;
  }
  if (upper->speed == target) {
    return upper->pwm;
  }
  // upper cannot be the (0, 0) anchor because target > 0.
  const auto lower = std::prev(upper);
  const double fraction = (target - lower->speed) / (upper->speed - lower->speed);
  const double pwm = lower->pwm + fraction * (upper->pwm - lower->pwm);
  const int rounded = static_cast<int>(std::lround(pwm));
  // Rounding down onto a zero-speed entry would command no motion at all.
  if (lower->speed == 0.0 && rounded <= lower->pwm) {
    return std::min(lower->pwm + 1, upper->pwm);
  }
  return rounded;
}

}  // namespace

PwmPair::PwmPair(int left, int right) : left_(left), right_(right) {
  check_pwm(left, "left");
  check_pwm(right, "right");
}

void PidGains::validate() const {
  for (double gain : {kp, ki, kd}) {
    if (!std::isfinite(gain) || gain < 0.0) {
      throw std::invalid_argument("PID gains must be finite and nonnegative");
    }
  }
  if (!(std::isfinite(sample_time) && sample_time > 0.0)) {
    throw std::invalid_argument("PID sample_time must be positive");
  }
}

PidOutput pid_step(const PidState& state, const PidGains& gains, double target,
                   double measured) {
  if (!std::isfinite(target) || !std::isfinite(measured)) {
    throw std::invalid_argument("pid_step: non-finite target or measurement");
  }
  const double error = target - measured;
  const double ts = gains.sample_time;
  const double candidate_integral = state.integral + error * ts;
  const double raw = gains.kp * error + gains.ki * candidate_integral +
                     gains.kd * (error - state.prev_error) / ts;
  if (!std::isfinite(raw)) {
    throw std::invalid_argument("pid_step: non-finite controller output");
  }

  PidOutput out;
  out.state.saturated = std::abs(raw) > kPwmLimit;
  out.state.integral = out.state.saturated ? state.integral : candidate_integral;
  out.state.prev_error = error;
  const double clamped = std::clamp(raw, -double{kPwmLimit}, double{kPwmLimit});
  out.pwm = static_cast<int>(std::lround(clamped));
  return out;
}

WheelTable WheelTable::from_points(std::vector<CalibrationPoint> points) {
  if (points.empty()) {
    throw InvalidTableError("calibration table is empty");
  }
  bool has_anchor = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.pwm < -kPwmLimit || p.pwm > kPwmLimit || !std::isfinite(p.speed)) {
      throw InvalidTableError("calibration entry out of range at pwm " +
                              std::to_string(p.pwm));
    }
    if (p.pwm == 0) {
      has_anchor = p.speed == 0.0;
    }
    if (i > 0) {
      if (p.pwm <= points[i - 1].pwm) {
        throw InvalidTableError("calibration pwm not strictly increasing at " +
                                std::to_string(p.pwm));
      }
      if (p.speed < points[i - 1].speed) {
        throw InvalidTableError("calibration speed decreases at pwm " +
                                std::to_string(p.pwm));
      }
    }
  }
  if (!has_anchor) {
    throw InvalidTableError("calibration table lacks the (0, 0) entry");
  }
  return WheelTable(std::move(points));
}

WheelTable WheelTable::monotonized(std::vector<CalibrationPoint> points) {
  std::sort(points.begin(), points.end(),
            [](const CalibrationPoint& a, const CalibrationPoint& b) {
              return a.pwm < b.pwm;
            });
  points.erase(std::unique(points.begin(), points.end(),
                           [](const CalibrationPoint& a,
                              const CalibrationPoint& b) {
                             return a.pwm == b.pwm;
                           }),
               points.end());
  auto zero = std::lower_bound(
      points.begin(), points.end(), 0,
      [](const CalibrationPoint& p, int pwm) { return p.pwm < pwm; });
  if (zero == points.end() || zero->pwm != 0) {
    zero = points.insert(zero, CalibrationPoint{0, 0.0});
  }
  zero->speed = 0.0;

  double running = 0.0;
  for (auto it = std::next(zero); it != points.end(); ++it) {
    running = std::max(running, it->speed);
    it->speed = running;
  }
  running = 0.0;
  for (auto it = zero; it != points.begin();) {
    --it;
    running = std::min(running, it->speed);
    it->speed = running;
  }
  return from_points(std::move(points));
}

WheelTable WheelTable::mirrored() const {
  std::vector<CalibrationPoint> points;
  points.reserve(points_.size() * 2);
  for (auto it = points_.rbegin(); it != points_.rend(); ++it) {
    if (it->pwm > 0) {
      points.push_back({-it->pwm, -it->speed});
    }
  }
  for (const auto& p : points_) {
    if (p.pwm >= 0) {
      points.push_back(p);
    }
  }
  return from_points(std::move(points));
}

int WheelTable::deadband_pwm() const {
  int deadband = 0;
  for (const auto& p : points_) {
    if (p.pwm >= 0 && p.speed == 0.0) {
      deadband = p.pwm;
    }
  }
  return deadband;
}

double WheelTable::max_speed() const {
  return points_.empty() ? 0.0 : points_.back().speed;
}

int segmented_lookup(const WheelTable& table, double target) {
  if (!std::isfinite(target)) {
    throw std::invalid_argument("segmented_lookup: non-finite target");
  }
  const auto& points = table.points();
  if (points.empty()) {
    throw InvalidTableError("calibration table is empty");
  }
  if (target == 0.0) {
    return 0;
  }
  std::vector<CalibrationPoint> side;
  if (target > 0.0) {
    for (const auto& p : points) {
      if (p.pwm >= 0) {
        side.push_back(p);
      }
    }
    return lookup_positive(side, target);
  }
  for (auto it = points.rbegin(); it != points.rend(); ++it) {
    if (it->pwm <= 0) {
      side.push_back({-it->pwm, -it->speed});
    }
  }
  return -lookup_positive(side, -target);
}

PwmPair segmented_command(const CalibrationTable& table,
                          const WheelSpeeds& targets) {
  return {segmented_lookup(table.left, targets.left),
          segmented_lookup(table.right, targets.right)};
}

void CalibrationOptions::validate() const {
  if (step <= 0 || step > kPwmLimit) {
    throw std::invalid_argument("calibration step must be in [1, 255]");
  }
  if (!(settle_time >= 0.0) || !(measurement_window > 0.0)) {
    throw std::invalid_argument(
        "calibration settle_time must be >= 0 and window > 0");
  }
}

std::vector<int> sweep_levels(int step) {
  if (step <= 0) {
    throw std::invalid_argument("calibration step must be positive");
  }
  std::vector<int> levels;
  for (int pwm = 0; pwm <= kPwmLimit; pwm += step) {
    levels.push_back(pwm);
  }
  if (levels.back() != kPwmLimit) {
    levels.push_back(kPwmLimit);
  }
  return levels;
}

CalibrationTable calibrate(SpeedRig& rig, const CalibrationOptions& options) {
  options.validate();
  const std::vector<int> levels = sweep_levels(options.step);

  auto measure = [&](bool left_wheel, int pwm) {
    try {
      rig.apply(left_wheel ? PwmPair{pwm, 0} : PwmPair{0, pwm});
    } catch (const CommandRejected& e) {
      throw CalibrationAborted(std::string("calibration aborted on ") +
                               (left_wheel ? "left" : "right") +
                               " wheel at pwm " + std::to_string(pwm) + ": " +
                               e.what());
    }
    rig.run(options.settle_time);
    const WheelSpeeds mean = rig.run(options.measurement_window);
    return left_wheel ? mean.left : mean.right;
  };
  auto rest = [&]() {
    try {
      rig.apply(PwmPair{0, 0});
    } catch (const CommandRejected& e) {
      throw CalibrationAborted(std::string("calibration aborted at rest: ") +
                               e.what());
    }
    rig.run(options.settle_time);
  };

  auto sweep_wheel = [&](bool left_wheel) {
    std::vector<CalibrationPoint> points;
    for (int pwm : levels) {
      points.push_back({pwm, measure(left_wheel, pwm)});
    }
    rest();
    if (!options.signed_sweep) {
      return WheelTable::monotonized(std::move(points)).mirrored();
    }
    for (int pwm : levels) {
      if (pwm > 0) {
        points.push_back({-pwm, measure(left_wheel, -pwm)});
      }
    }
    rest();
    return WheelTable::monotonized(std::move(points));
  };

  CalibrationTable table;
  table.left = sweep_wheel(true);
  table.right = sweep_wheel(false);
  return table;
}

void write_calibration_csv(std::ostream& out, const CalibrationTable& table) {
  out << "wheel,pwm,speed_mps\n";
  for (const auto& [name, wheel] :
       {std::pair{"left", &table.left}, std::pair{"right", &table.right}}) {
    for (const auto& p : wheel->points()) {
      out << name << ',' << p.pwm << ',' << format_double(p.speed) << '\n';
    }
  }
}

void save_calibration_csv(const std::filesystem::path& path,
                          const CalibrationTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write calibration table: " + path.string());
  }
  write_calibration_csv(out, table);
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

CalibrationTable read_calibration_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "wheel,pwm,speed_mps") {
    throw InvalidTableError("calibration CSV line 1: expected header "
                            "'wheel,pwm,speed_mps'");
  }
  std::vector<CalibrationPoint> left;
  std::vector<CalibrationPoint> right;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::istringstream fields(line);
    std::string wheel;
    std::string pwm_text;
    std::string speed_text;
    if (!std::getline(fields, wheel, ',') || !std::getline(fields, pwm_text, ',') ||
        !std::getline(fields, speed_text)) {
      throw InvalidTableError("calibration CSV line " + std::to_string(line_no) +
                              ": expected 3 fields");
    }
    CalibrationPoint point;
    try {
      std::size_t used = 0;
      point.pwm = std::stoi(pwm_text, &used);
      if (used != pwm_text.size()) throw std::invalid_argument(pwm_text);
      point.speed = std::stod(speed_text, &used);
      if (used != speed_text.size()) throw std::invalid_argument(speed_text);
    } catch (const std::exception&) {
      throw InvalidTableError("calibration CSV line " + std::to_string(line_no) +
                              ": malformed number");
    }
    if (wheel == "left") {
      left.push_back(point);
    } else if (wheel == "right") {
      right.push_back(point);
    } else {
      throw InvalidTableError("calibration CSV line " + std::to_string(line_no) +
                              ": unknown wheel '" + wheel + "'");
    }
  }
  return {WheelTable::from_points(std::move(left)),
          WheelTable::from_points(std::move(right))};
}

CalibrationTable load_calibration_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read calibration table: " + path.string());
  }
  return read_calibration_csv(in);
}

}  // namespace diffbot
