#include "diffbot/plant.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace diffbot {

void MotorParams::validate() const {
  if (!(tau > 0.0) || !(v_max > 0.0)) {
    throw std::invalid_argument("motor tau and v_max must be positive");
  }
  if (deadband_pwm < 0 || deadband_pwm >= kPwmLimit) {
    throw std::invalid_argument("motor deadband_pwm must be in [0, 254]");
  }
  if (!(noise_std >= 0.0)) {
    throw std::invalid_argument("motor noise_std must be nonnegative");
  }
}

double motor_command_speed(int pwm, const MotorParams& params) {
  const int magnitude = std::max(0, std::abs(pwm) - params.deadband_pwm);
  const double speed = static_cast<double>(magnitude) /
                       static_cast<double>(kPwmLimit - params.deadband_pwm) *
                       params.v_max;
  return pwm < 0 ? -speed : speed;
}

double motor_step(double v, int pwm, const MotorParams& params, double dt) {
  if (pwm < -kPwmLimit || pwm > kPwmLimit) {
    throw std::invalid_argument("motor pwm " + std::to_string(pwm) +
                                " outside [-255, 255]");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument("motor dt must be positive");
  }
  const double target = motor_command_speed(pwm, params);
  return v + (target - v) * (1.0 - std::exp(-dt / params.tau));
}

double motor_step(double v, int pwm, const MotorParams& params, double dt,
                  std::mt19937_64& rng) {
  const double next = motor_step(v, pwm, params, dt);
  if (params.noise_std == 0.0) {
    return next;
  }
  std::normal_distribution<double> noise(0.0, params.noise_std * std::sqrt(dt));
  return next + noise(rng);
}

GroundTruth true_pose_step(const GroundTruth& truth, const ChassisGeometry& geom,
                           double dt) {
  const Twist2D body = synthesize(truth.wheel_speeds, geom);
  GroundTruth next = truth;
  next.time += dt;
  next.collision = false;
  const Pose2D& p = truth.pose;
  if (body.omega == 0.0) {
    next.pose = {p.x + std::cos(p.theta) * body.vx * dt,
                 p.y + std::sin(p.theta) * body.vx * dt, p.theta};
    return next;
  }
  const double theta_next = p.theta + body.omega * dt;
  const double radius = body.vx / body.omega;
  next.pose = {p.x + radius * (std::sin(theta_next) - std::sin(p.theta)),
               p.y - radius * (std::cos(theta_next) - std::cos(p.theta)),
               theta_next};
  return next;
}

GroundTruth true_pose_step(const GroundTruth& truth, const ChassisGeometry& geom,
                           double dt, const World& world, double body_radius) {
  GroundTruth next = true_pose_step(truth, geom, dt);
  const Point2 from{truth.pose.x, truth.pose.y};
  const Point2 to{next.pose.x, next.pose.y};
  if (from == to) {
    return next;
  }
  bool blocked = !world.bounds.contains(to);
  for (const auto& wall : world.walls) {
    if (blocked) {
      break;
    }
    const double clearance = point_segment_distance(to, wall);
    if (clearance < body_radius && clearance < point_segment_distance(from, wall)) {
      blocked = true;
      break;
    }
    // Tunnelling check: the path itself crossing the wall.
    const double heading = std::atan2(to.y - from.y, to.x - from.x);
    if (auto d = ray_segment_distance(from, heading, wall);
        d && *d <= std::hypot(to.x - from.x, to.y - from.y)) {
      blocked = true;
    }
  }
  if (blocked) {
    next.pose.x = truth.pose.x;
    next.pose.y = truth.pose.y;
    next.collision = true;
  }
  return next;
}

EncoderSample encoder_sample(const GroundTruth& truth, const EncoderConfig& cfg,
                             double dt, EncoderResidual& residual) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("encoder dt must be positive");
  }
  const double ticks_per_meter = 1.0 / cfg.meters_per_tick();
  residual.ideal_left += truth.wheel_speeds.left * dt * ticks_per_meter;
  residual.ideal_right += truth.wheel_speeds.right * dt * ticks_per_meter;
  const auto total_left = static_cast<std::int64_t>(std::floor(residual.ideal_left));
  const auto total_right =
      static_cast<std::int64_t>(std::floor(residual.ideal_right));
  EncoderSample sample{total_left - residual.emitted_left,
                       total_right - residual.emitted_right, dt};
  residual.emitted_left = total_left;
  residual.emitted_right = total_right;
  return sample;
}

void LidarConfig::validate() const {
  if (beams <= 0) {
    throw std::invalid_argument("lidar beams must be positive");
  }
  if (!(max_range > 0.0) || !(scan_rate > 0.0)) {
    throw std::invalid_argument("lidar max_range and scan_rate must be positive");
  }
}

LidarScan lidar_scan(const World& world, const Pose2D& pose,
                     const LidarConfig& cfg) {
  LidarScan scan;
  scan.angle_min = 0.0;
  scan.angle_increment = 2.0 * std::numbers::pi / cfg.beams;
  scan.max_range = cfg.max_range;
  scan.ranges.reserve(static_cast<std::size_t>(cfg.beams));
  const Point2 origin{pose.x, pose.y};
  for (int i = 0; i < cfg.beams; ++i) {
    const double angle = pose.theta + scan.angle_increment * i;
    const auto hit = cast_ray(world, origin, angle);
    scan.ranges.push_back(hit && *hit <= cfg.max_range ? *hit : kNoReturn);
  }
  return scan;
}

bool cliff_check(const World& world, const Pose2D& pose) {
  const Point2 probe{pose.x + kCliffProbeOffset * std::cos(pose.theta),
                     pose.y + kCliffProbeOffset * std::sin(pose.theta)};
  for (const auto& region : world.cliffs) {
    if (point_in_polygon(probe, region)) {
      return true;
    }
  }
  return false;
}

double ultrasonic_range(const World& world, const Pose2D& pose) {
  constexpr double half_cone = 15.0 * std::numbers::pi / 180.0;
  const Point2 origin{pose.x, pose.y};
  double best = kNoReturn;
  for (int i = 0; i < 5; ++i) {
    const double angle = pose.theta - half_cone + half_cone * 0.5 * i;
    if (auto hit = cast_ray(world, origin, angle);
        hit && *hit <= kUltrasonicMaxRange && *hit < best) {
      best = *hit;
    }
  }
  return best;
}

void PlantConfig::validate() const {
  geometry.validate();
  encoder.validate();
  left_motor.validate();
  right_motor.validate();
  if (!(body_radius >= 0.0)) {
    throw std::invalid_argument("body_radius must be nonnegative");
  }
}

Plant::Plant(PlantConfig config, World world, Pose2D start)
    : config_(std::move(config)), world_(std::move(world)), rng_(config_.seed) {
  config_.validate();
  truth_.pose = start;
}

EncoderSample Plant::step(double dt) {
  truth_.wheel_speeds.left = motor_step(truth_.wheel_speeds.left, pwm_.left(),
                                        config_.left_motor, dt, rng_);
  truth_.wheel_speeds.right = motor_step(truth_.wheel_speeds.right, pwm_.right(),
                                         config_.right_motor, dt, rng_);
  truth_ = true_pose_step(truth_, config_.geometry, dt, world_,
                          config_.body_radius);
  return encoder_sample(truth_, config_.encoder, dt, residual_);
}

namespace {

World open_space() {
  World world;
  constexpr double far = 1e9;
  world.bounds = {-far, -far, far, far};
  return world;
}

}  // namespace

PlantRig::PlantRig(const PlantConfig& config, double dt)
    : plant_(config, open_space(), Pose2D{}), dt_(dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("rig dt must be positive");
  }
}

void PlantRig::apply(const PwmPair& pwm) { plant_.apply(pwm); }

WheelSpeeds PlantRig::run(double duration) {
  const auto steps = static_cast<long>(std::llround(duration / dt_));
  if (steps <= 0) {
    return {};
  }
  std::int64_t left = 0;
  std::int64_t right = 0;
  for (long i = 0; i < steps; ++i) {
    const EncoderSample s = plant_.step(dt_);
    left += s.delta_ticks_left;
    right += s.delta_ticks_right;
  }
  return ticks_to_wheel_speed({left, right, dt_ * static_cast<double>(steps)},
                              plant_.config().encoder);
}

}  // namespace diffbot
