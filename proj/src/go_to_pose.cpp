#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffbot/autonomy.hpp"

namespace diffbot {

void GoalSpec::validate() const {
  if (!(pos_tolerance > 0.0) || !(heading_tolerance > 0.0)) {
    throw std::invalid_argument("goal tolerances must be positive");
  }
}

GoalPhase goal_phase(const Pose2D& current, const GoalSpec& spec) {
  const double distance =
      std::hypot(spec.goal.x - current.x, spec.goal.y - current.y);
  if (distance > spec.pos_tolerance) {
    return GoalPhase::Approach;
  }
  if (std::abs(normalize_angle(spec.goal.theta - current.theta)) >
      spec.heading_tolerance) {
    return GoalPhase::Align;
  }
  return GoalPhase::Arrived;
}

Twist2D go_to_pose(const Pose2D& current, const GoalSpec& spec,
                   const GoToPoseParams& params) {
  auto limit_turn = [&](double omega) {
    return std::clamp(omega, -params.omega_max, params.omega_max);
  };
  const double dx = spec.goal.x - current.x;
  const double dy = spec.goal.y - current.y;
  switch (goal_phase(current, spec)) {
    case GoalPhase::Approach: {
      const double bearing = normalize_angle(std::atan2(dy, dx) - current.theta);
      double v = 0.0;
      if (std::abs(bearing) <= params.bearing_gate) {
        v = std::min(params.k_v * std::hypot(dx, dy), params.v_max);
      }
      return {v, 0.0, limit_turn(params.k_bearing * bearing)};
    }
    case GoalPhase::Align: {
      const double heading_error = normalize_angle(spec.goal.theta - current.theta);
      return {0.0, 0.0, limit_turn(params.k_bearing * heading_error)};
    }
    case GoalPhase::Arrived:
      break;
  }
  return {};
}

}  // namespace diffbot
