#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "diffbot/autonomy.hpp"
#include "diffbot/bus.hpp"
#include "diffbot/control.hpp"
#include "diffbot/plant.hpp"

namespace diffbot {

// ---------------------------------------------------------------------------
// Node logic as plain functions

struct TeleopMapping {
  double v_step{0.3};      ///< [m/s]
  double omega_step{1.0};  ///< [rad/s]
};

/// w/s drive forward/back, a/d turn left/right, space or x stop. Unmapped
/// keys yield nullopt.
std::optional<Twist2D> tele_converter(char key, const TeleopMapping& mapping);

/// Decomposes the twist and, if either wheel exceeds v_wheel_max, scales
/// both by the same factor.
WheelSpeeds wheel_speed_node(const Twist2D& twist, const ChassisGeometry& geom,
                             double v_wheel_max);

struct EstopDecision {
  bool override_zero{false};  ///< replace downstream twist with zero
  bool latched{false};
};

/// A cliff sets the latch; only an explicit reset with no cliff clears it.
EstopDecision estop_logic(bool cliff, bool latched, bool reset);

// ---------------------------------------------------------------------------
// Stack configuration

enum class ControllerKind { Pid, Segmented };
enum class AutonomyMode { Teleop, GoTo, Map };
enum class MapPoseSource { Truth, Odometry };

struct MapSettings {
  double resolution{0.05};
  Point2 origin{};
  int width{100};
  int height{100};
  MapperConfig mapper{};
  MapPoseSource pose_source{MapPoseSource::Truth};
};

struct StackConfig {
  double dt{0.02};          ///< bus tick [s]
  int control_period{5};    ///< controller runs every k-th tick
  ControllerKind controller{ControllerKind::Pid};
  PidGains gains{};
  std::optional<CalibrationTable> table;  ///< required for Segmented
  double v_wheel_max{0.5};  ///< [m/s]
  TeleopMapping teleop{};
  AutonomyMode mode{AutonomyMode::Teleop};
  std::optional<GoalSpec> goal;
  GoToPoseParams goto_params{};
  bool lidar_enabled{false};
  LidarConfig lidar{};
  std::optional<MapSettings> map;

  void validate() const;
};

/// Operator input applied at the start of tick `tick` (or the first tick
/// run after it).
struct InputEvent {
  std::int64_t tick{0};
  std::variant<bus::TeleopKey, bus::Empty, Pose2D> event;  ///< key, estop reset, goal
};

class NodeFailure : public std::runtime_error {
 public:
  NodeFailure(std::string node, const std::string& what)
      : std::runtime_error("node '" + node + "' failed: " + what),
        node_(std::move(node)) {}
  const std::string& node() const { return node_; }

 private:
  std::string node_;
};

class Node {
 public:
  virtual ~Node() = default;
  virtual const char* name() const = 0;
  virtual void tick(std::int64_t tick) = 0;
};

/// Shared state the nodes read and write. Exposed for inspection.
struct StackState {
  std::vector<InputEvent> inputs;
  bool estop_latched{false};
  OdometryState odometry{};
  std::optional<GoalSpec> goal;
  std::optional<std::int64_t> goal_reached_tick;
  std::optional<OccupancyGrid> grid;
};

/// The low-level node graph around a simulated plant, run by a fixed-order,
/// single-threaded tick loop:
///   input -> goto -> lidar -> estop -> tele_converter -> wheel_speed ->
///   controller (every k-th tick) -> launchpad -> odom -> mapper -> truth.
/// Envelopes published in a slot reach subscribers before the next slot.
class RobotStack {
 public:
  RobotStack(StackConfig config, Plant plant, Pose2D odometry_start);
  ~RobotStack();
  RobotStack(const RobotStack&) = delete;
  RobotStack& operator=(const RobotStack&) = delete;

  void enqueue(InputEvent event);

  /// Runs one tick. A throwing node aborts the tick with NodeFailure.
  void run_tick();
  void run_ticks(std::int64_t count);

  /// Index of the next tick to run.
  std::int64_t tick() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * config_.dt; }

  bus::TopicRegistry& registry() { return registry_; }
  const StackConfig& config() const { return config_; }
  const Plant& plant() const { return plant_; }
  Plant& plant() { return plant_; }
  const StackState& state() const { return state_; }

  const Pose2D& odometry() const { return state_.odometry.pose; }
  /// Resets dead-reckoning to a known pose.
  void correct_odometry(const Pose2D& reference);

  std::vector<std::string> node_names() const;

 private:
  StackConfig config_;
  Plant plant_;
  bus::TopicRegistry registry_;
  StackState state_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::int64_t tick_{0};
};

}  // namespace diffbot
