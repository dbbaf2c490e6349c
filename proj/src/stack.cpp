#include "diffbot/stack.hpp"

#include <algorithm>
#include <cmath>

namespace diffbot {

namespace topics = bus::topics;

std::optional<Twist2D> tele_converter(char key, const TeleopMapping& mapping) {
  switch (key) {
    case 'w': return Twist2D{mapping.v_step, 0.0, 0.0};
    case 's': return Twist2D{-mapping.v_step, 0.0, 0.0};
    case 'a': return Twist2D{0.0, 0.0, mapping.omega_step};
    case 'd': return Twist2D{0.0, 0.0, -mapping.omega_step};
    case ' ':
    case 'x': return Twist2D{};
    default: return std::nullopt;
  }
}

WheelSpeeds wheel_speed_node(const Twist2D& twist, const ChassisGeometry& geom,
                             double v_wheel_max) {
  WheelSpeeds wheels = decompose(twist, geom);
  const double peak = std::max(std::abs(wheels.left), std::abs(wheels.right));
  if (peak > v_wheel_max) {
    const double scale = v_wheel_max / peak;
    wheels.left *= scale;
    wheels.right *= scale;
  }
  return wheels;
}

EstopDecision estop_logic(bool cliff, bool latched, bool reset) {
  if (reset && !cliff) {
    latched = false;
  }
  if (cliff) {
    latched = true;
  }
  return {latched, latched};
}

void StackConfig::validate() const {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("tick dt must be positive");
  }
  if (control_period < 1) {
    throw std::invalid_argument("control_period must be at least 1");
  }
  gains.validate();
  if (controller == ControllerKind::Segmented && !table) {
    throw std::invalid_argument("segmented control needs a calibration table");
  }
  if (!(v_wheel_max > 0.0)) {
    throw std::invalid_argument("v_wheel_max must be positive");
  }
  if (goal) {
    goal->validate();
  }
  lidar.validate();
  if (mode == AutonomyMode::Map && !map) {
    throw std::invalid_argument("map mode needs map settings");
  }
}

namespace {

class InputNode : public Node {
 public:
  InputNode(bus::TopicRegistry& registry, StackState& state)
      : registry_(registry), state_(state) {}
  const char* name() const override { return "input"; }

  void tick(std::int64_t tick) override {
    auto& inputs = state_.inputs;
    auto due_end = std::find_if(inputs.begin(), inputs.end(),
                                [tick](const InputEvent& e) { return e.tick > tick; });
    for (auto it = inputs.begin(); it != due_end; ++it) {
      std::visit(
          [&](const auto& event) {
            using T = std::decay_t<decltype(event)>;
            if constexpr (std::is_same_v<T, bus::TeleopKey>) {
              registry_.publish(topics::kTeleopKey, event, tick);
            } else if constexpr (std::is_same_v<T, bus::Empty>) {
              registry_.publish(topics::kEstopReset, event, tick);
            } else {
              registry_.publish(topics::kGoal, event, tick);
            }
          },
          it->event);
    }
    inputs.erase(inputs.begin(), due_end);
  }

 private:
  bus::TopicRegistry& registry_;
  StackState& state_;
};

class GoToNode : public Node {
 public:
  GoToNode(bus::TopicRegistry& registry, StackState& state,
           const StackConfig& config, Pose2D start)
      : registry_(registry), state_(state), config_(config), pose_(start) {
    registry_.subscribe(topics::kOdom, [this](const bus::Envelope& e) {
      pose_ = std::get<bus::Odometry>(e.payload).pose;
    });
    registry_.subscribe(topics::kGoal, [this](const bus::Envelope& e) {
      GoalSpec spec = config_.goal.value_or(GoalSpec{});
      spec.goal = std::get<Pose2D>(e.payload);
      state_.goal = spec;
      state_.goal_reached_tick.reset();
    });
  }
  const char* name() const override { return "goto"; }

  void tick(std::int64_t tick) override {
    if (config_.mode != AutonomyMode::GoTo || !state_.goal) {
      return;
    }
    if (!state_.goal_reached_tick &&
        goal_phase(pose_, *state_.goal) == GoalPhase::Arrived) {
      state_.goal_reached_tick = tick;
    }
    registry_.publish(topics::kCmdVel,
                      go_to_pose(pose_, *state_.goal, config_.goto_params), tick);
  }

 private:
  bus::TopicRegistry& registry_;
  StackState& state_;
  const StackConfig& config_;
  Pose2D pose_;
};

class LidarNode : public Node {
 public:
  LidarNode(bus::TopicRegistry& registry, const Plant& plant,
            const StackConfig& config)
      : registry_(registry), plant_(plant), config_(config) {}
  const char* name() const override { return "lidar"; }

  void tick(std::int64_t tick) override {
    if (!(config_.lidar_enabled || config_.mode == AutonomyMode::Map)) {
      return;
    }
    // A scan is due whenever the scan counter floor(t * rate) advances.
    const auto count = [&](std::int64_t n) {
      return static_cast<std::int64_t>(
          std::floor(static_cast<double>(n) * config_.dt * config_.lidar.scan_rate));
    };
    if (tick == 0 || count(tick) > count(tick - 1)) {
      registry_.publish(topics::kScan, plant_.scan(config_.lidar), tick);
    }
  }

 private:
  bus::TopicRegistry& registry_;
  const Plant& plant_;
  const StackConfig& config_;
};

class EstopNode : public Node {
 public:
  EstopNode(bus::TopicRegistry& registry, StackState& state, const Plant& plant)
      : registry_(registry), state_(state), plant_(plant) {
    registry_.subscribe(topics::kEstopReset,
                        [this](const bus::Envelope&) { reset_pending_ = true; });
  }
  const char* name() const override { return "estop"; }

  void tick(std::int64_t tick) override {
    const EstopDecision decision =
        estop_logic(plant_.cliff(), state_.estop_latched, reset_pending_);
    reset_pending_ = false;
    if (tick == 0 || decision.latched != state_.estop_latched) {
      registry_.publish(topics::kEstop, bus::EstopFlag{decision.latched}, tick);
      registry_.publish(topics::kLedStatus,
                        bus::LedStatus{decision.latched ? "estop" : "ok"}, tick);
    }
    state_.estop_latched = decision.latched;
  }

 private:
  bus::TopicRegistry& registry_;
  StackState& state_;
  const Plant& plant_;
  bool reset_pending_{false};
};

class TeleConverterNode : public Node {
 public:
  TeleConverterNode(bus::TopicRegistry& registry, const StackConfig& config)
      : registry_(registry), config_(config) {
    registry_.subscribe(topics::kTeleopKey, [this](const bus::Envelope& e) {
      keys_.push_back(std::get<bus::TeleopKey>(e.payload).key);
    });
  }
  const char* name() const override { return "tele_converter"; }

  void tick(std::int64_t tick) override {
    for (char key : keys_) {
      if (auto twist = tele_converter(key, config_.teleop)) {
        registry_.publish(topics::kCmdVel, *twist, tick);
      }
    }
    keys_.clear();
  }

 private:
  bus::TopicRegistry& registry_;
  const StackConfig& config_;
  std::vector<char> keys_;
};

class WheelSpeedNode : public Node {
 public:
  WheelSpeedNode(bus::TopicRegistry& registry, const StackConfig& config,
                 const ChassisGeometry& geometry)
      : registry_(registry), config_(config), geometry_(geometry) {
    registry_.subscribe(topics::kCmdVel, [this](const bus::Envelope& e) {
      command_ = std::get<Twist2D>(e.payload);
    });
    registry_.subscribe(topics::kEstop, [this](const bus::Envelope& e) {
      latched_ = std::get<bus::EstopFlag>(e.payload).active;
    });
  }
  const char* name() const override { return "wheel_speed"; }

  void tick(std::int64_t tick) override {
    if (latched_) {
      // Drop the held command so motion does not resume on reset.
      command_ = Twist2D{};
    }
    registry_.publish(topics::kWheelTarget,
                      wheel_speed_node(command_, geometry_, config_.v_wheel_max),
                      tick);
  }

 private:
  bus::TopicRegistry& registry_;
  const StackConfig& config_;
  const ChassisGeometry& geometry_;
  Twist2D command_{};
  bool latched_{false};
};

class ControllerNode : public Node {
 public:
  ControllerNode(bus::TopicRegistry& registry, const StackConfig& config,
                 const EncoderConfig& encoder)
      : registry_(registry), config_(config), encoder_(encoder) {
    registry_.subscribe(topics::kWheelTarget, [this](const bus::Envelope& e) {
      target_ = std::get<WheelSpeeds>(e.payload);
    });
    registry_.subscribe(topics::kEncoder, [this](const bus::Envelope& e) {
      const auto& s = std::get<EncoderSample>(e.payload);
      ticks_.delta_ticks_left += s.delta_ticks_left;
      ticks_.delta_ticks_right += s.delta_ticks_right;
      ticks_.dt += s.dt;
    });
    registry_.subscribe(topics::kEstop, [this](const bus::Envelope& e) {
      latched_ = std::get<bus::EstopFlag>(e.payload).active;
    });
  }
  const char* name() const override { return config_.controller == ControllerKind::Pid
                                                 ? "pid_control"
                                                 : "sec_control"; }

  void tick(std::int64_t tick) override {
    const bool control_tick = tick % config_.control_period == 0;
    const bool latch_edge = latched_ && !was_latched_;
    was_latched_ = latched_;
    if (latched_) {
      if (control_tick || latch_edge) {
        left_ = PidState{};
        right_ = PidState{};
        ticks_ = EncoderSample{};
        registry_.publish(topics::kPwm, PwmPair{0, 0}, tick);
      }
      return;
    }
    if (!control_tick) {
      return;
    }
    const WheelSpeeds measured =
        ticks_.dt > 0.0 ? ticks_to_wheel_speed(ticks_, encoder_) : WheelSpeeds{};
    ticks_ = EncoderSample{};

    PwmPair pwm;
    if (config_.controller == ControllerKind::Pid) {
      const PidOutput l = pid_step(left_, config_.gains, target_.left, measured.left);
      const PidOutput r =
          pid_step(right_, config_.gains, target_.right, measured.right);
      left_ = l.state;
      right_ = r.state;
      pwm = PwmPair{l.pwm, r.pwm};
    } else {
      pwm = segmented_command(*config_.table, target_);
    }
    registry_.publish(topics::kPwm, pwm, tick);
  }

 private:
  bus::TopicRegistry& registry_;
  const StackConfig& config_;
  const EncoderConfig& encoder_;
  WheelSpeeds target_{};
  EncoderSample ticks_{};
  PidState left_{};
  PidState right_{};
  bool latched_{false};
  bool was_latched_{false};
};

class LaunchpadNode : public Node {
 public:
  LaunchpadNode(bus::TopicRegistry& registry, Plant& plant, const StackConfig& config)
      : registry_(registry), plant_(plant), config_(config) {
    registry_.subscribe(topics::kPwm, [this](const bus::Envelope& e) {
      pwm_ = std::get<PwmPair>(e.payload);
    });
  }
  const char* name() const override { return "launchpad_node"; }

  void tick(std::int64_t tick) override {
    plant_.apply(pwm_);
    registry_.publish(topics::kEncoder, plant_.step(config_.dt), tick);
  }

 private:
  bus::TopicRegistry& registry_;
  Plant& plant_;
  const StackConfig& config_;
  PwmPair pwm_{};
};

class OdomNode : public Node {
 public:
  OdomNode(bus::TopicRegistry& registry, StackState& state, const PlantConfig& plant)
      : registry_(registry), state_(state), plant_(plant) {
    registry_.subscribe(topics::kEncoder, [this](const bus::Envelope& e) {
      samples_.push_back(std::get<EncoderSample>(e.payload));
    });
  }
  const char* name() const override { return "odom_node"; }

  void tick(std::int64_t tick) override {
    Twist2D twist{};
    for (const EncoderSample& sample : samples_) {
      const WheelSpeeds wheels = ticks_to_wheel_speed(sample, plant_.encoder);
      state_.odometry.pose = odometry_step(state_.odometry.pose, wheels,
                                           plant_.geometry, sample.dt);
      twist = synthesize(wheels, plant_.geometry);
    }
    samples_.clear();
    registry_.publish(topics::kOdom, bus::Odometry{state_.odometry.pose, twist},
                      tick);
  }

 private:
  bus::TopicRegistry& registry_;
  StackState& state_;
  const PlantConfig& plant_;
  std::vector<EncoderSample> samples_;
};

class MapperNode : public Node {
 public:
  MapperNode(bus::TopicRegistry& registry, StackState& state,
             const MapSettings& settings, Pose2D start)
      : state_(state), settings_(settings), pose_(start) {
    const char* pose_topic = settings.pose_source == MapPoseSource::Truth
                                 ? topics::kTruth
                                 : topics::kOdom;
    registry.subscribe(pose_topic, [this](const bus::Envelope& e) {
      if (const auto* odom = std::get_if<bus::Odometry>(&e.payload)) {
        pose_ = odom->pose;
      } else {
        pose_ = std::get<Pose2D>(e.payload);
      }
    });
    // The scan is taken before this tick's motion, so the latest pose
    // received so far is the one it belongs to.
    registry.subscribe(topics::kScan, [this](const bus::Envelope& e) {
      grid_update(*state_.grid, pose_, std::get<LidarScan>(e.payload),
                  settings_.mapper);
    });
  }
  const char* name() const override { return "mapper"; }
  void tick(std::int64_t) override {}

 private:
  StackState& state_;
  const MapSettings& settings_;
  Pose2D pose_;
};

class TruthNode : public Node {
 public:
  TruthNode(bus::TopicRegistry& registry, const Plant& plant)
      : registry_(registry), plant_(plant) {}
  const char* name() const override { return "truth"; }

  void tick(std::int64_t tick) override {
    registry_.publish(topics::kTruth, plant_.truth().pose, tick);
  }

 private:
  bus::TopicRegistry& registry_;
  const Plant& plant_;
};

}  // namespace

RobotStack::RobotStack(StackConfig config, Plant plant, Pose2D odometry_start)
    : config_(std::move(config)), plant_(std::move(plant)) {
  config_.validate();
  bus::declare_standard_topics(registry_);
  state_.odometry = {odometry_start, config_.dt};
  state_.goal = config_.goal;
  if (config_.map) {
    const auto& m = *config_.map;
    state_.grid.emplace(m.resolution, Pose2D{m.origin.x, m.origin.y, 0.0}, m.width,
                        m.height, m.mapper.l_min, m.mapper.l_max);
  }

  const Pose2D truth_start = plant_.truth().pose;
  nodes_.push_back(std::make_unique<InputNode>(registry_, state_));
  nodes_.push_back(
      std::make_unique<GoToNode>(registry_, state_, config_, odometry_start));
  nodes_.push_back(std::make_unique<LidarNode>(registry_, plant_, config_));
  nodes_.push_back(std::make_unique<EstopNode>(registry_, state_, plant_));
  nodes_.push_back(std::make_unique<TeleConverterNode>(registry_, config_));
  nodes_.push_back(std::make_unique<WheelSpeedNode>(registry_, config_,
                                                    plant_.config().geometry));
  nodes_.push_back(
      std::make_unique<ControllerNode>(registry_, config_, plant_.config().encoder));
  nodes_.push_back(std::make_unique<LaunchpadNode>(registry_, plant_, config_));
  nodes_.push_back(std::make_unique<OdomNode>(registry_, state_, plant_.config()));
  if (config_.map) {
    const Pose2D map_start = config_.map->pose_source == MapPoseSource::Truth
                                 ? truth_start
                                 : odometry_start;
    nodes_.push_back(
        std::make_unique<MapperNode>(registry_, state_, *config_.map, map_start));
  }
  nodes_.push_back(std::make_unique<TruthNode>(registry_, plant_));
}

RobotStack::~RobotStack() = default;

void RobotStack::enqueue(InputEvent event) {
  auto& inputs = state_.inputs;
  const auto pos = std::upper_bound(
      inputs.begin(), inputs.end(), event.tick,
      [](std::int64_t tick, const InputEvent& e) { return tick < e.tick; });
  inputs.insert(pos, std::move(event));
}

void RobotStack::run_tick() {
  for (const auto& node : nodes_) {
    try {
      node->tick(tick_);
      registry_.dispatch();
    } catch (const std::exception& e) {
      throw NodeFailure(node->name(), e.what());
    }
  }
  ++tick_;
}

void RobotStack::run_ticks(std::int64_t count) {
  for (std::int64_t i = 0; i < count; ++i) {
    run_tick();
  }
}

void RobotStack::correct_odometry(const Pose2D& reference) {
  state_.odometry = correct(state_.odometry, reference);
}

std::vector<std::string> RobotStack::node_names() const {
  std::vector<std::string> names;
  for (const auto& node : nodes_) {
    names.emplace_back(node->name());
  }
  return names;
}

}  // namespace diffbot
