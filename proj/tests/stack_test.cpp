#include "diffbot/stack.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace diffbot;
namespace topics = diffbot::bus::topics;

namespace {

World open_world() {
  World w;
  w.bounds = {-50, -50, 50, 50};
  return w;
}

World cliff_ahead() {
  World w = open_world();
  w.cliffs = {{{1.0, -5.0}, {3.0, -5.0}, {3.0, 5.0}, {1.0, 5.0}}};
  return w;
}

struct Harness {
  std::unique_ptr<RobotStack> stack;
  std::map<std::string, std::vector<bus::Envelope>> seen;

  explicit Harness(StackConfig cfg = {}, World world = open_world(), PlantConfig plant = {},
                   Pose2D start = {}) {
    stack = std::make_unique<RobotStack>(cfg, Plant(plant, std::move(world), start), start);
    stack->registry().tap([this](const bus::Envelope& e) { seen[e.topic].push_back(e); });
  }

  void key(std::int64_t tick, char k) { stack->enqueue({tick, bus::TeleopKey{k}}); }

  template <typename T>
  std::vector<T> values(const std::string& topic) const {
    std::vector<T> out;
    if (auto it = seen.find(topic); it != seen.end()) {
      for (const auto& e : it->second) out.push_back(std::get<T>(e.payload));
    }
    return out;
  }

  const bus::Envelope* last(const std::string& topic, std::int64_t tick) const {
    const bus::Envelope* found = nullptr;
    if (auto it = seen.find(topic); it != seen.end()) {
      for (const auto& e : it->second) {
        if (e.tick == tick) found = &e;
      }
    }
    return found;
  }
};

}  // namespace

TEST(TeleConverter, Mapping) {
  const TeleopMapping m;
  EXPECT_EQ(tele_converter('w', m), (Twist2D{0.3, 0, 0}));
  EXPECT_EQ(tele_converter('s', m), (Twist2D{-0.3, 0, 0}));
  EXPECT_EQ(tele_converter('a', m), (Twist2D{0, 0, 1.0}));
  EXPECT_EQ(tele_converter('d', m), (Twist2D{0, 0, -1.0}));
  EXPECT_EQ(tele_converter(' ', m), (Twist2D{}));
  EXPECT_EQ(tele_converter('x', m), (Twist2D{}));
  EXPECT_FALSE(tele_converter('q', m).has_value());
  EXPECT_EQ(tele_converter('w', TeleopMapping{0.5, 2.0}), (Twist2D{0.5, 0, 0}));
}

TEST(WheelSpeedNode, DecomposesAndScales) {
  const ChassisGeometry g{0.2, 0.034};
  const WheelSpeeds a = wheel_speed_node({0.3, 0, 1.0}, g, 0.5);
  EXPECT_NEAR(a.left, 0.2, 1e-12);
  EXPECT_NEAR(a.right, 0.4, 1e-12);
  EXPECT_EQ(wheel_speed_node({}, g, 0.5), (WheelSpeeds{0, 0}));
  const WheelSpeeds b = wheel_speed_node({0.6, 0, 2.0}, g, 0.5);  // raw (0.4, 0.8)
  EXPECT_NEAR(b.right, 0.5, 1e-12);
  EXPECT_NEAR(b.left / b.right, 0.5, 1e-12);
  const WheelSpeeds c = wheel_speed_node({-0.6, 0, 0}, g, 0.5);
  EXPECT_NEAR(c.left, -0.5, 1e-12);
  EXPECT_NEAR(c.right, -0.5, 1e-12);
}

TEST(EstopLogic, TruthTable) {
  EXPECT_FALSE(estop_logic(false, false, false).override_zero);
  EXPECT_FALSE(estop_logic(false, false, false).latched);
  EXPECT_TRUE(estop_logic(true, false, false).override_zero);
  EXPECT_TRUE(estop_logic(true, false, false).latched);
  EXPECT_TRUE(estop_logic(false, true, false).latched);
  EXPECT_FALSE(estop_logic(false, true, true).latched);
  EXPECT_FALSE(estop_logic(false, true, true).override_zero);
  EXPECT_TRUE(estop_logic(true, true, true).latched);
}

TEST(RobotStack, NodeOrder) {
  Harness h;
  EXPECT_EQ(h.stack->node_names(),
            (std::vector<std::string>{"input", "goto", "lidar", "estop", "tele_converter",
                                      "wheel_speed", "pid_control", "launchpad_node",
                                      "odom_node", "truth"}));
}

TEST(RobotStack, IdleStaysAtRest) {
  Harness h({}, open_world(), {}, {1.0, 2.0, 0.5});
  h.stack->run_ticks(200);
  const auto odom = h.values<bus::Odometry>(topics::kOdom);
  ASSERT_EQ(odom.size(), 200u);
  for (const auto& o : odom) EXPECT_EQ(o.pose, (Pose2D{1.0, 2.0, 0.5}));
  EXPECT_EQ(h.stack->plant().truth().pose, (Pose2D{1.0, 2.0, 0.5}));
  for (const auto& p : h.values<PwmPair>(topics::kPwm)) EXPECT_EQ(p, PwmPair(0, 0));
}

TEST(RobotStack, KeyReachesPlantOnFirstControlTick) {
  Harness h;
  h.key(0, 'w');
  h.stack->run_tick();
  const auto* pwm = h.last(topics::kPwm, 0);
  ASSERT_NE(pwm, nullptr);
  EXPECT_GT(std::get<PwmPair>(pwm->payload).left(), 0);
  EXPECT_EQ(h.stack->plant().applied(), std::get<PwmPair>(pwm->payload));
  EXPECT_EQ(h.values<Twist2D>(topics::kCmdVel).front(), (Twist2D{0.3, 0, 0}));
}

TEST(RobotStack, KeyBetweenControlTicksWaitsForNextOne) {
  Harness h;
  h.key(2, 'w');
  h.stack->run_ticks(5);
  EXPECT_EQ(h.stack->plant().applied(), PwmPair(0, 0));
  h.stack->run_tick();  // tick 5 is a control tick
  EXPECT_GT(h.stack->plant().applied().left(), 0);
}

TEST(RobotStack, StraightTeleopOdometryWithinQuantization) {
  Harness h;
  h.key(0, 'w');
  h.stack->run_ticks(500);
  const Pose2D odom = h.stack->odometry();
  const Pose2D truth = h.stack->plant().truth().pose;
  const double tick_m = EncoderConfig{}.meters_per_tick();
  EXPECT_GT(truth.x, 2.5);
  EXPECT_LT(std::hypot(odom.x - truth.x, odom.y - truth.y), tick_m);
  EXPECT_EQ(odom.theta, 0.0);
}

TEST(RobotStack, ClosedLoopSettlesOnCommandedSpeed) {
  Harness h;
  h.key(0, 'w');
  h.stack->run_ticks(250);
  const auto enc = h.values<EncoderSample>(topics::kEncoder);
  ASSERT_EQ(enc.size(), 250u);
  const double tick_m = EncoderConfig{}.meters_per_tick();
  // Mean forward speed over each 0.1 s control window after 1.5 s.
  for (std::size_t start = 75; start + 5 <= enc.size(); start += 5) {
    std::int64_t ticks = 0;
    for (std::size_t i = start; i < start + 5; ++i) {
      ticks += enc[i].delta_ticks_left + enc[i].delta_ticks_right;
    }
    const double vx = double(ticks) / 2.0 * tick_m / 0.1;
    EXPECT_NEAR(vx, 0.3, 0.015) << "window at tick " << start;
  }
}

TEST(RobotStack, UnmappedKeyIsIgnored) {
  Harness h;
  h.key(0, 'w');
  h.key(10, 'q');
  h.stack->run_ticks(20);
  EXPECT_EQ(h.values<Twist2D>(topics::kCmdVel).size(), 1u);
  EXPECT_EQ(h.values<bus::TeleopKey>(topics::kTeleopKey).size(), 2u);
}

TEST(RobotStack, EstopCutsPwmOnDetectionTickAndLatches) {
  Harness h(StackConfig{}, cliff_ahead());
  for (int t = 0; t < 2000; t += 7) h.key(t, 'w');  // keep pressing forward
  std::int64_t detected = -1;
  for (int t = 0; t < 2000 && detected < 0; ++t) {
    const bool cliff_before = h.stack->plant().cliff();
    h.stack->run_tick();
    if (cliff_before) detected = t;
  }
  ASSERT_GE(detected, 0);
  EXPECT_EQ(h.stack->plant().applied(), PwmPair(0, 0));
  const auto* target = h.last(topics::kWheelTarget, detected);
  ASSERT_NE(target, nullptr);
  EXPECT_EQ(std::get<WheelSpeeds>(target->payload), (WheelSpeeds{0, 0}));
  const auto* pwm = h.last(topics::kPwm, detected);
  ASSERT_NE(pwm, nullptr);
  EXPECT_EQ(std::get<PwmPair>(pwm->payload), PwmPair(0, 0));
  EXPECT_EQ(std::get<bus::LedStatus>(h.last(topics::kLedStatus, detected)->payload).status,
            "estop");

  // Move clear of the cliff; the latch must hold until a reset.
  h.stack->plant().set_pose({0.0, 0.0, 0.0});
  h.stack->run_ticks(100);
  EXPECT_TRUE(h.stack->state().estop_latched);
  EXPECT_EQ(h.stack->plant().applied(), PwmPair(0, 0));

  const std::int64_t reset_tick = h.stack->tick();
  h.stack->enqueue({reset_tick, bus::Empty{}});
  h.key(reset_tick + 1, 'w');
  h.stack->run_ticks(20);
  EXPECT_FALSE(h.stack->state().estop_latched);
  EXPECT_GT(h.stack->plant().applied().left(), 0);
  EXPECT_EQ(std::get<bus::LedStatus>(h.last(topics::kLedStatus, reset_tick)->payload).status,
            "ok");
}

TEST(RobotStack, ResetWhileOverCliffKeepsLatch) {
  Harness h(StackConfig{}, cliff_ahead(), {}, {0.97, 0.0, 0.0});
  h.stack->run_tick();
  EXPECT_TRUE(h.stack->state().estop_latched);
  h.stack->enqueue({h.stack->tick(), bus::Empty{}});
  h.stack->run_tick();
  EXPECT_TRUE(h.stack->state().estop_latched);
}

TEST(RobotStack, NodeFailureNamesTheNode) {
  Harness h;
  h.stack->registry().subscribe(topics::kOdom,
                                [](const bus::Envelope&) { throw std::runtime_error("boom"); });
  try {
    h.stack->run_tick();
    FAIL() << "expected NodeFailure";
  } catch (const NodeFailure& e) {
    EXPECT_EQ(e.node(), "odom_node");
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(RobotStack, EnvelopesCarryTheirTick) {
  Harness h;
  h.key(3, 'w');
  h.stack->run_ticks(10);
  for (const auto& [topic, envs] : h.seen) {
    for (std::size_t i = 1; i < envs.size(); ++i) {
      EXPECT_LE(envs[i - 1].tick, envs[i].tick) << topic;
    }
  }
  EXPECT_EQ(h.seen[topics::kTeleopKey].front().tick, 3);
  EXPECT_EQ(h.seen[topics::kCmdVel].front().tick, 3);
}

TEST(RobotStack, LidarPublishesAtScanRate) {
  StackConfig cfg;
  cfg.lidar_enabled = true;
  cfg.lidar.beams = 36;
  Harness h(cfg);
  h.stack->run_ticks(500);
  const auto scans = h.values<LidarScan>(topics::kScan);
  // One at tick 0, then one each time floor(t * rate) advances; last tick is t = 9.98 s.
  EXPECT_EQ(scans.size(), 1u + std::size_t(std::floor(499 * 0.02 * 5.5)));
  EXPECT_EQ(scans.front().ranges.size(), 36u);
}

TEST(RobotStack, SameSeedSameTrace) {
  StackConfig cfg;
  PlantConfig plant;
  plant.left_motor.noise_std = plant.right_motor.noise_std = 0.05;
  plant.seed = 77;
  Harness a(cfg, open_world(), plant), b(cfg, open_world(), plant);
  for (auto* h : {&a, &b}) {
    h->key(0, 'w');
    h->key(100, 'a');
    h->key(180, 's');
    h->stack->run_ticks(300);
  }
  EXPECT_EQ(a.seen, b.seen);
}

TEST(RobotStack, GoalTopicDrivesGoTo) {
  StackConfig cfg;
  cfg.mode = AutonomyMode::GoTo;
  Harness h(cfg);
  h.stack->enqueue({0, Pose2D{0.5, 0.5, 1.0}});
  h.stack->run_ticks(1500);
  ASSERT_TRUE(h.stack->state().goal_reached_tick.has_value());
  const Pose2D p = h.stack->plant().truth().pose;
  EXPECT_LT(std::hypot(p.x - 0.5, p.y - 0.5), 0.06);
}

TEST(RobotStack, CorrectOdometryResetsPose) {
  Harness h;
  h.key(0, 'w');
  h.stack->run_ticks(50);
  h.stack->correct_odometry({5.0, 5.0, 0.0});
  EXPECT_EQ(h.stack->odometry(), (Pose2D{5.0, 5.0, 0.0}));
  h.stack->run_ticks(1);
  EXPECT_GT(h.stack->odometry().x, 5.0);
}

TEST(StackConfig, Validation) {
  StackConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.controller = ControllerKind::Segmented;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.mode = AutonomyMode::Map;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
