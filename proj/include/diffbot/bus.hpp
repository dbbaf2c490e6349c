#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "diffbot/control.hpp"
#include "diffbot/kinematics.hpp"
#include "diffbot/odometry.hpp"
#include "diffbot/plant.hpp"

namespace diffbot::bus {

// Topic names shared with the bridge and trace files.
namespace topics {
inline constexpr const char* kTeleopKey = "teleop_key";
inline constexpr const char* kCmdVel = "cmd_vel";
inline constexpr const char* kWheelTarget = "wheel_target";
inline constexpr const char* kPwm = "pwm";
inline constexpr const char* kEncoder = "encoder";
inline constexpr const char* kOdom = "odom";
inline constexpr const char* kScan = "scan";
inline constexpr const char* kEstop = "estop";
inline constexpr const char* kEstopReset = "estop_reset";
inline constexpr const char* kLedStatus = "led_status";
inline constexpr const char* kGoal = "goal";
inline constexpr const char* kTruth = "truth";
}  // namespace topics

struct TeleopKey {
  char key{' '};
  friend bool operator==(const TeleopKey&, const TeleopKey&) = default;
};

struct Odometry {
  Pose2D pose{};
  Twist2D twist{};
  friend bool operator==(const Odometry&, const Odometry&) = default;
};

struct EstopFlag {
  bool active{false};
  friend bool operator==(const EstopFlag&, const EstopFlag&) = default;
};

struct LedStatus {
  std::string status;
  friend bool operator==(const LedStatus&, const LedStatus&) = default;
};

struct Empty {
  friend bool operator==(const Empty&, const Empty&) = default;
};

using Payload = std::variant<Twist2D, WheelSpeeds, EncoderSample, Odometry,
                             PwmPair, TeleopKey, EstopFlag, LidarScan,
                             LedStatus, Pose2D, Empty>;

/// Payload schema tag; the values follow the Payload alternative order.
enum class PayloadKind : std::size_t {
  Twist,
  WheelSpeeds,
  Encoder,
  Odometry,
  Pwm,
  Key,
  Estop,
  Scan,
  Led,
  Pose,
  Empty,
};

inline PayloadKind kind_of(const Payload& payload) {
  return static_cast<PayloadKind>(payload.index());
}

const char* kind_name(PayloadKind kind);

struct Envelope {
  std::string topic;
  std::int64_t tick{0};
  Payload payload;

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

class PublishError : public std::runtime_error {
 public:
  enum class Reason { UndeclaredTopic, SchemaMismatch };
  PublishError(Reason reason, const std::string& message)
      : std::runtime_error(message), reason_(reason) {}
  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

using Callback = std::function<void(const Envelope&)>;

/// Topic table with one schema per topic. Publishing queues an envelope;
/// dispatch() hands every queued envelope to its subscribers, topic FIFO
/// order preserved, subscribers in registration order.
class TopicRegistry {
 public:
  void declare(const std::string& topic, PayloadKind kind);
  bool declared(const std::string& topic) const;
  PayloadKind schema(const std::string& topic) const;
  std::vector<std::string> topic_names() const;

  void subscribe(const std::string& topic, Callback callback);
  /// Sees every envelope on every topic, after the topic's own subscribers.
  void tap(Callback callback);

  /// Throws PublishError on an undeclared topic or a payload that does not
  /// match the declared schema.
  void publish(const std::string& topic, Payload payload, std::int64_t tick);

  /// Delivers queued envelopes, including any published by callbacks while
  /// dispatching. Returns the number delivered.
  std::size_t dispatch();

  std::size_t pending() const { return queue_.size(); }

 private:
  struct Topic {
    PayloadKind kind;
    std::vector<Callback> subscribers;
  };

  std::map<std::string, Topic> topics_;
  std::vector<Callback> taps_;
  std::vector<Envelope> queue_;
};

/// Declares the standard topic set.
void declare_standard_topics(TopicRegistry& registry);

// ---------------------------------------------------------------------------
// Codecs

/// Envelope as a bridge frame: {"topic": ..., "tick": ..., "data": {...}}.
nlohmann::json to_json(const Envelope& envelope);
nlohmann::json payload_to_json(const Payload& payload);
/// Decodes `data` for the given schema; throws std::invalid_argument.
Payload payload_from_json(PayloadKind kind, const nlohmann::json& data);

/// Comma-separated column names for a trace file (starting with tick).
std::string csv_header(PayloadKind kind);
std::string csv_row(const Envelope& envelope);

}  // namespace diffbot::bus
