#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "diffbot/bus.hpp"

namespace diffbot::bridge {

/// Operator command received from a client; applied at the next tick.
using InboundCommand = std::variant<bus::TeleopKey, bus::Empty, Pose2D>;

struct SubscribeRequest {
  std::vector<std::string> topics;
  bool subscribe{true};  ///< false for unsubscribe
};

struct FrameError {
  std::string message;
};

using ParsedFrame = std::variant<InboundCommand, SubscribeRequest, FrameError>;

/// Parses one inbound text frame:
///   {"topic": "teleop_key", "data": {"key": "w"}}
///   {"topic": "estop_reset"}
///   {"topic": "goal", "data": {"x": 1, "y": 2, "theta": 0}}
///   {"subscribe": ["odom", "scan"]} / {"unsubscribe": [...]}
ParsedFrame parse_inbound(std::string_view text);

std::string error_frame(const std::string& message, std::int64_t tick);

/// Per-client outbound buffer: bounded, dropping the oldest frame when full.
class OutboundQueue {
 public:
  explicit OutboundQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(std::shared_ptr<const std::string> frame);
  bool empty() const { return frames_.empty(); }
  std::size_t size() const { return frames_.size(); }
  const std::shared_ptr<const std::string>& front() const { return frames_.front(); }
  void pop() { frames_.pop_front(); }
  std::uint64_t dropped() const { return dropped_; }

 private:
  std::size_t capacity_;
  std::deque<std::shared_ptr<const std::string>> frames_;
  std::uint64_t dropped_{0};
};

class BridgeStartupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BridgeOptions {
  std::string address{"127.0.0.1"};
  unsigned short port{8080};       ///< 0 picks a free port
  std::size_t max_queue{256};      ///< frames buffered per client
  std::filesystem::path static_dir;  ///< UI bundle; empty serves a stub page
};

/// WebSocket + static HTTP server on one port, running on its own thread.
/// publish() and drain() are safe to call from the simulation thread.
class Bridge {
 public:
  explicit Bridge(BridgeOptions options);
  ~Bridge();
  Bridge(const Bridge&) = delete;
  Bridge& operator=(const Bridge&) = delete;

  unsigned short port() const;

  /// Queues the envelope for every client subscribed to its topic.
  void publish(const bus::Envelope& envelope);

  /// Commands received since the last call, in arrival order.
  std::vector<InboundCommand> drain();

  std::size_t client_count() const;
  std::uint64_t dropped_frames() const;

  void stop();

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace diffbot::bridge
