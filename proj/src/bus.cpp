#include "diffbot/bus.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

#include "diffbot/format.hpp"

namespace diffbot::bus {

using nlohmann::json;

const char* kind_name(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::Twist: return "Twist2D";
    case PayloadKind::WheelSpeeds: return "WheelSpeeds";
    case PayloadKind::Encoder: return "EncoderSample";
    case PayloadKind::Odometry: return "Odometry";
    case PayloadKind::Pwm: return "PwmPair";
    case PayloadKind::Key: return "TeleopKey";
    case PayloadKind::Estop: return "EstopFlag";
    case PayloadKind::Scan: return "LidarScan";
    case PayloadKind::Led: return "LedStatus";
    case PayloadKind::Pose: return "Pose2D";
    case PayloadKind::Empty: return "Empty";
  }
  return "?";
}

void TopicRegistry::declare(const std::string& topic, PayloadKind kind) {
  if (topic.empty()) {
    throw std::invalid_argument("topic name must be non-empty");
  }
  auto [it, inserted] = topics_.try_emplace(topic, Topic{kind, {}});
  if (!inserted && it->second.kind != kind) {
    throw std::invalid_argument("topic '" + topic +
                                "' already declared with schema " +
                                kind_name(it->second.kind));
  }
}

bool TopicRegistry::declared(const std::string& topic) const {
  return topics_.contains(topic);
}

PayloadKind TopicRegistry::schema(const std::string& topic) const {
  const auto it = topics_.find(topic);
  if (it == topics_.end()) {
    throw PublishError(PublishError::Reason::UndeclaredTopic,
                       "undeclared topic '" + topic + "'");
  }
  return it->second.kind;
}

std::vector<std::string> TopicRegistry::topic_names() const {
  std::vector<std::string> names;
  for (const auto& [name, topic] : topics_) {
    names.push_back(name);
  }
  return names;
}

void TopicRegistry::subscribe(const std::string& topic, Callback callback) {
  const auto it = topics_.find(topic);
  if (it == topics_.end()) {
    throw PublishError(PublishError::Reason::UndeclaredTopic,
                       "cannot subscribe to undeclared topic '" + topic + "'");
  }
  it->second.subscribers.push_back(std::move(callback));
}

void TopicRegistry::tap(Callback callback) { taps_.push_back(std::move(callback)); }

void TopicRegistry::publish(const std::string& topic, Payload payload,
                            std::int64_t tick) {
  const PayloadKind expected = schema(topic);
  if (kind_of(payload) != expected) {
    throw PublishError(PublishError::Reason::SchemaMismatch,
                       "topic '" + topic + "' carries " + kind_name(expected) +
                           ", got " + kind_name(kind_of(payload)));
  }
  queue_.push_back(Envelope{topic, tick, std::move(payload)});
}

std::size_t TopicRegistry::dispatch() {
  std::size_t delivered = 0;
  while (!queue_.empty()) {
    std::vector<Envelope> batch;
    batch.swap(queue_);
    for (const Envelope& envelope : batch) {
      for (const auto& callback : topics_.at(envelope.topic).subscribers) {
        callback(envelope);
      }
      for (const auto& callback : taps_) {
        callback(envelope);
      }
      ++delivered;
    }
  }
  return delivered;
}

void declare_standard_topics(TopicRegistry& registry) {
  registry.declare(topics::kTeleopKey, PayloadKind::Key);
  registry.declare(topics::kCmdVel, PayloadKind::Twist);
  registry.declare(topics::kWheelTarget, PayloadKind::WheelSpeeds);
  registry.declare(topics::kPwm, PayloadKind::Pwm);
  registry.declare(topics::kEncoder, PayloadKind::Encoder);
  registry.declare(topics::kOdom, PayloadKind::Odometry);
  registry.declare(topics::kScan, PayloadKind::Scan);
  registry.declare(topics::kEstop, PayloadKind::Estop);
  registry.declare(topics::kEstopReset, PayloadKind::Empty);
  registry.declare(topics::kLedStatus, PayloadKind::Led);
  registry.declare(topics::kGoal, PayloadKind::Pose);
  registry.declare(topics::kTruth, PayloadKind::Pose);
}

// ---------------------------------------------------------------------------

namespace {

json pose_json(const Pose2D& p) {
  return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}};
}

double number(const json& data, const char* key) {
  const auto it = data.find(key);
  if (it == data.end() || !it->is_number()) {
    throw std::invalid_argument(std::string("field '") + key +
                                "' must be a number");
  }
  return it->get<double>();
}

std::int64_t integer(const json& data, const char* key) {
  const auto it = data.find(key);
  if (it == data.end() || !it->is_number_integer()) {
    throw std::invalid_argument(std::string("field '") + key +
                                "' must be an integer");
  }
  return it->get<std::int64_t>();
}

struct JsonVisitor {
  json operator()(const Twist2D& t) const {
    return {{"vx", t.vx}, {"vy", t.vy}, {"omega", t.omega}};
  }
  json operator()(const WheelSpeeds& w) const {
    return {{"left", w.left}, {"right", w.right}};
  }
  json operator()(const EncoderSample& e) const {
    return {{"delta_ticks_left", e.delta_ticks_left},
            {"delta_ticks_right", e.delta_ticks_right},
            {"dt", e.dt}};
  }
  json operator()(const Odometry& o) const {
    json j = pose_json(o.pose);
    j["vx"] = o.twist.vx;
    j["vy"] = o.twist.vy;
    j["omega"] = o.twist.omega;
    return j;
  }
  json operator()(const PwmPair& p) const {
    return {{"left", p.left()}, {"right", p.right()}};
  }
  json operator()(const TeleopKey& k) const {
    return {{"key", std::string(1, k.key)}};
  }
  json operator()(const EstopFlag& e) const { return {{"active", e.active}}; }
  json operator()(const LidarScan& s) const {
    json ranges = json::array();
    for (double r : s.ranges) {
      ranges.push_back(std::isfinite(r) ? json(r) : json(nullptr));
    }
    return {{"angle_min", s.angle_min},
            {"angle_increment", s.angle_increment},
            {"max_range", s.max_range},
            {"ranges", std::move(ranges)}};
  }
  json operator()(const LedStatus& l) const { return {{"status", l.status}}; }
  json operator()(const Pose2D& p) const { return pose_json(p); }
  json operator()(const Empty&) const { return json::object(); }
};

std::string join_row(std::int64_t tick, std::initializer_list<std::string> fields) {
  std::string row = std::to_string(tick);
  for (const auto& f : fields) {
    row += ',';
    row += f;
  }
  return row;
}

struct CsvVisitor {
  std::int64_t tick;
  std::string operator()(const Twist2D& t) const {
    return join_row(tick, {format_double(t.vx), format_double(t.vy),
                           format_double(t.omega)});
  }
  std::string operator()(const WheelSpeeds& w) const {
    return join_row(tick, {format_double(w.left), format_double(w.right)});
  }
  std::string operator()(const EncoderSample& e) const {
    return join_row(tick, {std::to_string(e.delta_ticks_left),
                           std::to_string(e.delta_ticks_right),
                           format_double(e.dt)});
  }
  std::string operator()(const Odometry& o) const {
    return join_row(tick, {format_double(o.pose.x), format_double(o.pose.y),
                           format_double(o.pose.theta), format_double(o.twist.vx),
                           format_double(o.twist.vy),
                           format_double(o.twist.omega)});
  }
  std::string operator()(const PwmPair& p) const {
    return join_row(tick, {std::to_string(p.left()), std::to_string(p.right())});
  }
  std::string operator()(const TeleopKey& k) const {
    if (k.key == ' ') {
      return join_row(tick, {"space"});
    }
    if (k.key == ',' || k.key == '"') {
      return join_row(tick, {k.key == ',' ? "\",\"" : "\"\"\"\""});
    }
    if (!std::isprint(static_cast<unsigned char>(k.key))) {
      char hex[8];
      std::snprintf(hex, sizeof hex, "0x%02x", static_cast<unsigned char>(k.key));
      return join_row(tick, {hex});
    }
    return join_row(tick, {std::string(1, k.key)});
  }
  std::string operator()(const EstopFlag& e) const {
    return join_row(tick, {e.active ? "1" : "0"});
  }
  std::string operator()(const LidarScan& s) const {
    std::string ranges;
    for (std::size_t i = 0; i < s.ranges.size(); ++i) {
      if (i > 0) {
        ranges += ';';
      }
      if (std::isfinite(s.ranges[i])) {
        ranges += format_double(s.ranges[i]);
      }
    }
    return join_row(tick, {format_double(s.angle_min),
                           format_double(s.angle_increment),
                           format_double(s.max_range), ranges});
  }
  std::string operator()(const LedStatus& l) const {
    return join_row(tick, {l.status});
  }
  std::string operator()(const Pose2D& p) const {
    return join_row(tick, {format_double(p.x), format_double(p.y),
                           format_double(p.theta)});
  }
  std::string operator()(const Empty&) const { return std::to_string(tick); }
};

}  // namespace

json payload_to_json(const Payload& payload) {
  return std::visit(JsonVisitor{}, payload);
}

json to_json(const Envelope& envelope) {
  return {{"topic", envelope.topic},
          {"tick", envelope.tick},
          {"data", payload_to_json(envelope.payload)}};
}

Payload payload_from_json(PayloadKind kind, const json& data) {
  if (!data.is_object()) {
    throw std::invalid_argument("'data' must be an object");
  }
  switch (kind) {
    case PayloadKind::Twist:
      return Twist2D{number(data, "vx"), data.value("vy", 0.0),
                     number(data, "omega")};
    case PayloadKind::WheelSpeeds:
      return WheelSpeeds{number(data, "left"), number(data, "right")};
    case PayloadKind::Encoder:
      return EncoderSample{integer(data, "delta_ticks_left"),
                           integer(data, "delta_ticks_right"),
                           number(data, "dt")};
    case PayloadKind::Odometry:
      return Odometry{{number(data, "x"), number(data, "y"), number(data, "theta")},
                      {number(data, "vx"), number(data, "vy"),
                       number(data, "omega")}};
    case PayloadKind::Pwm:
      return PwmPair{static_cast<int>(integer(data, "left")),
                     static_cast<int>(integer(data, "right"))};
    case PayloadKind::Key: {
      const auto it = data.find("key");
      if (it == data.end() || !it->is_string()) {
        throw std::invalid_argument("field 'key' must be a string");
      }
      const auto text = it->get<std::string>();
      if (text == "space") {
        return TeleopKey{' '};
      }
      if (text.size() != 1) {
        throw std::invalid_argument("field 'key' must be a single character");
      }
      return TeleopKey{text[0]};
    }
    case PayloadKind::Estop: {
      const auto it = data.find("active");
      if (it == data.end() || !it->is_boolean()) {
        throw std::invalid_argument("field 'active' must be a boolean");
      }
      return EstopFlag{it->get<bool>()};
    }
    case PayloadKind::Scan: {
      LidarScan scan{number(data, "angle_min"), number(data, "angle_increment"),
                     number(data, "max_range"), {}};
      for (const json& r : data.at("ranges")) {
        scan.ranges.push_back(r.is_null() ? kNoReturn : r.get<double>());
      }
      return scan;
    }
    case PayloadKind::Led:
      return LedStatus{data.at("status").get<std::string>()};
    case PayloadKind::Pose:
      return Pose2D{number(data, "x"), number(data, "y"), data.value("theta", 0.0)};
    case PayloadKind::Empty:
      return Empty{};
  }
  throw std::invalid_argument("unknown payload kind");
}

std::string csv_header(PayloadKind kind) {
  switch (kind) {
    case PayloadKind::Twist: return "tick,vx,vy,omega";
    case PayloadKind::WheelSpeeds: return "tick,left,right";
    case PayloadKind::Encoder: return "tick,delta_ticks_left,delta_ticks_right,dt";
    case PayloadKind::Odometry: return "tick,x,y,theta,vx,vy,omega";
    case PayloadKind::Pwm: return "tick,left,right";
    case PayloadKind::Key: return "tick,key";
    case PayloadKind::Estop: return "tick,active";
    case PayloadKind::Scan: return "tick,angle_min,angle_increment,max_range,ranges";
    case PayloadKind::Led: return "tick,status";
    case PayloadKind::Pose: return "tick,x,y,theta";
    case PayloadKind::Empty: return "tick";
  }
  return "tick";
}

std::string csv_row(const Envelope& envelope) {
  return std::visit(CsvVisitor{envelope.tick}, envelope.payload);
}

}  // namespace diffbot::bus
