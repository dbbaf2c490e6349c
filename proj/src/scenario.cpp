#include "diffbot/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "diffbot/format.hpp"

namespace diffbot {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(const std::string& source, int line,
                         const std::string& message)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + message
                                  : source + ": " + message),
      line_(line) {}

namespace {

int line_at_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(),
                                         text.begin() + static_cast<long>(offset), '\n'));
}

// Field access with errors that point at the offending line of the source.
class Reader {
 public:
  Reader(const std::string& text, const std::string& source)
      : text_(text), source_(source) {}

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    const auto pos = text_.find("\"" + key + "\"");
    throw ConfigError(source_, pos == std::string::npos ? 0 : line_at_offset(text_, pos),
                      message);
  }

  void only_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) const {
    if (!obj.is_object()) {
      fail(where, "'" + where + "' must be an object");
    }
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
      if (!known.contains(key)) {
        fail(key, "unknown key '" + key + "' in " + where);
      }
    }
  }

  double number(const json& obj, const char* key, double fallback) const {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      return fallback;
    }
    if (!it->is_number()) {
      fail(key, std::string("'") + key + "' must be a number");
    }
    return it->get<double>();
  }

  double positive(const json& obj, const char* key, double fallback) const {
    const double value = number(obj, key, fallback);
    if (!(value > 0.0) || !std::isfinite(value)) {
      fail(key, std::string("'") + key + "' must be positive");
    }
    return value;
  }

  std::int64_t integer(const json& obj, const char* key, std::int64_t fallback) const {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      return fallback;
    }
    if (!it->is_number_integer()) {
      fail(key, std::string("'") + key + "' must be an integer");
    }
    return it->get<std::int64_t>();
  }

  bool boolean(const json& obj, const char* key, bool fallback) const {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      return fallback;
    }
    if (!it->is_boolean()) {
      fail(key, std::string("'") + key + "' must be true or false");
    }
    return it->get<bool>();
  }

  std::string string(const json& obj, const char* key, const std::string& fallback) const {
    const auto it = obj.find(key);
    if (it == obj.end()) {
      return fallback;
    }
    if (!it->is_string()) {
      fail(key, std::string("'") + key + "' must be a string");
    }
    return it->get<std::string>();
  }

  const std::string& source() const { return source_; }

 private:
  const std::string& text_;
  const std::string& source_;
};

MotorParams parse_motor(const Reader& r, const json& obj, const std::string& where,
                        MotorParams base) {
  r.only_keys(obj, where, {"tau", "v_max", "deadband_pwm", "noise_std"});
  base.tau = r.positive(obj, "tau", base.tau);
  base.v_max = r.positive(obj, "v_max", base.v_max);
  base.deadband_pwm = static_cast<int>(r.integer(obj, "deadband_pwm", base.deadband_pwm));
  base.noise_std = r.number(obj, "noise_std", base.noise_std);
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(where, e.what());
  }
  return base;
}

Pose2D parse_pose(const Reader& r, const json& obj, const std::string& where) {
  r.only_keys(obj, where, {"x", "y", "theta", "pos_tolerance", "heading_tolerance"});
  return {r.number(obj, "x", 0.0), r.number(obj, "y", 0.0), r.number(obj, "theta", 0.0)};
}

fs::path resolve(const fs::path& base_dir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

}  // namespace

MapSettings default_map_settings(const World& world, double resolution) {
  constexpr double margin = 0.5;
  const Bounds& b = world.bounds;
  MapSettings settings;
  settings.resolution = resolution;
  settings.origin = {b.min_x - margin - resolution / 2.0,
                     b.min_y - margin - resolution / 2.0};
  settings.width = static_cast<int>(
      std::ceil((b.max_x - b.min_x + 2.0 * margin) / resolution)) + 1;
  settings.height = static_cast<int>(
      std::ceil((b.max_y - b.min_y + 2.0 * margin) / resolution)) + 1;
  return settings;
}

ScenarioConfig parse_scenario(const std::string& text, const fs::path& base_dir,
                              const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source, line_at_offset(text, e.byte == 0 ? 0 : e.byte - 1),
                      std::string("JSON syntax error: ") + e.what());
  }
  const Reader r(text, source);
  r.only_keys(root, "config",
              {"world", "start", "geometry", "encoder", "motor", "motors", "body_radius",
               "controller", "calibration", "tick_dt", "control_period", "v_wheel_max",
               "teleop", "mode", "goal", "goto", "lidar", "map", "duration", "seed",
               "script"});

  ScenarioConfig config;
  if (!root.contains("world")) {
    throw ConfigError(source, 1, "missing required key 'world'");
  }
  config.world_path = resolve(base_dir, r.string(root, "world", ""));
  try {
    config.world = load_world(config.world_path);
  } catch (const WorldFormatError& e) {
    r.fail("world", e.what());
  }

  if (root.contains("start")) {
    config.start = parse_pose(r, root.at("start"), "start");
  } else if (config.world.start) {
    config.start = *config.world.start;
  }
  if (!config.world.bounds.contains({config.start.x, config.start.y})) {
    r.fail(root.contains("start") ? "start" : "world",
           "start pose lies outside the world bounds");
  }

  PlantConfig& plant = config.plant;
  if (root.contains("geometry")) {
    const json& g = root.at("geometry");
    r.only_keys(g, "geometry", {"track_width", "wheel_radius"});
    plant.geometry.track_width = r.positive(g, "track_width", plant.geometry.track_width);
    plant.geometry.wheel_radius = r.positive(g, "wheel_radius", plant.geometry.wheel_radius);
  }
  plant.encoder.wheel_radius = plant.geometry.wheel_radius;
  if (root.contains("encoder")) {
    const json& e = root.at("encoder");
    r.only_keys(e, "encoder", {"ticks_per_rev", "wheel_radius"});
    plant.encoder.ticks_per_rev = r.integer(e, "ticks_per_rev", plant.encoder.ticks_per_rev);
    if (plant.encoder.ticks_per_rev <= 0) {
      r.fail("ticks_per_rev", "'ticks_per_rev' must be positive");
    }
    plant.encoder.wheel_radius = r.positive(e, "wheel_radius", plant.encoder.wheel_radius);
  }
  if (root.contains("motor")) {
    plant.left_motor = parse_motor(r, root.at("motor"), "motor", plant.left_motor);
    plant.right_motor = plant.left_motor;
  }
  if (root.contains("motors")) {
    const json& m = root.at("motors");
    r.only_keys(m, "motors", {"left", "right"});
    if (m.contains("left")) {
      plant.left_motor = parse_motor(r, m.at("left"), "left", plant.left_motor);
    }
    if (m.contains("right")) {
      plant.right_motor = parse_motor(r, m.at("right"), "right", plant.right_motor);
    }
  }
  plant.body_radius = r.number(root, "body_radius", plant.body_radius);
  const std::int64_t seed = r.integer(root, "seed", 0);
  if (seed < 0) {
    r.fail("seed", "'seed' must be nonnegative");
  }
  plant.seed = static_cast<std::uint64_t>(seed);

  StackConfig& stack = config.stack;
  stack.dt = r.positive(root, "tick_dt", stack.dt);
  stack.control_period = static_cast<int>(r.integer(root, "control_period", stack.control_period));
  if (stack.control_period < 1) {
    r.fail("control_period", "'control_period' must be at least 1");
  }
  stack.gains.sample_time = stack.dt * stack.control_period;
  stack.v_wheel_max = r.positive(root, "v_wheel_max", stack.v_wheel_max);

  if (root.contains("controller")) {
    const json& c = root.at("controller");
    r.only_keys(c, "controller", {"type", "kp", "ki", "kd", "table"});
    const std::string type = r.string(c, "type", "pid");
    if (type == "pid") {
      stack.controller = ControllerKind::Pid;
    } else if (type == "segmented") {
      stack.controller = ControllerKind::Segmented;
    } else {
      r.fail("type", "controller type must be 'pid' or 'segmented', got '" + type + "'");
    }
    stack.gains.kp = r.number(c, "kp", stack.gains.kp);
    stack.gains.ki = r.number(c, "ki", stack.gains.ki);
    stack.gains.kd = r.number(c, "kd", stack.gains.kd);
    try {
      stack.gains.validate();
    } catch (const std::invalid_argument& e) {
      r.fail("controller", e.what());
    }
    if (c.contains("table")) {
      config.table_path = resolve(base_dir, r.string(c, "table", ""));
      if (!fs::exists(*config.table_path)) {
        r.fail("table", "calibration table not found: " + config.table_path->string());
      }
    }
  }

  if (root.contains("calibration")) {
    const json& c = root.at("calibration");
    r.only_keys(c, "calibration", {"step", "settle_time", "window", "signed"});
    config.calibration.step = static_cast<int>(r.integer(c, "step", config.calibration.step));
    config.calibration.settle_time = r.number(c, "settle_time", config.calibration.settle_time);
    config.calibration.measurement_window =
        r.positive(c, "window", config.calibration.measurement_window);
    config.calibration.signed_sweep = r.boolean(c, "signed", config.calibration.signed_sweep);
    try {
      config.calibration.validate();
    } catch (const std::invalid_argument& e) {
      r.fail("calibration", e.what());
    }
  }

  if (root.contains("teleop")) {
    const json& t = root.at("teleop");
    r.only_keys(t, "teleop", {"v_step", "omega_step"});
    stack.teleop.v_step = r.positive(t, "v_step", stack.teleop.v_step);
    stack.teleop.omega_step = r.positive(t, "omega_step", stack.teleop.omega_step);
  }

  const std::string mode = r.string(root, "mode", "teleop");
  if (mode == "teleop") {
    stack.mode = AutonomyMode::Teleop;
  } else if (mode == "goto") {
    stack.mode = AutonomyMode::GoTo;
  } else if (mode == "map") {
    stack.mode = AutonomyMode::Map;
  } else {
    r.fail("mode", "mode must be 'teleop', 'goto' or 'map', got '" + mode + "'");
  }

  if (root.contains("goal")) {
    const json& g = root.at("goal");
    GoalSpec spec;
    spec.goal = parse_pose(r, g, "goal");
    spec.pos_tolerance = r.positive(g, "pos_tolerance", spec.pos_tolerance);
    spec.heading_tolerance = r.positive(g, "heading_tolerance", spec.heading_tolerance);
    stack.goal = spec;
  }
  if (root.contains("goto")) {
    const json& g = root.at("goto");
    r.only_keys(g, "goto", {"k_bearing", "k_v", "bearing_gate", "v_max", "omega_max"});
    auto& p = stack.goto_params;
    p.k_bearing = r.positive(g, "k_bearing", p.k_bearing);
    p.k_v = r.positive(g, "k_v", p.k_v);
    p.bearing_gate = r.positive(g, "bearing_gate", p.bearing_gate);
    p.v_max = r.positive(g, "v_max", p.v_max);
    p.omega_max = r.positive(g, "omega_max", p.omega_max);
  }

  if (root.contains("lidar")) {
    const json& l = root.at("lidar");
    r.only_keys(l, "lidar", {"enabled", "beams", "max_range", "scan_rate"});
    stack.lidar_enabled = r.boolean(l, "enabled", true);
    stack.lidar.beams = static_cast<int>(r.integer(l, "beams", stack.lidar.beams));
    if (stack.lidar.beams <= 0) {
      r.fail("beams", "'beams' must be positive");
    }
    stack.lidar.max_range = r.positive(l, "max_range", stack.lidar.max_range);
    stack.lidar.scan_rate = r.positive(l, "scan_rate", stack.lidar.scan_rate);
  }

  if (root.contains("map") || stack.mode == AutonomyMode::Map) {
    const json m = root.value("map", json::object());
    r.only_keys(m, "map",
                {"resolution", "pose_source", "output", "l_occ", "l_free", "l_min",
                 "l_max", "occ_threshold", "free_threshold"});
    MapSettings settings =
        default_map_settings(config.world, r.positive(m, "resolution", 0.05));
    const std::string pose_source = r.string(m, "pose_source", "truth");
    if (pose_source == "truth") {
      settings.pose_source = MapPoseSource::Truth;
    } else if (pose_source == "odom") {
      settings.pose_source = MapPoseSource::Odometry;
    } else {
      r.fail("pose_source", "pose_source must be 'truth' or 'odom'");
    }
    auto& mc = settings.mapper;
    mc.l_occ = r.number(m, "l_occ", mc.l_occ);
    mc.l_free = r.number(m, "l_free", mc.l_free);
    mc.l_min = r.number(m, "l_min", mc.l_min);
    mc.l_max = r.number(m, "l_max", mc.l_max);
    mc.occ_threshold = r.number(m, "occ_threshold", mc.occ_threshold);
    mc.free_threshold = r.number(m, "free_threshold", mc.free_threshold);
    config.map_output = r.string(m, "output", config.map_output);
    stack.map = settings;
  }

  config.duration = r.number(root, "duration", config.duration);
  if (!(config.duration >= 0.0)) {
    r.fail("duration", "'duration' must be nonnegative");
  }
  if (root.contains("script")) {
    config.script_path = resolve(base_dir, r.string(root, "script", ""));
  }

  try {
    plant.validate();
    // A segmented controller without a table gets one at build time.
    StackConfig check = stack;
    check.controller = ControllerKind::Pid;
    check.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, 0, e.what());
  }
  return config;
}

ScenarioConfig load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(path.string(), 0, "cannot open config file");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), path.parent_path(), path.string());
}

std::vector<InputEvent> parse_key_script(std::istream& in, const std::string& source) {
  std::vector<InputEvent> events;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty() || line[0] == '#') {
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos || colon == 0) {
      throw ConfigError(source, line_no, "expected 'tick:key'");
    }
    std::int64_t tick = 0;
    try {
      std::size_t used = 0;
      tick = std::stoll(line.substr(0, colon), &used);
      if (used != colon || tick < 0) {
        throw std::invalid_argument("tick");
      }
    } catch (const std::exception&) {
      throw ConfigError(source, line_no, "tick must be a nonnegative integer");
    }
    const std::string key = line.substr(colon + 1);
    InputEvent event{tick, bus::TeleopKey{}};
    if (key == "space" || key == " ") {
      event.event = bus::TeleopKey{' '};
    } else if (key == "reset" || key == "estop_reset") {
      event.event = bus::Empty{};
    } else if (key.size() == 1) {
      event.event = bus::TeleopKey{key[0]};
    } else {
      throw ConfigError(source, line_no, "unrecognised key '" + key + "'");
    }
    events.push_back(event);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const InputEvent& a, const InputEvent& b) { return a.tick < b.tick; });
  return events;
}

std::vector<InputEvent> load_key_script(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(path.string(), 0, "cannot open key script");
  }
  return parse_key_script(in, path.string());
}

TraceWriter::TraceWriter(const fs::path& out_dir, const bus::TopicRegistry& registry) {
  fs::create_directories(out_dir);
  for (const auto& topic : registry.topic_names()) {
    const fs::path path = out_dir / (topic + ".csv");
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
      throw std::runtime_error("cannot write trace file: " + path.string());
    }
    file << bus::csv_header(registry.schema(topic)) << '\n';
    files_.emplace(topic, std::move(file));
  }
}

void TraceWriter::record(const bus::Envelope& envelope) {
  files_.at(envelope.topic) << bus::csv_row(envelope) << '\n';
}

void TraceWriter::flush() {
  for (auto& [topic, file] : files_) {
    file.flush();
  }
}

json report_to_json(const RunReport& report) {
  auto pose = [](const Pose2D& p) {
    return json{{"x", p.x}, {"y", p.y}, {"theta", p.theta}};
  };
  json j{{"ticks", report.ticks},
         {"time", report.time},
         {"final_odom", pose(report.final_odom)},
         {"final_truth", pose(report.final_truth)},
         {"drift_norm", report.drift_norm},
         {"heading_drift", report.heading_drift},
         {"estop_latched", report.estop_latched},
         {"collision", report.collision}};
  j["goal_reached_tick"] =
      report.goal_reached_tick ? json(*report.goal_reached_tick) : json(nullptr);
  j["map"] = report.map_path ? json(report.map_path->filename().string()) : json(nullptr);
  return j;
}

CalibrationTable scenario_table(const ScenarioConfig& config) {
  if (config.table_path) {
    return load_calibration_csv(*config.table_path);
  }
  PlantRig rig(config.plant, config.stack.dt);
  return calibrate(rig, config.calibration);
}

std::unique_ptr<RobotStack> build_stack(const ScenarioConfig& config) {
  StackConfig stack = config.stack;
  if (stack.controller == ControllerKind::Segmented && !stack.table) {
    stack.table = scenario_table(config);
  }
  return std::make_unique<RobotStack>(std::move(stack),
                                      Plant(config.plant, config.world, config.start),
                                      config.start);
}

RunReport make_report(const RobotStack& stack) {
  RunReport report;
  report.ticks = stack.tick();
  report.time = stack.time();
  report.final_odom = stack.odometry();
  report.final_truth = stack.plant().truth().pose;
  report.drift_norm = std::hypot(report.final_odom.x - report.final_truth.x,
                                 report.final_odom.y - report.final_truth.y);
  report.heading_drift =
      normalize_angle(report.final_odom.theta - report.final_truth.theta);
  report.estop_latched = stack.state().estop_latched;
  report.collision = stack.plant().truth().collision;
  report.goal_reached_tick = stack.state().goal_reached_tick;
  return report;
}

RunReport run_scenario(const ScenarioConfig& config, const std::vector<InputEvent>& script,
                       const fs::path& out_dir) {
  auto stack = build_stack(config);
  TraceWriter traces(out_dir, stack->registry());
  stack->registry().tap([&traces](const bus::Envelope& e) { traces.record(e); });
  for (const auto& event : script) {
    stack->enqueue(event);
  }
  const auto ticks = static_cast<std::int64_t>(std::llround(config.duration / config.stack.dt));
  stack->run_ticks(ticks);
  traces.flush();

  RunReport report = make_report(*stack);
  if (const auto& grid = stack->state().grid) {
    const fs::path map_path = out_dir / config.map_output;
    export_map(*grid, config.stack.map->mapper, map_path);
    report.map_path = map_path;
  }
  std::ofstream out(out_dir / "report.json", std::ios::binary | std::ios::trunc);
  out << report_to_json(report).dump(2) << '\n';
  if (!out) {
    throw std::runtime_error("cannot write report: " + (out_dir / "report.json").string());
  }
  return report;
}

}  // namespace diffbot
