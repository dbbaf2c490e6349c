#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffbot/stack.hpp"

namespace diffbot {

/// Invalid scenario or script; carries the 1-based source line when known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

/// Everything needed to build and run one simulation. All quantities are SI:
/// meters, seconds, radians.
struct ScenarioConfig {
  std::filesystem::path world_path;
  World world;
  Pose2D start{};
  PlantConfig plant{};
  StackConfig stack{};
  CalibrationOptions calibration{};
  std::optional<std::filesystem::path> table_path;
  double duration{10.0};  ///< [s]
  std::optional<std::filesystem::path> script_path;
  std::string map_output{"map.pgm"};  ///< relative to the output directory
};

/// Parses a scenario JSON document; relative paths resolve against base_dir.
ScenarioConfig parse_scenario(const std::string& text,
                              const std::filesystem::path& base_dir,
                              const std::string& source = "config");
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Default map frame for a world: bounds plus a margin, aligned so that
/// coordinates on the bounds fall on cell centres.
MapSettings default_map_settings(const World& world, double resolution);

/// Key script: one `tick:key` per line; `space` names the space bar, blank
/// lines and lines starting with '#' are skipped.
std::vector<InputEvent> parse_key_script(std::istream& in,
                                         const std::string& source = "script");
std::vector<InputEvent> load_key_script(const std::filesystem::path& path);

/// Writes one CSV per declared topic (header first) into a directory.
class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& out_dir,
              const bus::TopicRegistry& registry);
  void record(const bus::Envelope& envelope);
  void flush();

 private:
  std::map<std::string, std::ofstream> files_;
};

struct RunReport {
  std::int64_t ticks{0};
  double time{0.0};
  Pose2D final_odom{};
  Pose2D final_truth{};
  double drift_norm{0.0};     ///< |odom - truth| position [m]
  double heading_drift{0.0};  ///< wrapped heading difference [rad]
  bool estop_latched{false};
  bool collision{false};
  std::optional<std::int64_t> goal_reached_tick;
  std::optional<std::filesystem::path> map_path;
};

nlohmann::json report_to_json(const RunReport& report);

/// Calibration table for the scenario: loaded from table_path when set,
/// otherwise measured on a bench copy of the configured plant.
CalibrationTable scenario_table(const ScenarioConfig& config);

/// Builds the stack for a scenario (calibrating first if segmented control
/// has no table).
std::unique_ptr<RobotStack> build_stack(const ScenarioConfig& config);

RunReport make_report(const RobotStack& stack);

/// Runs the scenario headless for its duration, writing traces, the map
/// (map mode) and report.json into out_dir.
RunReport run_scenario(const ScenarioConfig& config,
                       const std::vector<InputEvent>& script,
                       const std::filesystem::path& out_dir);

}  // namespace diffbot
