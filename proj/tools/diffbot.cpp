// Command-line entry point: headless scenario runs, wheel calibration, and the
// real-time bridge server.

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include "diffbot/bridge.hpp"
#include "diffbot/format.hpp"
#include "diffbot/scenario.hpp"

namespace fs = std::filesystem;
using namespace diffbot;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

volatile std::sig_atomic_t g_interrupted = 0;

void on_signal(int) { g_interrupted = 1; }

struct CommonFlags {
  std::string config;
  std::string out_dir{"out"};
  std::optional<std::int64_t> seed;
};

ScenarioConfig load_with_overrides(const CommonFlags& flags) {
  ScenarioConfig config = load_scenario(flags.config);
  if (flags.seed) {
    if (*flags.seed < 0) {
      throw ConfigError("--seed", 0, "seed must be nonnegative");
    }
    config.plant.seed = static_cast<std::uint64_t>(*flags.seed);
  }
  return config;
}

std::vector<InputEvent> load_script(const ScenarioConfig& config,
                                    const std::string& script_flag) {
  if (!script_flag.empty()) {
    return load_key_script(script_flag);
  }
  if (config.script_path) {
    return load_key_script(*config.script_path);
  }
  return {};
}

int cmd_sim(const CommonFlags& flags, const std::string& script_flag) {
  const ScenarioConfig config = load_with_overrides(flags);
  const auto script = load_script(config, script_flag);
  const RunReport report = run_scenario(config, script, flags.out_dir);
  std::cout << "ticks " << report.ticks << ", drift " << format_double(report.drift_norm)
            << " m";
  if (report.goal_reached_tick) {
    std::cout << ", goal reached at tick " << *report.goal_reached_tick;
  }
  if (report.map_path) {
    std::cout << ", map " << report.map_path->string();
  }
  std::cout << '\n';
  return kExitOk;
}

void print_wheel_summary(const char* name, const WheelTable& table) {
  std::cout << name << ": deadband pwm " << table.deadband_pwm() << ", v at 255 "
            << format_double(table.max_speed()) << " m/s, " << table.points().size()
            << " entries\n";
}

int cmd_calibrate(const CommonFlags& flags, std::string out_path) {
  ScenarioConfig config = load_with_overrides(flags);
  config.table_path.reset();
  if (out_path.empty()) {
    out_path = (fs::path(flags.out_dir) / "calibration.csv").string();
  }
  const CalibrationTable table = scenario_table(config);
  const fs::path out(out_path);
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  save_calibration_csv(out, table);
  print_wheel_summary("left", table.left);
  print_wheel_summary("right", table.right);
  std::cout << "wrote " << out.string() << '\n';
  return kExitOk;
}

int cmd_serve(const CommonFlags& flags, const std::string& script_flag,
              unsigned short port, double speed, const std::string& ui_dir,
              double run_for) {
  if (!(speed > 0.0)) {
    throw ConfigError("--speed", 0, "speed must be positive");
  }
  const ScenarioConfig config = load_with_overrides(flags);
  const auto script = load_script(config, script_flag);
  auto stack = build_stack(config);
  TraceWriter traces(flags.out_dir, stack->registry());

  bridge::BridgeOptions options;
  options.port = port;
  options.static_dir = ui_dir;
  std::unique_ptr<bridge::Bridge> server;
  try {
    server = std::make_unique<bridge::Bridge>(options);
  } catch (const bridge::BridgeStartupError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  stack->registry().tap([&](const bus::Envelope& e) {
    traces.record(e);
    server->publish(e);
  });
  for (const auto& event : script) {
    stack->enqueue(event);
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving on http://127.0.0.1:" << server->port() << '\n' << std::flush;

  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::duration<double>(config.stack.dt / speed);
  const auto start = clock::now();
  const auto max_ticks = run_for > 0.0
                             ? std::optional<std::int64_t>(
                                   std::llround(run_for / config.stack.dt))
                             : std::nullopt;
  int status = kExitOk;
  try {
    while (!g_interrupted && (!max_ticks || stack->tick() < *max_ticks)) {
      for (const auto& command : server->drain()) {
        std::visit([&](const auto& c) { stack->enqueue({stack->tick(), c}); }, command);
      }
      stack->run_tick();
      std::this_thread::sleep_until(
          start + std::chrono::duration_cast<clock::duration>(
                      period * static_cast<double>(stack->tick())));
    }
  } catch (const NodeFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    status = kExitRuntime;
  }
  server->stop();
  traces.flush();
  std::cout << "stopped at tick " << stack->tick() << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differential-drive robot simulator and teleoperation stack"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string script;
  std::string calibration_out;
  int port = 8080;
  double speed = 1.0;
  std::string ui_dir;
  double run_for = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "scenario JSON file")->required();
    sub->add_option("--out-dir", flags.out_dir, "directory for traces and reports");
    sub->add_option("--seed", flags.seed, "override the scenario seed");
  };

  auto* sim = app.add_subcommand("sim", "run a scenario headless");
  add_common(sim);
  sim->add_option("--script", script, "key script (tick:key per line)");

  auto* calibrate_cmd = app.add_subcommand("calibrate", "measure PWM to speed tables");
  add_common(calibrate_cmd);
  calibrate_cmd->add_option("--out", calibration_out,
                            "CSV output (default <out-dir>/calibration.csv)");

  auto* serve = app.add_subcommand("serve", "run in real time behind the WebSocket bridge");
  add_common(serve);
  serve->add_option("--script", script, "key script (tick:key per line)");
  serve->add_option("--port", port, "bridge port, 0 picks a free one")
      ->check(CLI::Range(0, 65535));
  serve->add_option("--speed", speed, "simulated seconds per wall-clock second");
  serve->add_option("--ui-dir", ui_dir, "static UI bundle to serve over HTTP");
  serve->add_option("--run-for", run_for, "stop after this much simulated time [s]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (sim->parsed()) {
      return cmd_sim(flags, script);
    }
    if (calibrate_cmd->parsed()) {
      return cmd_calibrate(flags, calibration_out);
    }
    return cmd_serve(flags, script, static_cast<unsigned short>(port), speed, ui_dir,
                     run_for);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidTableError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
