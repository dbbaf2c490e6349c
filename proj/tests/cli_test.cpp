#include <gtest/gtest.h>

#include <json.hpp>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = DIFFBOT_SOURCE_DIR;
const std::string kCli = DIFFBOT_CLI;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("diffbot_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Result {
  int status;
  std::string out;
  std::string err;
};

// Child process with stdout/stderr on pipes.
class Process {
 public:
  explicit Process(const std::vector<std::string>& args) {
    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0) throw std::runtime_error("pipe");
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], 1);
    posix_spawn_file_actions_adddup2(&actions, err_pipe[1], 2);
    posix_spawn_file_actions_addclose(&actions, out_pipe[0]);
    posix_spawn_file_actions_addclose(&actions, err_pipe[0]);
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(kCli.c_str()));
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    if (posix_spawn(&pid_, kCli.c_str(), &actions, nullptr, argv.data(), environ) != 0) {
      throw std::runtime_error("spawn failed");
    }
    posix_spawn_file_actions_destroy(&actions);
    close(out_pipe[1]);
    close(err_pipe[1]);
    out_ = fdopen(out_pipe[0], "r");
    err_fd_ = err_pipe[0];
  }

  ~Process() {
    if (pid_ > 0) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    if (out_) fclose(out_);
    if (err_fd_ >= 0) close(err_fd_);
  }

  std::string read_line() {
    char buf[512];
    return fgets(buf, sizeof buf, out_) ? std::string(buf) : std::string();
  }

  void signal(int sig) { kill(pid_, sig); }

  Result wait() {
    Result r{};
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, out_)) > 0) r.out.append(buf, n);
    ssize_t m;
    while ((m = ::read(err_fd_, buf, sizeof buf)) > 0) r.err.append(buf, std::size_t(m));
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
    r.status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    return r;
  }

 private:
  pid_t pid_{-1};
  FILE* out_{nullptr};
  int err_fd_{-1};
};

Result run(const std::vector<std::string>& args) { return Process(args).wait(); }

std::string config(const char* name) { return (kSource / "configs" / name).string(); }

unsigned short port_from_banner(const std::string& line) {
  const auto colon = line.rfind(':');
  return static_cast<unsigned short>(std::stoi(line.substr(colon + 1)));
}

}  // namespace

TEST(Cli, SimWritesTracesAndReport) {
  const fs::path out = scratch_dir("sim");
  const Result r = run({"sim", "--config", config("square4m_teleop.json"), "--out-dir", out});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("ticks 3000"), std::string::npos) << r.out;
  for (const char* f : {"odom.csv", "pwm.csv", "encoder.csv", "truth.csv", "report.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const json report = json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report["ticks"], 3000);
}

TEST(Cli, SameSeedByteIdenticalTraces) {
  const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
  for (const auto& out : {a, b}) {
    ASSERT_EQ(run({"sim", "--config", config("square4m_teleop.json"), "--out-dir", out,
                   "--seed", "9"})
                  .status,
              0);
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename()))
        << entry.path().filename();
  }
  EXPECT_GT(files, 5u);
}

TEST(Cli, ConfigErrorExitsTwoWithLine) {
  const fs::path dir = scratch_dir("bad");
  std::ofstream(dir / "bad.json") << "{\n  \"world\": \"" << (kSource / "worlds/square4m.json").string()
                                  << "\",\n  \"mode\": \"hover\"\n}\n";
  const Result r = run({"sim", "--config", (dir / "bad.json").string(), "--out-dir", dir / "out"});
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("bad.json:3"), std::string::npos) << r.err;
}

TEST(Cli, MissingConfigAndBadFlagsExitTwo) {
  EXPECT_EQ(run({"sim"}).status, 2);
  EXPECT_EQ(run({"sim", "--config", "/nonexistent.json"}).status, 2);
  EXPECT_EQ(run({"serve", "--config", config("square4m_teleop.json"), "--port", "70000"}).status,
            2);
  EXPECT_EQ(run({"frobnicate"}).status, 2);
}

TEST(Cli, RuntimeFailureExitsThree) {
  const fs::path dir = scratch_dir("rt");
  std::ofstream(dir / "not_a_dir") << "x";
  const Result r =
      run({"sim", "--config", config("square4m_teleop.json"), "--out-dir", dir / "not_a_dir"});
  EXPECT_EQ(r.status, 3) << r.err;
}

TEST(Cli, CalibrateWritesTable) {
  const fs::path out = scratch_dir("cal");
  const Result r =
      run({"calibrate", "--config", config("square4m_teleop.json"), "--out-dir", out});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("left:"), std::string::npos);
  EXPECT_NE(r.out.find("right:"), std::string::npos);
  const std::string csv = slurp(out / "calibration.csv");
  EXPECT_FALSE(csv.empty());
  // The table feeds back into a segmented run.
  const fs::path cfg = out / "seg.json";
  std::ofstream(cfg) << json{{"world", (kSource / "worlds/square4m.json").string()},
                             {"controller", {{"type", "segmented"},
                                             {"table", (out / "calibration.csv").string()}}},
                             {"duration", 1}}
                            .dump();
  EXPECT_EQ(run({"sim", "--config", cfg.string(), "--out-dir", out / "seg"}).status, 0);
}

TEST(Cli, ServeRunsForAndStops) {
  const fs::path out = scratch_dir("serve_run_for");
  Process p({"serve", "--config", config("square4m_teleop.json"), "--out-dir", out.string(),
             "--port", "0", "--speed", "10", "--run-for", "1"});
  const std::string banner = p.read_line();
  EXPECT_EQ(banner.rfind("serving on http://127.0.0.1:", 0), 0u) << banner;
  const auto t0 = std::chrono::steady_clock::now();
  const Result r = p.wait();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("stopped at tick 50"), std::string::npos) << r.out;
  // 1 s of simulation at 10x takes about 0.1 s of wall time.
  EXPECT_GT(wall, 0.07);
  EXPECT_LT(wall, 2.0);
  const std::string odom = slurp(out / "odom.csv");
  EXPECT_EQ(std::count(odom.begin(), odom.end(), '\n'), 51);
}

TEST(Cli, ServeStreamsAndShutsDownOnSigint) {
  namespace asio = boost::asio;
  namespace websocket = boost::beast::websocket;
  const fs::path out = scratch_dir("serve_sigint");
  Process p({"serve", "--config", config("square4m_teleop.json"), "--out-dir", out.string(),
             "--port", "0"});
  const unsigned short port = port_from_banner(p.read_line());
  {
    asio::io_context ioc;
    websocket::stream<asio::ip::tcp::socket> ws(ioc);
    asio::ip::tcp::resolver resolver(ioc);
    asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
    ws.write(asio::buffer(std::string(R"({"subscribe":["odom"]})")));
    boost::beast::flat_buffer buf;
    ws.read(buf);
    const json frame = json::parse(boost::beast::buffers_to_string(buf.data()));
    EXPECT_EQ(frame["topic"], "odom");
  }
  p.signal(SIGINT);
  const Result r = p.wait();
  EXPECT_EQ(r.status, 0) << r.err;
  const std::string odom = slurp(out / "odom.csv");
  EXPECT_GT(std::count(odom.begin(), odom.end(), '\n'), 1);
  EXPECT_EQ(odom.back(), '\n');
}

TEST(Cli, ServeOnBusyPortExitsTwo) {
  const fs::path out = scratch_dir("serve_busy");
  Process first({"serve", "--config", config("square4m_teleop.json"), "--out-dir",
                 (out / "a").string(), "--port", "0"});
  const unsigned short port = port_from_banner(first.read_line());
  const Result r = run({"serve", "--config", config("square4m_teleop.json"), "--out-dir",
                        (out / "b").string(), "--port", std::to_string(port)});
  EXPECT_EQ(r.status, 2) << r.err;
  first.signal(SIGTERM);
  EXPECT_EQ(first.wait().status, 0);
}
