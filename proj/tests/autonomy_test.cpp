#include "diffbot/autonomy.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "oracles.hpp"

using namespace diffbot;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

OccupancyGrid small_grid() { return OccupancyGrid(0.1, {0.0, 0.0, 0.0}, 20, 10); }

bool contains_cell(const std::vector<CellIndex>& cells, int x, int y) {
  return std::find(cells.begin(), cells.end(), CellIndex{x, y}) != cells.end();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("diffbot_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(GoToPose, Examples) {
  const GoalSpec at_goal{{1.0, 2.0, 0.5}, 0.05, 0.1};
  EXPECT_EQ(go_to_pose({1.0, 2.0, 0.5}, at_goal), (Twist2D{}));

  const GoalSpec ahead{{1.0, 0.0, 0.0}, 0.05, 0.1};
  EXPECT_EQ(go_to_pose({0, 0, 0}, ahead), (Twist2D{0.3, 0.0, 0.0}));

  const GoalSpec left{{0.0, 1.0, 0.0}, 0.05, 0.1};
  const Twist2D turn = go_to_pose({0, 0, 0}, left);
  EXPECT_EQ(turn.vx, 0.0);
  EXPECT_EQ(turn.omega, std::clamp(2.0 * pi / 2, -1.5, 1.5));
}

TEST(GoToPose, SlowsNearGoalAndAlignsInPlace) {
  const GoalSpec near{{0.2, 0.0, 0.0}, 0.05, 0.1};
  EXPECT_NEAR(go_to_pose({0, 0, 0}, near).vx, 0.5 * 0.2, 1e-15);
  const GoalSpec turned{{0.0, 0.0, 1.0}, 0.05, 0.1};
  const Twist2D align = go_to_pose({0.01, 0.0, 0.0}, turned);
  EXPECT_EQ(align.vx, 0.0);
  EXPECT_DOUBLE_EQ(align.omega, 1.5);
  EXPECT_EQ(goal_phase({0.01, 0, 0}, turned), GoalPhase::Align);
  EXPECT_EQ(goal_phase({0.01, 0, 0.95}, turned), GoalPhase::Arrived);
}

TEST(GoToPose, HeadingErrorWrapsTheShortWay) {
  const GoalSpec spec{{0.0, 0.0, pi - 0.05}, 0.05, 0.01};
  EXPECT_LT(go_to_pose({0, 0, -pi + 0.05}, spec).omega, 0.0);
}

TEST(GoToPose, OutputWithinLimits) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  GoToPoseParams params;
  for (int i = 0; i < 5000; ++i) {
    const GoalSpec spec{{u(rng), u(rng), u(rng)}, 0.05, 0.1};
    const Twist2D t = go_to_pose({u(rng), u(rng), 4 * u(rng)}, spec, params);
    EXPECT_LE(std::abs(t.vx), params.v_max);
    EXPECT_GE(t.vx, 0.0);
    EXPECT_LE(std::abs(t.omega), params.omega_max);
    EXPECT_EQ(t.vy, 0.0);
  }
}

TEST(GoalSpec, RejectsNonPositiveTolerance) {
  EXPECT_THROW((GoalSpec{{}, 0.0, 0.1}.validate()), std::invalid_argument);
  EXPECT_THROW((GoalSpec{{}, 0.05, -0.1}.validate()), std::invalid_argument);
}

TEST(RayCells, SamePointIsOneCell) {
  const auto cells = ray_cells(small_grid(), {0.55, 0.55}, {0.55, 0.55});
  EXPECT_EQ(cells, (std::vector<CellIndex>{{5, 5}}));
}

TEST(RayCells, HorizontalInOrder) {
  const auto cells = ray_cells(small_grid(), {0.15, 0.35}, {0.55, 0.35});
  EXPECT_EQ(cells, (std::vector<CellIndex>{{1, 3}, {2, 3}, {3, 3}, {4, 3}, {5, 3}}));
  const auto back = ray_cells(small_grid(), {0.55, 0.35}, {0.15, 0.35});
  EXPECT_EQ(back, (std::vector<CellIndex>{{5, 3}, {4, 3}, {3, 3}, {2, 3}, {1, 3}}));
}

TEST(RayCells, DiagonalMatchesDenseSampling) {
  const OccupancyGrid grid(0.1, {0.0, 0.0, 0.0}, 40, 40);
  for (int n = 1; n <= 30; ++n) {
    const Point2 from{0.05, 0.05};
    const Point2 to{0.05 + 0.1 * n, 0.05 + 0.1 * n};
    const auto cells = ray_cells(grid, from, to);
    const auto want = oracle::sampled_cells(from.x, from.y, to.x, to.y, 0, 0, 0.1);
    ASSERT_EQ(cells.size(), want.size()) << n;
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(cells[i], (CellIndex{want[i].x, want[i].y})) << n << " at " << i;
    }
  }
}

TEST(RayCells, RandomSegmentsCoverSamplesAndOnlyTouchedCells) {
  const OccupancyGrid grid(0.05, {-1.0, -1.0, 0.0}, 40, 40);
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(-0.999, 0.999);
  for (int trial = 0; trial < 500; ++trial) {
    const Point2 a{u(rng), u(rng)}, b{u(rng), u(rng)};
    const auto cells = ray_cells(grid, a, b);
    ASSERT_FALSE(cells.empty());
    EXPECT_EQ(cells.front(), grid.cell_of(a));
    EXPECT_EQ(cells.back(), grid.cell_of(b));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (std::size_t j = i + 1; j < cells.size(); ++j) {
        EXPECT_FALSE(cells[i] == cells[j]) << "cell visited twice";
      }
      if (i > 0) {
        EXPECT_LE(std::abs(cells[i].x - cells[i - 1].x), 1);
        EXPECT_LE(std::abs(cells[i].y - cells[i - 1].y), 1);
      }
      const Point2 c = grid.cell_center(cells[i]);
      EXPECT_TRUE(oracle::segment_meets_square(a.x, a.y, b.x, b.y, c.x, c.y,
                                               0.025 + 1e-9));
    }
    for (const auto& s : oracle::sampled_cells(a.x, a.y, b.x, b.y, -1.0, -1.0, 0.05, 50)) {
      EXPECT_TRUE(contains_cell(cells, s.x, s.y)) << s.x << "," << s.y;
    }
  }
}

TEST(RayCells, ClipsToGrid) {
  const OccupancyGrid grid = small_grid();  // 2 m x 1 m
  const auto cells = ray_cells(grid, {0.55, 0.55}, {5.0, 0.55});
  ASSERT_FALSE(cells.empty());
  EXPECT_EQ(cells.front(), (CellIndex{5, 5}));
  EXPECT_EQ(cells.back(), (CellIndex{19, 5}));
  for (const auto& c : cells) EXPECT_TRUE(grid.contains(c));
  EXPECT_TRUE(ray_cells(grid, {-1.0, -1.0}, {-2.0, 5.0}).empty());
  const auto entering = ray_cells(grid, {-1.0, 0.55}, {0.35, 0.55});
  EXPECT_EQ(entering.front(), (CellIndex{0, 5}));
  EXPECT_EQ(entering.back(), (CellIndex{3, 5}));
}

TEST(GridUpdate, SingleBeamHit) {
  OccupancyGrid grid(0.1, {-0.05, -0.05, 0.0}, 40, 10);
  const MapperConfig cfg;
  LidarScan scan{0.0, 2 * pi, 8.0, {2.0}};
  grid_update(grid, {0.0, 0.0, 0.0}, scan, cfg);
  for (int x = 0; x < 20; ++x) EXPECT_DOUBLE_EQ(grid.at({x, 0}), cfg.l_free) << x;
  EXPECT_DOUBLE_EQ(grid.at({20, 0}), cfg.l_occ);
  EXPECT_DOUBLE_EQ(grid.at({21, 0}), 0.0);
  EXPECT_DOUBLE_EQ(grid.at({5, 1}), 0.0);
}

TEST(GridUpdate, NoReturnMarksFreeToMaxRange) {
  OccupancyGrid grid(0.1, {-0.05, -0.05, 0.0}, 40, 10);
  const MapperConfig cfg;
  LidarScan scan{0.0, 2 * pi, 1.0, {std::numeric_limits<double>::infinity()}};
  grid_update(grid, {0.0, 0.0, 0.0}, scan, cfg);
  for (int x = 0; x <= 10; ++x) EXPECT_DOUBLE_EQ(grid.at({x, 0}), cfg.l_free) << x;
  EXPECT_DOUBLE_EQ(grid.at({11, 0}), 0.0);
}

TEST(GridUpdate, RepeatedScansSaturateAtClamp) {
  OccupancyGrid grid(0.1, {-0.05, -0.05, 0.0}, 40, 10);
  const MapperConfig cfg;
  LidarScan scan{0.0, 2 * pi, 8.0, {2.0}};
  for (int i = 0; i < 100; ++i) grid_update(grid, {0.0, 0.0, 0.0}, scan, cfg);
  EXPECT_EQ(grid.at({20, 0}), cfg.l_max);
  EXPECT_EQ(grid.at({3, 0}), cfg.l_min);
  grid_update(grid, {0.0, 0.0, 0.0}, scan, cfg);
  EXPECT_EQ(grid.at({20, 0}), cfg.l_max);
  EXPECT_EQ(grid.classify({20, 0}, cfg), CellState::Occupied);
  EXPECT_EQ(grid.classify({3, 0}, cfg), CellState::Free);
  EXPECT_EQ(grid.classify({3, 3}, cfg), CellState::Unknown);
}

TEST(GridUpdate, ScanOrderDoesNotMatter) {
  World room;
  room.bounds = {-3, -3, 3, 3};
  room.walls = {{{-2, -2}, {2, -2}}, {{2, -2}, {2, 2}}, {{2, 2}, {-2, 2}}, {{-2, 2}, {-2, -2}}};
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<std::pair<Pose2D, LidarScan>> scans;
  for (int i = 0; i < 12; ++i) {
    const Pose2D pose{u(rng), u(rng), u(rng)};
    scans.emplace_back(pose, lidar_scan(room, pose, LidarConfig{90, 8.0, 5.5}));
  }
  MapperConfig cfg;
  cfg.l_min = -1e9;
  cfg.l_max = 1e9;
  OccupancyGrid a(0.05, {-2.525, -2.525, 0}, 101, 101, cfg.l_min, cfg.l_max);
  OccupancyGrid b = a;
  for (const auto& [pose, scan] : scans) grid_update(a, pose, scan, cfg);
  std::shuffle(scans.begin(), scans.end(), rng);
  for (const auto& [pose, scan] : scans) grid_update(b, pose, scan, cfg);
  for (std::size_t i = 0; i < a.cells().size(); ++i) {
    EXPECT_NEAR(a.cells()[i], b.cells()[i], 1e-9);
  }
}

TEST(OccupancyGrid, RejectsBadFrames) {
  EXPECT_THROW(OccupancyGrid(0.0, {}, 10, 10), std::invalid_argument);
  EXPECT_THROW(OccupancyGrid(0.1, {}, 0, 10), std::invalid_argument);
  EXPECT_THROW(OccupancyGrid(0.1, {0, 0, 0.3}, 10, 10), std::invalid_argument);
}

TEST(ExportMap, UnknownGridIsUniformGrey) {
  const fs::path dir = temp_dir("map_unknown");
  OccupancyGrid grid(0.05, {-1.0, -2.0, 0.0}, 7, 3);
  export_map(grid, {}, dir / "m.pgm");
  const std::string pgm = read_file(dir / "m.pgm");
  const std::string header = "P5\n7 3\n255\n";
  ASSERT_EQ(pgm.substr(0, header.size()), header);
  ASSERT_EQ(pgm.size(), header.size() + 21);
  for (std::size_t i = header.size(); i < pgm.size(); ++i) {
    EXPECT_EQ(static_cast<unsigned char>(pgm[i]), 205);
  }
  const std::string yaml = read_file(dir / "m.yaml");
  EXPECT_NE(yaml.find("image: m.pgm"), std::string::npos) << yaml;
  EXPECT_NE(yaml.find("resolution: 0.05"), std::string::npos) << yaml;
  EXPECT_NE(yaml.find("origin: [-1, -2, 0]"), std::string::npos) << yaml;
}

TEST(ExportMap, RowZeroIsTop) {
  const fs::path dir = temp_dir("map_cell");
  const MapperConfig cfg;
  OccupancyGrid grid(0.1, {0.0, 0.0, 0.0}, 5, 4);
  grid.add({1, 0}, 5.0);   // bottom row, occupied
  grid.add({3, 3}, -5.0);  // top row, free
  export_map(grid, cfg, dir / "m.pgm");
  const std::string pgm = read_file(dir / "m.pgm");
  const std::size_t body = pgm.size() - 20;
  auto pixel = [&](int row, int col) {
    return static_cast<unsigned char>(pgm[body + std::size_t(row * 5 + col)]);
  };
  EXPECT_EQ(pixel(3, 1), 0);
  EXPECT_EQ(pixel(0, 3), 254);
  int zeros = 0;
  for (std::size_t i = body; i < pgm.size(); ++i) zeros += pgm[i] == 0;
  EXPECT_EQ(zeros, 1);
}

TEST(ExportMap, UnwritablePathNamesThePath) {
  OccupancyGrid grid(0.1, {}, 2, 2);
  const fs::path bad = "/nonexistent_dir_for_test/map.pgm";
  try {
    export_map(grid, {}, bad);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(bad.string()), std::string::npos) << e.what();
  }
}
