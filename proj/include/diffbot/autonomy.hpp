#pragma once

#include <filesystem>
#include <vector>

#include "diffbot/kinematics.hpp"
#include "diffbot/plant.hpp"

namespace diffbot {

// ---------------------------------------------------------------------------
// Go-to-pose

struct GoalSpec {
  Pose2D goal{};
  double pos_tolerance{0.05};      ///< [m]
  double heading_tolerance{0.1};   ///< [rad]

  void validate() const;
};

struct GoToPoseParams {
  double k_bearing{2.0};
  double k_v{0.5};
  double bearing_gate{0.5235987755982988};  ///< pi/6: no translation beyond this
  double v_max{0.3};      ///< [m/s]
  double omega_max{1.5};  ///< [rad/s]
};

enum class GoalPhase { Approach, Align, Arrived };

GoalPhase goal_phase(const Pose2D& current, const GoalSpec& spec);

/// Reactive three-phase law: drive toward the goal position while steering
/// on the bearing error, then turn in place to the goal heading, then stop.
Twist2D go_to_pose(const Pose2D& current, const GoalSpec& spec,
                   const GoToPoseParams& params = {});

// ---------------------------------------------------------------------------
// Occupancy grid

struct CellIndex {
  int x{0};
  int y{0};

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

struct MapperConfig {
  double l_occ{0.85};
  double l_free{-0.4};
  double l_min{-10.0};
  double l_max{10.0};
  double occ_threshold{2.0};
  double free_threshold{-2.0};
};

enum class CellState { Free, Unknown, Occupied };

/// Log-odds raster. Cell (0, 0) has its lower-left corner at `origin`; the
/// grid is axis-aligned (origin heading is not supported and must be 0).
class OccupancyGrid {
 public:
  OccupancyGrid(double resolution, Pose2D origin, int width, int height,
                double l_min = -10.0, double l_max = 10.0);

  double resolution() const { return resolution_; }
  const Pose2D& origin() const { return origin_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double l_min() const { return l_min_; }
  double l_max() const { return l_max_; }

  bool contains(const CellIndex& c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_;
  }
  /// Cell holding the point; may lie outside the grid.
  CellIndex cell_of(const Point2& p) const;
  Point2 cell_center(const CellIndex& c) const;

  double at(const CellIndex& c) const { return cells_[index(c)]; }
  /// Adds to a cell's log-odds, clamped to [l_min, l_max].
  void add(const CellIndex& c, double delta);

  CellState classify(const CellIndex& c, const MapperConfig& cfg) const;

  const std::vector<double>& cells() const { return cells_; }

 private:
  std::size_t index(const CellIndex& c) const {
    return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c.x);
  }

  double resolution_;
  Pose2D origin_;
  int width_;
  int height_;
  double l_min_;
  double l_max_;
  std::vector<double> cells_;
};

/// Cells crossed by the segment from -> to, in order, each once, ending at
/// the cell of `to`. The segment is first clipped to the grid rectangle; an
/// empty list means it misses the grid entirely.
std::vector<CellIndex> ray_cells(const OccupancyGrid& grid, const Point2& from,
                                 const Point2& to);

/// Inverse sensor model update for one scan taken at `pose`.
void grid_update(OccupancyGrid& grid, const Pose2D& pose, const LidarScan& scan,
                 const MapperConfig& cfg);

/// Writes a binary PGM (0 occupied, 254 free, 205 unknown; first row is the
/// top of the map) and a plain-text sidecar with the same stem and a .yaml
/// extension.
void export_map(const OccupancyGrid& grid, const MapperConfig& cfg,
                const std::filesystem::path& pgm_path);

}  // namespace diffbot
