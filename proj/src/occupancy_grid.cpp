#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "diffbot/autonomy.hpp"
#include "diffbot/format.hpp"

namespace diffbot {

namespace {

// Liang-Barsky clip of p0 + t (p1 - p0), t in [0, 1], to the rectangle.
bool clip_segment(Point2& p0, Point2& p1, double min_x, double min_y,
                  double max_x, double max_y) {
  const double dx = p1.x - p0.x;
  const double dy = p1.y - p0.y;
  double t0 = 0.0;
  double t1 = 1.0;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {p0.x - min_x, max_x - p0.x, p0.y - min_y, max_y - p0.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) {
        return false;
      }
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
    if (t0 > t1) {
      return false;
    }
  }
  const Point2 start = p0;
  p0 = {start.x + t0 * dx, start.y + t0 * dy};
  p1 = {start.x + t1 * dx, start.y + t1 * dy};
  return true;
}

}  // namespace

OccupancyGrid::OccupancyGrid(double resolution, Pose2D origin, int width,
                             int height, double l_min, double l_max)
    : resolution_(resolution),
      origin_(origin),
      width_(width),
      height_(height),
      l_min_(l_min),
      l_max_(l_max) {
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("grid resolution must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("grid dimensions must be positive");
  }
  if (origin.theta != 0.0) {
    throw std::invalid_argument("rotated grid origins are not supported");
  }
  if (!(l_min <= 0.0 && l_max >= 0.0)) {
    throw std::invalid_argument("grid clamp range must contain 0");
  }
  cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                0.0);
}

CellIndex OccupancyGrid::cell_of(const Point2& p) const {
  return {static_cast<int>(std::floor((p.x - origin_.x) / resolution_)),
          static_cast<int>(std::floor((p.y - origin_.y) / resolution_))};
}

Point2 OccupancyGrid::cell_center(const CellIndex& c) const {
  return {origin_.x + (c.x + 0.5) * resolution_,
          origin_.y + (c.y + 0.5) * resolution_};
}

void OccupancyGrid::add(const CellIndex& c, double delta) {
  double& cell = cells_[index(c)];
  cell = std::clamp(cell + delta, l_min_, l_max_);
}

CellState OccupancyGrid::classify(const CellIndex& c,
                                  const MapperConfig& cfg) const {
  const double value = at(c);
  if (value > cfg.occ_threshold) {
    return CellState::Occupied;
  }
  if (value < cfg.free_threshold) {
    return CellState::Free;
  }
  return CellState::Unknown;
}

std::vector<CellIndex> ray_cells(const OccupancyGrid& grid, const Point2& from,
                                 const Point2& to) {
  Point2 p0 = from;
  Point2 p1 = to;
  const double res = grid.resolution();
  const double min_x = grid.origin().x;
  const double min_y = grid.origin().y;
  if (!clip_segment(p0, p1, min_x, min_y, min_x + grid.width() * res,
                    min_y + grid.height() * res)) {
    return {};
  }

  // Work in cell units.
  const double fx0 = (p0.x - min_x) / res;
  const double fy0 = (p0.y - min_y) / res;
  const double fx1 = (p1.x - min_x) / res;
  const double fy1 = (p1.y - min_y) / res;
  auto to_cell = [](double f, int size) {
    return std::clamp(static_cast<int>(std::floor(f)), 0, size - 1);
  };
  CellIndex cell{to_cell(fx0, grid.width()), to_cell(fy0, grid.height())};
  const CellIndex end{to_cell(fx1, grid.width()), to_cell(fy1, grid.height())};

  const double dx = fx1 - fx0;
  const double dy = fy1 - fy0;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int step_x = dx > 0.0 ? 1 : (dx < 0.0 ? -1 : 0);
  const int step_y = dy > 0.0 ? 1 : (dy < 0.0 ? -1 : 0);
  const double delta_x = step_x != 0 ? 1.0 / std::abs(dx) : inf;
  const double delta_y = step_y != 0 ? 1.0 / std::abs(dy) : inf;
  double t_max_x = step_x > 0   ? (cell.x + 1 - fx0) / dx
                   : step_x < 0 ? (fx0 - cell.x) / -dx
                                : inf;
  double t_max_y = step_y > 0   ? (cell.y + 1 - fy0) / dy
                   : step_y < 0 ? (fy0 - cell.y) / -dy
                                : inf;

  std::vector<CellIndex> cells;
  const int max_cells = std::abs(end.x - cell.x) + std::abs(end.y - cell.y) + 1;
  cells.reserve(static_cast<std::size_t>(max_cells));
  cells.push_back(cell);
  while (!(cell == end) && static_cast<int>(cells.size()) < max_cells) {
    constexpr double tie = 1e-12;
    if (std::abs(t_max_x - t_max_y) <= tie) {
      // Passing exactly through a lattice corner: step diagonally.
      cell.x += step_x;
      cell.y += step_y;
      t_max_x += delta_x;
      t_max_y += delta_y;
    } else if (t_max_x < t_max_y) {
      cell.x += step_x;
      t_max_x += delta_x;
    } else {
      cell.y += step_y;
      t_max_y += delta_y;
    }
    if ((step_x > 0 && cell.x > end.x) || (step_x < 0 && cell.x < end.x) ||
        (step_y > 0 && cell.y > end.y) || (step_y < 0 && cell.y < end.y)) {
      break;  // rounding carried us past the end cell
    }
    cells.push_back(cell);
  }
  if (!(cells.back() == end)) {
    cells.push_back(end);
  }
  return cells;
}

void grid_update(OccupancyGrid& grid, const Pose2D& pose, const LidarScan& scan,
                 const MapperConfig& cfg) {
  const Point2 origin{pose.x, pose.y};
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    const double angle =
        pose.theta + scan.angle_min + scan.angle_increment * static_cast<double>(i);
    const double range = scan.ranges[i];
    const bool hit = std::isfinite(range);
    const double reach = hit ? range : scan.max_range;
    const Point2 endpoint{origin.x + reach * std::cos(angle),
                          origin.y + reach * std::sin(angle)};
    const auto cells = ray_cells(grid, origin, endpoint);
    if (cells.empty()) {
      continue;
    }
    const bool endpoint_in_grid = grid.contains(grid.cell_of(endpoint));
    const bool mark_endpoint = hit && endpoint_in_grid;
    const std::size_t free_count = mark_endpoint ? cells.size() - 1 : cells.size();
    for (std::size_t c = 0; c < free_count; ++c) {
      grid.add(cells[c], cfg.l_free);
    }
    if (mark_endpoint) {
      grid.add(cells.back(), cfg.l_occ);
    }
  }
}

void export_map(const OccupancyGrid& grid, const MapperConfig& cfg,
                const std::filesystem::path& pgm_path) {
  std::ofstream image(pgm_path, std::ios::binary);
  if (!image) {
    throw std::runtime_error("cannot write map image: " + pgm_path.string());
  }
  image << "P5\n" << grid.width() << ' ' << grid.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(grid.width()));
  for (int y = grid.height() - 1; y >= 0; --y) {
    for (int x = 0; x < grid.width(); ++x) {
      switch (grid.classify({x, y}, cfg)) {
        case CellState::Occupied: row[static_cast<std::size_t>(x)] = 0; break;
        case CellState::Free: row[static_cast<std::size_t>(x)] = 254; break;
        case CellState::Unknown: row[static_cast<std::size_t>(x)] = 205; break;
      }
    }
    image.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
  }
  if (!image) {
    throw std::runtime_error("write failed: " + pgm_path.string());
  }

  std::filesystem::path meta_path = pgm_path;
  meta_path.replace_extension(".yaml");
  std::ofstream meta(meta_path, std::ios::binary);
  if (!meta) {
    throw std::runtime_error("cannot write map metadata: " + meta_path.string());
  }
  meta << "image: " << pgm_path.filename().string() << '\n'
       << "resolution: " << format_double(grid.resolution()) << '\n'
       << "origin: [" << format_double(grid.origin().x) << ", "
       << format_double(grid.origin().y) << ", "
       << format_double(grid.origin().theta) << "]\n"
       << "width: " << grid.width() << '\n'
       << "height: " << grid.height() << '\n'
       << "occupied_threshold_logodds: " << format_double(cfg.occ_threshold) << '\n'
       << "free_threshold_logodds: " << format_double(cfg.free_threshold) << '\n';
  if (!meta) {
    throw std::runtime_error("write failed: " + meta_path.string());
  }
}

}  // namespace diffbot
