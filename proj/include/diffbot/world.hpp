#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffbot/kinematics.hpp"

namespace diffbot {

struct Point2 {
  double x{0.0};
  double y{0.0};

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Segment {
  Point2 a;
  Point2 b;
};

struct Bounds {
  double min_x{-1.0};
  double min_y{-1.0};
  double max_x{1.0};
  double max_y{1.0};

  bool contains(const Point2& p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
};

/// Static arena: wall segments, convex cliff regions (drop-offs) and an
/// axis-aligned bounding box. Units are meters.
struct World {
  std::vector<Segment> walls;
  std::vector<std::vector<Point2>> cliffs;
  Bounds bounds;
  std::optional<Pose2D> start;

  void validate() const;
};

class WorldFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

World parse_world_json(const std::string& text);
World load_world(const std::filesystem::path& path);

/// Distance along the ray (origin, unit direction at `angle`) to the
/// segment, if they meet at a nonnegative distance.
std::optional<double> ray_segment_distance(const Point2& origin, double angle,
                                           const Segment& segment);

/// Closest wall hit along the ray, or nullopt.
std::optional<double> cast_ray(const World& world, const Point2& origin,
                               double angle);

double point_segment_distance(const Point2& p, const Segment& segment);

/// Even-odd test; boundary points count as inside.
bool point_in_polygon(const Point2& p, const std::vector<Point2>& polygon);

}  // namespace diffbot
