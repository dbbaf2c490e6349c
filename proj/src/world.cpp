#include "diffbot/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace diffbot {

namespace {

using nlohmann::json;

Point2 parse_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw WorldFormatError(where + ": expected [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

double cross(const Point2& a, const Point2& b) { return a.x * b.y - a.y * b.x; }

}  // namespace

void World::validate() const {
  for (std::size_t i = 0; i < walls.size(); ++i) {
    const auto& w = walls[i];
    if (w.a == w.b) {
      throw WorldFormatError("wall " + std::to_string(i) + " is degenerate");
    }
  }
  for (std::size_t i = 0; i < cliffs.size(); ++i) {
    if (cliffs[i].size() < 3) {
      throw WorldFormatError("cliff " + std::to_string(i) +
                             " needs at least 3 vertices");
    }
  }
  if (!(bounds.max_x > bounds.min_x && bounds.max_y > bounds.min_y)) {
    throw WorldFormatError("bounds are empty");
  }
  if (start && !bounds.contains({start->x, start->y})) {
    throw WorldFormatError("start pose lies outside the bounds");
  }
}

World parse_world_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw WorldFormatError(std::string("world JSON: ") + e.what());
  }
  World world;
  if (!root.contains("bounds")) {
    throw WorldFormatError("world JSON: missing 'bounds'");
  }
  const json& b = root.at("bounds");
  try {
    world.bounds = {b.at("min_x").get<double>(), b.at("min_y").get<double>(),
                    b.at("max_x").get<double>(), b.at("max_y").get<double>()};
  } catch (const json::exception&) {
    throw WorldFormatError(
        "world JSON: bounds needs numeric min_x, min_y, max_x, max_y");
  }
  if (root.contains("walls")) {
    std::size_t i = 0;
    for (const json& w : root.at("walls")) {
      const std::string where = "walls[" + std::to_string(i++) + "]";
      if (!w.is_array() || w.size() != 2) {
        throw WorldFormatError(where + ": expected [[x1, y1], [x2, y2]]");
      }
      world.walls.push_back({parse_point(w[0], where), parse_point(w[1], where)});
    }
  }
  if (root.contains("cliffs")) {
    std::size_t i = 0;
    for (const json& c : root.at("cliffs")) {
      const std::string where = "cliffs[" + std::to_string(i++) + "]";
      if (!c.is_array()) {
        throw WorldFormatError(where + ": expected a vertex list");
      }
      std::vector<Point2> polygon;
      for (const json& v : c) {
        polygon.push_back(parse_point(v, where));
      }
      world.cliffs.push_back(std::move(polygon));
    }
  }
  if (root.contains("start")) {
    const json& s = root.at("start");
    world.start = Pose2D{s.value("x", 0.0), s.value("y", 0.0),
                         s.value("theta", 0.0)};
  }
  world.validate();
  return world;
}

World load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw WorldFormatError("cannot open world file: " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_world_json(buffer.str());
  } catch (const WorldFormatError& e) {
    throw WorldFormatError(path.string() + ": " + e.what());
  }
}

std::optional<double> ray_segment_distance(const Point2& origin, double angle,
                                           const Segment& segment) {
  const Point2 dir{std::cos(angle), std::sin(angle)};
  const Point2 edge{segment.b.x - segment.a.x, segment.b.y - segment.a.y};
  const double denom = cross(dir, edge);
  if (denom == 0.0) {
    return std::nullopt;  // parallel
  }
  const Point2 to_a{segment.a.x - origin.x, segment.a.y - origin.y};
  const double t = cross(to_a, edge) / denom;
  const double u = cross(to_a, dir) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) {
    return std::nullopt;
  }
  return t;
}

std::optional<double> cast_ray(const World& world, const Point2& origin,
                               double angle) {
  std::optional<double> best;
  for (const auto& wall : world.walls) {
    if (auto d = ray_segment_distance(origin, angle, wall)) {
      if (!best || *d < *best) {
        best = d;
      }
    }
  }
  return best;
}

double point_segment_distance(const Point2& p, const Segment& segment) {
  const double ex = segment.b.x - segment.a.x;
  const double ey = segment.b.y - segment.a.y;
  const double len2 = ex * ex + ey * ey;
  double t = ((p.x - segment.a.x) * ex + (p.y - segment.a.y) * ey) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (segment.a.x + t * ex), p.y - (segment.a.y + t * ey));
}

bool point_in_polygon(const Point2& p, const std::vector<Point2>& polygon) {
  const std::size_t n = polygon.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = polygon[i];
    const Point2& b = polygon[j];
    if (point_segment_distance(p, {a, b}) < 1e-12) {
      return true;
    }
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) {
        inside = !inside;
      }
    }
  }
  return inside;
}

}  // namespace diffbot
