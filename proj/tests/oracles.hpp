#pragma once

// Independent reference computations for tests. Nothing here calls into the
// library under test.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

struct Pose {
  double x, y, theta;
};

// Closed-form unicycle motion at constant (v, w) for time t.
inline Pose arc(Pose p, double v, double w, double t) {
  if (w == 0.0) {
    return {p.x + v * t * std::cos(p.theta), p.y + v * t * std::sin(p.theta), p.theta};
  }
  const double th = p.theta + w * t;
  const double r = v / w;
  return {p.x + r * (std::sin(th) - std::sin(p.theta)),
          p.y - r * (std::cos(th) - std::cos(p.theta)), th};
}

// Rim speed from encoder ticks, written out longhand.
inline double tick_speed(double ticks, double ticks_per_rev, double radius, double dt) {
  const double revolutions = ticks / ticks_per_rev;
  const double circumference = 2.0 * 3.14159265358979323846 * radius;
  return revolutions * circumference / dt;
}

// Steady speed of the first-order motor for a pwm command.
inline double steady_speed(int pwm, double v_max, int deadband) {
  const int mag = pwm < 0 ? -pwm : pwm;
  if (mag <= deadband) {
    return 0.0;
  }
  const double s = double(mag - deadband) / double(255 - deadband) * v_max;
  return pwm < 0 ? -s : s;
}

// Cells touched by a segment, found by sampling densely along it.
struct Cell {
  int x, y;
  bool operator==(const Cell&) const = default;
};

inline std::vector<Cell> sampled_cells(double x0, double y0, double x1, double y1,
                                       double origin_x, double origin_y, double res,
                                       int samples_per_cell = 10) {
  std::vector<Cell> cells;
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int n = std::max(1, int(std::ceil(len / res * samples_per_cell)));
  for (int i = 0; i <= n; ++i) {
    const double t = double(i) / n;
    const Cell c{int(std::floor((x0 + t * (x1 - x0) - origin_x) / res)),
                 int(std::floor((y0 + t * (y1 - y0) - origin_y) / res))};
    if (cells.empty() || !(cells.back() == c)) {
      bool seen = false;
      for (const auto& k : cells) seen = seen || k == c;
      if (!seen) cells.push_back(c);
    }
  }
  return cells;
}

// Does the closed axis-aligned square [cx-h, cx+h] x [cy-h, cy+h] meet the
// segment? Slab test on the parametric segment.
inline bool segment_meets_square(double x0, double y0, double x1, double y1, double cx,
                                 double cy, double h) {
  double t0 = 0.0, t1 = 1.0;
  const double d[2] = {x1 - x0, y1 - y0};
  const double p[2] = {x0, y0};
  const double lo[2] = {cx - h, cy - h};
  const double hi[2] = {cx + h, cy + h};
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (p[k] < lo[k] || p[k] > hi[k]) return false;
      continue;
    }
    double a = (lo[k] - p[k]) / d[k];
    double b = (hi[k] - p[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace oracle
