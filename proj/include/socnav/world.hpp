#pragma once

// Scene geometry: static obstacle prisms, walkable bounds, agents as vertical
// capsules, and time-indexed trajectories.

#include <cmath>
#include <string>
#include <vector>

namespace socnav {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double x_, double y_) : x(x_), y(y_) {}

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
  constexpr double squared_norm() const { return x * x + y * y; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }
// Zero vector stays zero.
Vec2 normalized(Vec2 v);
Vec2 rotated(Vec2 v, double angle);

struct AgentBody {
  double radius = 0.3;
  double height = 1.7;
  double eye_height = 1.6;

  void validate() const;
};

using Polygon = std::vector<Vec2>;

struct StaticMap {
  std::string name;
  // Empty walkable polygon means the unbounded plane.
  Polygon walkable;
  std::vector<Polygon> obstacles;
  double obstacle_height = 3.0;
};

struct TrajectorySample {
  double t = 0.0;
  Vec2 position;
};

struct Trajectory {
  int agent_id = 0;
  std::vector<TrajectorySample> samples;
  Vec2 goal;

  double start_time() const { return samples.front().t; }
  double end_time() const { return samples.back().t; }
  double duration() const { return end_time() - start_time(); }
  // Present in the scene during [start_time, end_time].
  bool active_at(double t) const;
  // Throws ConfigError on: < 2 samples, non-increasing time, non-finite values.
  void validate() const;
};

struct Scene {
  StaticMap map;
  std::vector<Trajectory> trajectories;
  double dt = 0.1;
  AgentBody body;

  const Trajectory* find(int agent_id) const;
};

Vec2 interpolate_position(const Trajectory& traj, double t);
Vec2 finite_difference_velocity(const Trajectory& traj, double t, double dt);

// Even-odd rule; no boundary handling.
bool point_in_polygon(const Polygon& poly, Vec2 p);
double signed_area(const Polygon& poly);
bool is_simple_polygon(const Polygon& poly);
Vec2 closest_point_on_segment(Vec2 a, Vec2 b, Vec2 p);
Vec2 closest_point_on_boundary(const Polygon& poly, Vec2 p);
double distance_to_boundary(const Polygon& poly, Vec2 p);

constexpr double kBoundaryEpsilon = 1e-9;

// Inside the walkable polygon and outside every obstacle. Points within
// kBoundaryEpsilon of the walkable boundary count as inside it; points within
// kBoundaryEpsilon of an obstacle boundary count as outside the obstacle.
bool point_in_walkable(const StaticMap& map, Vec2 p);

// Distance from p to the nearest obstacle or walkable boundary; negative
// (minus that distance) when p is not walkable.
double clearance(const StaticMap& map, Vec2 p);

struct Segment {
  Vec2 a;
  Vec2 b;
};
// Obstacle edges followed by walkable boundary edges.
std::vector<Segment> blocking_segments(const StaticMap& map);

struct Bounds {
  Vec2 min;
  Vec2 max;
};
// Bounding box of the walkable polygon, or of the obstacles when unbounded.
Bounds map_bounds(const StaticMap& map);

// Map files: `name`, `obstacle_height`, one `walkable` line and one
// `obstacle` line per polygon, vertices written as `(x,y)`. Clockwise
// polygons are reversed to counter-clockwise.
StaticMap parse_map(const std::string& text, const std::string& source);
StaticMap load_map(const std::string& path);
std::string format_map(const StaticMap& map);

}  // namespace socnav
