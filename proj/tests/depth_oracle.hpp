#pragma once

// Independent sphere-tracing depth oracle and the constructed scenes it is
// compared on.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "socnav/depth_render.hpp"

namespace socnav::oracle {

inline constexpr double kPi = std::numbers::pi;

// ---- independent sphere-tracing oracle ------------------------------------

inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
  return distance(p, a + ab * t);
}

inline bool inside_polygon(const Polygon& poly, Vec2 p) {
  double total = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i] - p;
    const Vec2 b = poly[(i + 1) % poly.size()] - p;
    total += std::atan2(cross(a, b), dot(a, b));
  }
  return std::abs(total) > kPi;
}

inline double prism_sdf(const Polygon& poly, double height, double x, double y, double z) {
  const Vec2 p{x, y};
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) d = std::min(d, segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
  const double d2 = inside_polygon(poly, p) ? -d : d;
  const double dz = std::max(-z, z - height);
  const double ox = std::max(d2, 0.0);
  const double oz = std::max(dz, 0.0);
  return std::min(std::max(d2, dz), 0.0) + std::sqrt(ox * ox + oz * oz);
}

inline double capsule_sdf(Vec2 base, double radius, double height, double x, double y, double z) {
  const double zc = std::clamp(z, 0.0, height);
  const double dx = x - base.x;
  const double dy = y - base.y;
  return std::sqrt(dx * dx + dy * dy + (z - zc) * (z - zc)) - radius;
}

struct OracleScene {
  StaticMap map;
  std::vector<AgentView> agents;
};

inline double scene_sdf(const OracleScene& s, double x, double y, double z) {
  double d = z;  // floor
  for (const auto& o : s.map.obstacles) d = std::min(d, prism_sdf(o, s.map.obstacle_height, x, y, z));
  for (const auto& a : s.agents) {
    d = std::min(d, capsule_sdf(a.pose.position, a.body.radius, a.body.height, x, y, z));
  }
  return d;
}

// Distance along the pixel ray, capped at d_max (a miss reads as d_max).
inline double oracle_distance(const OracleScene& s, const Pose& viewer, const CameraConfig& cam, int row, int col) {
  const double tan_h = std::tan(cam.fov_horizontal_deg * kPi / 360.0);
  const double tan_v = tan_h * cam.height / cam.width;
  const double u = (2.0 * (col + 0.5) / cam.width - 1.0) * tan_h;
  const double v = (1.0 - 2.0 * (row + 0.5) / cam.height) * tan_v;
  const double fx = std::cos(viewer.heading), fy = std::sin(viewer.heading);
  double dx = fx + u * fy, dy = fy - u * fx, dz = v;
  const double n = std::sqrt(dx * dx + dy * dy + dz * dz);
  dx /= n;
  dy /= n;
  dz /= n;
  double t = 0.0;
  for (int it = 0; it < 2000000; ++it) {
    const double d = scene_sdf(s, viewer.position.x + t * dx, viewer.position.y + t * dy, cam.eye_height + t * dz);
    if (d < 1e-7) return std::min(t, cam.d_max);
    t += d;
    if (t > cam.d_max + 1.0) break;
  }
  return cam.d_max;
}

inline Polygon rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

inline AgentView agent_at(double x, double y) { return {{{x, y}, 0.0}, AgentBody{}}; }

struct NamedScene {
  std::string name;
  OracleScene scene;
  Pose viewer;
};

inline std::vector<NamedScene> constructed_scenes() {
  std::vector<NamedScene> out;
  auto add = [&](std::string name, std::vector<Polygon> obstacles, std::vector<AgentView> agents, Pose viewer,
                 double height = 3.0) {
    OracleScene s;
    s.map.obstacles = std::move(obstacles);
    s.map.obstacle_height = height;
    s.agents = std::move(agents);
    out.push_back({std::move(name), std::move(s), viewer});
  };
  add("empty floor", {}, {}, {{0, 0}, 0.0});
  add("wall ahead", {rect(3.5, -50, 4.5, 50)}, {}, {{0, 0}, 0.0});
  add("wall at 2 m, rotated viewer", {rect(-50, 2, 50, 3)}, {}, {{0, 0}, kPi / 2});
  add("oblique wall", {{{2, -6}, {6, 3}, {7, 2.5}, {3, -6.5}}}, {}, {{0, 0}, 0.2});
  add("low wall seen over the top", {rect(2, -3, 2.5, 3)}, {}, {{0, 0}, 0.0}, 1.0);
  add("wall behind viewer", {rect(-4, -5, -3, 5)}, {}, {{0, 0}, 0.0});
  add("single capsule ahead", {}, {agent_at(2, 0)}, {{0, 0}, 0.0});
  add("capsule close, top visible", {}, {agent_at(0.8, 0.1)}, {{0, 0}, 0.0});
  add("capsule to the left", {}, {agent_at(2, 1.5)}, {{0, 0}, 0.0});
  add("capsule at range edge", {}, {agent_at(6.6, 0.4)}, {{0, 0}, 0.0});
  add("capsule diagonal heading", {}, {agent_at(2, 2)}, {{0, 0}, kPi / 4});
  add("occlusion pair in line", {}, {agent_at(2, 0), agent_at(4, 0.2)}, {{0, 0}, 0.0});
  add("occlusion pair staggered", {}, {agent_at(1.5, -0.3), agent_at(2.5, 0.4)}, {{0, 0}, 0.0});
  add("capsule in front of wall", {rect(4, -20, 5, 20)}, {agent_at(2, 0)}, {{0, 0}, 0.0});
  add("capsule behind wall", {rect(1.5, -1, 2, 1)}, {agent_at(3, 0)}, {{0, 0}, 0.0});
  add("two walls and a capsule", {rect(3, -10, 3.5, -0.5), rect(5, 0.5, 5.5, 10)}, {agent_at(4, 0)}, {{0, 0}, 0.0});
  add("triangle obstacle", {{{2, -1}, {4, 0}, {2, 1}}}, {}, {{0, 0}, 0.0});
  add("concave obstacle", {{{2, -2}, {4, -2}, {4, 2}, {2, 2}, {2, 1}, {3, 1}, {3, -1}, {2, -1}}}, {}, {{0, 0}, 0.0});
  add("viewer off-origin", {rect(8, 3, 9, 9)}, {agent_at(6, 4)}, {{5, 5}, -0.3});
  add("corner of a box", {rect(2, 1, 4, 3)}, {}, {{0, 0}, 0.6});
  add("pillar between agents", {rect(2.9, -0.2, 3.3, 0.2)}, {agent_at(2, 0.6), agent_at(4, -0.5)}, {{0, 0}, 0.0});
  add("agents on both sides", {}, {agent_at(1, 1.2), agent_at(1, -1.2)}, {{0, 0}, 0.0});
  add("tall thin pillar", {rect(3, -0.1, 3.2, 0.1)}, {}, {{0, 0}, 0.05}, 10.0);
  add("heading near pi", {rect(-4, -3, -3.5, 3)}, {agent_at(-2, 0.3)}, {{0, 0}, kPi});
  return out;
}

}  // namespace socnav::oracle
