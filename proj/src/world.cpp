#include "socnav/world.hpp"

#include <algorithm>
#include <limits>

#include "socnav/error.hpp"
#include "socnav/kv_file.hpp"

namespace socnav {

Vec2 normalized(Vec2 v) {
  const double n = v.norm();
  return n > 0.0 ? v / n : Vec2{};
}

Vec2 rotated(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

void AgentBody::validate() const {
  if (!(radius > 0.0 && radius < 2.0)) throw ConfigError("agent radius must lie in (0, 2) m");
  if (!(eye_height > 0.0 && eye_height <= height)) {
    throw ConfigError("agent eye height must lie in (0, height]");
  }
}

bool Trajectory::active_at(double t) const {
  return !samples.empty() && t >= start_time() && t <= end_time();
}

void Trajectory::validate() const {
  const std::string who = "trajectory " + std::to_string(agent_id);
  if (samples.size() < 2) throw ConfigError(who + ": needs at least 2 samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i].t) || !samples[i].position.finite()) {
      throw ConfigError(who + ": non-finite sample");
    }
    if (i > 0 && !(samples[i].t > samples[i - 1].t)) {
      throw ConfigError(who + ": timestamps must be strictly increasing");
    }
  }
  if (!goal.finite()) throw ConfigError(who + ": non-finite goal");
}

const Trajectory* Scene::find(int agent_id) const {
  for (const auto& t : trajectories) {
    if (t.agent_id == agent_id) return &t;
  }
  return nullptr;
}

Vec2 interpolate_position(const Trajectory& traj, double t) {
  const auto& s = traj.samples;
  if (t <= s.front().t) return s.front().position;
  if (t >= s.back().t) return s.back().position;
  const auto hi = std::upper_bound(s.begin(), s.end(), t,
                                   [](double v, const TrajectorySample& x) { return v < x.t; });
  const auto lo = hi - 1;
  const double a = (t - lo->t) / (hi->t - lo->t);
  return lo->position + (hi->position - lo->position) * a;
}

Vec2 finite_difference_velocity(const Trajectory& traj, double t, double dt) {
  if (t <= traj.start_time()) {
    return (interpolate_position(traj, t + dt) - interpolate_position(traj, t)) / dt;
  }
  return (interpolate_position(traj, t) - interpolate_position(traj, t - dt)) / dt;
}

bool point_in_polygon(const Polygon& poly, Vec2 p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double signed_area(const Polygon& poly) {
  double twice = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) twice += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * twice;
}

namespace {

int orientation(Vec2 a, Vec2 b, Vec2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

}  // namespace

bool is_simple_polygon(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  if (std::abs(signed_area(poly)) <= 0.0) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (poly[i] == poly[(i + 1) % n]) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) {
        return false;
      }
    }
  }
  return true;
}

Vec2 closest_point_on_segment(Vec2 a, Vec2 b, Vec2 p) {
  const Vec2 ab = b - a;
  const double len2 = ab.squared_norm();
  if (len2 == 0.0) return a;
  const double u = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return a + ab * u;
}

Vec2 closest_point_on_boundary(const Polygon& poly, Vec2 p) {
  Vec2 best = poly.front();
  double best_d2 = std::numeric_limits<double>::infinity();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 c = closest_point_on_segment(poly[i], poly[(i + 1) % n], p);
    const double d2 = (c - p).squared_norm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = c;
    }
  }
  return best;
}

double distance_to_boundary(const Polygon& poly, Vec2 p) {
  return distance(closest_point_on_boundary(poly, p), p);
}

bool point_in_walkable(const StaticMap& map, Vec2 p) {
  if (!map.walkable.empty() && distance_to_boundary(map.walkable, p) > kBoundaryEpsilon &&
      !point_in_polygon(map.walkable, p)) {
    return false;
  }
  for (const auto& obs : map.obstacles) {
    if (distance_to_boundary(obs, p) <= kBoundaryEpsilon) continue;
    if (point_in_polygon(obs, p)) return false;
  }
  return true;
}

double clearance(const StaticMap& map, Vec2 p) {
  double d = std::numeric_limits<double>::infinity();
  if (!map.walkable.empty()) d = distance_to_boundary(map.walkable, p);
  for (const auto& obs : map.obstacles) d = std::min(d, distance_to_boundary(obs, p));
  return point_in_walkable(map, p) ? d : -d;
}

std::vector<Segment> blocking_segments(const StaticMap& map) {
  std::vector<Segment> out;
  auto push_edges = [&out](const Polygon& poly) {
    for (std::size_t i = 0; i < poly.size(); ++i) {
      out.push_back({poly[i], poly[(i + 1) % poly.size()]});
    }
  };
  for (const auto& obs : map.obstacles) push_edges(obs);
  if (!map.walkable.empty()) push_edges(map.walkable);
  return out;
}

Bounds map_bounds(const StaticMap& map) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Bounds b{{inf, inf}, {-inf, -inf}};
  auto grow = [&b](const Polygon& poly) {
    for (const auto& v : poly) {
      b.min.x = std::min(b.min.x, v.x);
      b.min.y = std::min(b.min.y, v.y);
      b.max.x = std::max(b.max.x, v.x);
      b.max.y = std::max(b.max.y, v.y);
    }
  };
  if (!map.walkable.empty()) {
    grow(map.walkable);
  } else {
    for (const auto& obs : map.obstacles) grow(obs);
  }
  return b;
}

StaticMap parse_map(const std::string& text, const std::string& source) {
  const auto doc = KvDocument::parse(text, source);
  doc.reject_unknown({"name", "walkable", "obstacle", "obstacle_height"});
  StaticMap map;
  map.name = doc.get_string("name", "unnamed");
  map.obstacle_height = doc.get_double("obstacle_height", 3.0);
  if (!(map.obstacle_height > 0.0)) {
    throw ParseError(source, doc.find("obstacle_height")->line, "obstacle_height must be > 0");
  }

  auto read_polygon = [&](const KvDocument::Entry& e) {
    Polygon poly = doc.parse_points(e);
    if (!is_simple_polygon(poly)) {
      throw ParseError(source, e.line, "polygon '" + e.key + "' is not simple");
    }
    if (signed_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
    return poly;
  };

  const auto walkable = doc.get_all("walkable");
  if (walkable.size() > 1) throw ParseError(source, walkable[1]->line, "duplicate 'walkable'");
  if (!walkable.empty()) map.walkable = read_polygon(*walkable.front());

  for (const auto* e : doc.get_all("obstacle")) {
    Polygon poly = read_polygon(*e);
    if (!map.walkable.empty()) {
      const Bounds b = map_bounds(map);
      for (const auto& v : poly) {
        if (v.x < b.min.x || v.x > b.max.x || v.y < b.min.y || v.y > b.max.y) {
          throw ParseError(source, e->line, "obstacle lies outside the walkable bounding box");
        }
      }
    }
    map.obstacles.push_back(std::move(poly));
  }
  return map;
}

StaticMap load_map(const std::string& path) { return parse_map(read_text_file(path), path); }

std::string format_map(const StaticMap& map) {
  auto points = [](const Polygon& poly) {
    std::string s;
    for (const auto& v : poly) {
      if (!s.empty()) s += ' ';
      s += "(" + format_double(v.x) + "," + format_double(v.y) + ")";
    }
    return s;
  };
  KvDocument doc;
  doc.add("name", map.name);
  doc.add("obstacle_height", map.obstacle_height);
  if (!map.walkable.empty()) doc.add("walkable", points(map.walkable));
  for (const auto& obs : map.obstacles) doc.add("obstacle", points(obs));
  return doc.to_string();
}

}  // namespace socnav
