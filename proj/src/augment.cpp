#include "socnav/augment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <queue>

#include "socnav/kv_file.hpp"

namespace socnav {

void AugmentConfig::validate() const {
  if (count < 1) throw ConfigError("augment count must be >= 1");
  if (!(speed > 0.0)) throw ConfigError("augment speed must be > 0");
  if (!(grid_resolution > 0.0)) throw ConfigError("augment grid_resolution must be > 0");
  if (!(min_path_length >= 0.0)) throw ConfigError("augment min_path_length must be >= 0");
  if (!(agent_radius > 0.0)) throw ConfigError("augment agent_radius must be > 0");
  if (agents_per_rollout < 1) throw ConfigError("augment agents_per_rollout must be >= 1");
  if (!(dt > 0.0) || !(timeout > 0.0) || !(goal_tolerance > 0.0)) {
    throw ConfigError("augment dt, timeout and goal_tolerance must be > 0");
  }
  if (!(rollout_time_stride > timeout)) {
    throw ConfigError("augment rollout_time_stride must exceed the timeout");
  }
}

AugmentConfig AugmentConfig::from_kv(const KvDocument& doc) {
  AugmentConfig c;
  c.count = static_cast<int>(doc.get_int("count", c.count));
  c.speed = doc.get_double("speed", c.speed);
  c.min_path_length = doc.get_double("min_path_length", c.min_path_length);
  c.seed = static_cast<std::uint64_t>(doc.get_int("seed", 0));
  c.grid_resolution = doc.get_double("grid_resolution", c.grid_resolution);
  c.agent_radius = doc.get_double("agent_radius", c.agent_radius);
  c.agents_per_rollout = static_cast<int>(doc.get_int("agents_per_rollout", c.agents_per_rollout));
  c.dt = doc.get_double("dt", c.dt);
  c.goal_tolerance = doc.get_double("goal_tolerance", c.goal_tolerance);
  c.timeout = doc.get_double("timeout", c.timeout);
  c.validate();
  return c;
}

namespace {

double segment_segment_distance(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const Vec2 r = p2 - p1;
  const Vec2 s = q2 - q1;
  const double denom = cross(r, s);
  if (denom != 0.0) {
    const double t = cross(q1 - p1, s) / denom;
    const double u = cross(q1 - p1, r) / denom;
    if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return 0.0;
  }
  return std::min({distance(closest_point_on_segment(q1, q2, p1), p1),
                   distance(closest_point_on_segment(q1, q2, p2), p2),
                   distance(closest_point_on_segment(p1, p2, q1), q1),
                   distance(closest_point_on_segment(p1, p2, q2), q2)});
}

}  // namespace

NavGrid::NavGrid(const StaticMap& map, double resolution, double inflation)
    : map_(&map), segments_(blocking_segments(map)), resolution_(resolution), inflation_(inflation) {
  if (!(resolution > 0.0)) throw ConfigError("grid resolution must be > 0");
  const Bounds b = map_bounds(map);
  if (!(b.min.x < b.max.x && b.min.y < b.max.y)) {
    throw ConfigError("navigation grid needs a bounded map");
  }
  origin_ = b.min;
  nx_ = std::max(1, static_cast<int>(std::ceil((b.max.x - b.min.x) / resolution)));
  ny_ = std::max(1, static_cast<int>(std::ceil((b.max.y - b.min.y) / resolution)));
  free_.assign(std::size_t(nx_) * ny_, 0);
  for (int iy = 0; iy < ny_; ++iy) {
    for (int ix = 0; ix < nx_; ++ix) {
      free_[std::size_t(iy) * nx_ + ix] = point_clear(center({ix, iy})) ? 1 : 0;
    }
  }
}

Vec2 NavGrid::center(Cell c) const {
  return {origin_.x + (c.ix + 0.5) * resolution_, origin_.y + (c.iy + 0.5) * resolution_};
}

Cell NavGrid::cell_of(Vec2 p) const {
  return {static_cast<int>(std::floor((p.x - origin_.x) / resolution_)),
          static_cast<int>(std::floor((p.y - origin_.y) / resolution_))};
}

std::size_t NavGrid::free_count() const {
  return static_cast<std::size_t>(std::count(free_.begin(), free_.end(), 1));
}

bool NavGrid::point_clear(Vec2 p) const {
  if (!point_in_walkable(*map_, p)) return false;
  for (const auto& s : segments_) {
    if (distance(closest_point_on_segment(s.a, s.b, p), p) < inflation_) return false;
  }
  return true;
}

bool NavGrid::segment_clear(Vec2 a, Vec2 b) const {
  if (!point_clear(a) || !point_clear(b)) return false;
  for (const auto& s : segments_) {
    if (segment_segment_distance(a, b, s.a, s.b) < inflation_) return false;
  }
  return true;
}

double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

std::pair<Vec2, Vec2> sample_goal_pair(const NavGrid& grid, const AugmentConfig& config, Rng& rng) {
  const Bounds b = map_bounds(grid.map());
  auto draw = [&] {
    return Vec2{b.min.x + uniform01(rng) * (b.max.x - b.min.x),
                b.min.y + uniform01(rng) * (b.max.y - b.min.y)};
  };
  auto usable = [&](Vec2 p) { return grid.free(grid.cell_of(p)) && grid.point_clear(p); };
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const Vec2 start = draw();
    const Vec2 goal = draw();
    if (usable(start) && usable(goal) && distance(start, goal) >= config.min_path_length) {
      return {start, goal};
    }
  }
  throw AugmentError(AugmentError::Code::kMapTooConstrained,
                     "map too constrained: no start/goal pair found in 10000 attempts");
}

GridPath astar_grid_path(const NavGrid& grid, Cell start, Cell goal) {
  if (!grid.free(start) || !grid.free(goal)) {
    throw AugmentError(AugmentError::Code::kUnreachable, "unreachable: start or goal not in free space");
  }
  const int nx = grid.nx();
  const std::size_t n = std::size_t(nx) * grid.ny();
  auto index = [nx](Cell c) { return std::size_t(c.iy) * nx + c.ix; };
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, inf);
  std::vector<std::int64_t> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);

  auto heuristic = [&](Cell c) { return std::hypot(double(c.ix - goal.ix), double(c.iy - goal.iy)); };
  struct Node {
    double f;
    double g;
    std::size_t idx;
    bool operator>(const Node& o) const {
      if (f != o.f) return f > o.f;
      if (g != o.g) return g < o.g;
      return idx > o.idx;
    }
  };
  std::priority_queue<Node, std::vector<Node>, std::greater<>> open;
  g[index(start)] = 0.0;
  open.push({heuristic(start), 0.0, index(start)});
  const double diag = std::sqrt(2.0);
  while (!open.empty()) {
    const Node cur = open.top();
    open.pop();
    if (closed[cur.idx]) continue;
    closed[cur.idx] = 1;
    const Cell c{int(cur.idx % nx), int(cur.idx / nx)};
    if (c == goal) break;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const Cell nb{c.ix + dx, c.iy + dy};
        if (!grid.free(nb)) continue;
        if (dx != 0 && dy != 0 && (!grid.free({c.ix + dx, c.iy}) || !grid.free({c.ix, c.iy + dy}))) {
          continue;
        }
        const double ng = cur.g + ((dx != 0 && dy != 0) ? diag : 1.0);
        const std::size_t ni = index(nb);
        if (ng < g[ni]) {
          g[ni] = ng;
          parent[ni] = std::int64_t(cur.idx);
          open.push({ng + heuristic(nb), ng, ni});
        }
      }
    }
  }
  if (g[index(goal)] == inf) {
    throw AugmentError(AugmentError::Code::kUnreachable, "unreachable: no path between start and goal");
  }
  GridPath path;
  path.cost = g[index(goal)];
  for (std::int64_t i = std::int64_t(index(goal)); i >= 0; i = parent[i]) {
    path.cells.push_back({int(i % nx), int(i / nx)});
  }
  std::reverse(path.cells.begin(), path.cells.end());
  return path;
}

std::vector<Vec2> plan_path(const NavGrid& grid, Vec2 start, Vec2 goal) {
  if (!grid.point_clear(goal) || !grid.point_clear(start)) {
    throw AugmentError(AugmentError::Code::kUnreachable, "unreachable: start or goal inside an obstacle");
  }
  const GridPath raw = astar_grid_path(grid, grid.cell_of(start), grid.cell_of(goal));
  std::vector<Vec2> pts{start};
  for (std::size_t i = 1; i + 1 < raw.cells.size(); ++i) pts.push_back(grid.center(raw.cells[i]));
  pts.push_back(goal);

  std::vector<Vec2> out{pts.front()};
  std::size_t i = 0;
  while (i + 1 < pts.size()) {
    std::size_t next = i + 1;
    for (std::size_t j = pts.size() - 1; j > i + 1; --j) {
      if (grid.segment_clear(pts[i], pts[j])) {
        next = j;
        break;
      }
    }
    out.push_back(pts[next]);
    i = next;
  }
  return out;
}

namespace {

struct SimAgent {
  std::vector<Vec2> waypoints;
  std::size_t target = 1;
  Vec2 position;
  Vec2 velocity;
  bool active = true;
  Trajectory traj;
};

constexpr double kPlanningMargin = 0.1;
// Extra radius used for agent-agent avoidance only.
constexpr double kAvoidanceMargin = 0.05;

}  // namespace

RolloutBatch simulate_rollout(const NavGrid& grid, const AugmentConfig& config,
                              std::uint64_t rollout_index) {
  Rng rng(config.seed + rollout_index);
  const double t_offset = double(rollout_index) * config.rollout_time_stride;
  const double r = config.agent_radius;

  std::vector<SimAgent> agents;
  int attempts = 0;
  while (int(agents.size()) < config.agents_per_rollout) {
    if (++attempts > 1000) {
      throw AugmentError(AugmentError::Code::kMapTooConstrained,
                         "map too constrained: cannot place agents for a rollout");
    }
    const auto [start, goal] = sample_goal_pair(grid, config, rng);
    bool overlaps = false;
    for (const auto& a : agents) {
      if (distance(a.position, start) < 2.0 * r + 0.2 || distance(a.waypoints.back(), goal) < 2.0 * r + 0.2) {
        overlaps = true;
      }
    }
    if (overlaps) continue;
    std::vector<Vec2> path;
    try {
      path = plan_path(grid, start, goal);
    } catch (const AugmentError& e) {
      if (e.code() == AugmentError::Code::kUnreachable) continue;
      throw;
    }
    SimAgent a;
    a.waypoints = std::move(path);
    a.position = start;
    a.traj.goal = goal;
    a.traj.samples.push_back({t_offset, start});
    agents.push_back(std::move(a));
  }

  RvoParams rvo;
  rvo.max_speed = config.speed;
  rvo.preferred_speed = config.speed;

  const int max_steps = static_cast<int>(std::ceil(config.timeout / config.dt));
  std::vector<Vec2> commands(agents.size());
  for (int step = 0; step < max_steps; ++step) {
    bool any = false;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      auto& a = agents[i];
      if (!a.active) continue;
      any = true;
      while (a.target + 1 < a.waypoints.size() &&
             distance(a.position, a.waypoints[a.target]) <= std::max(0.3, config.speed * config.dt)) {
        ++a.target;
      }
      PolicyInput in;
      in.position = a.position;
      in.velocity = a.velocity;
      in.radius = r + kAvoidanceMargin;
      in.goal = a.waypoints[a.target];
      in.map = &grid.map();
      for (std::size_t j = 0; j < agents.size(); ++j) {
        if (j != i && agents[j].active) {
          in.neighbors.push_back({agents[j].position, agents[j].velocity, r + kAvoidanceMargin});
        }
      }
      commands[i] = rvo_step(in, rvo, config.dt, std::uint64_t(step));
    }
    if (!any) break;
    const double t = t_offset + double(step + 1) * config.dt;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      auto& a = agents[i];
      if (!a.active) continue;
      a.velocity = commands[i];
      a.position += commands[i] * config.dt;
      a.traj.samples.push_back({t, a.position});
      if (distance(a.position, a.traj.goal) <= config.goal_tolerance) a.active = false;
    }
  }

  RolloutBatch batch;
  for (auto& a : agents) {
    if (a.active) continue;  // timed out
    batch.trajectories.push_back(std::move(a.traj));
  }
  return batch;
}

std::vector<RolloutBatch> generate_rollouts(const StaticMap& map, const AugmentConfig& requested) {
  requested.validate();
  AugmentConfig config = requested;
  config.agents_per_rollout = std::min(config.agents_per_rollout, config.count);
  const NavGrid grid(map, config.grid_resolution, config.agent_radius + kPlanningMargin);
  if (grid.free_count() == 0) {
    throw AugmentError(AugmentError::Code::kMapTooConstrained, "map too constrained: no free cells");
  }
  std::vector<RolloutBatch> out;
  std::size_t collected = 0;
  std::uint64_t next_index = 0;
  int empty_waves = 0;
  while (collected < std::size_t(config.count)) {
    const std::size_t missing = std::size_t(config.count) - collected;
    const std::size_t wave = (missing + config.agents_per_rollout - 1) / config.agents_per_rollout;
    std::vector<RolloutBatch> batches(wave);
    std::vector<std::exception_ptr> errors(wave);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < std::int64_t(wave); ++i) {
      try {
        batches[i] = simulate_rollout(grid, config, next_index + std::uint64_t(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    next_index += wave;
    std::size_t gained = 0;
    for (auto& b : batches) {
      if (collected == std::size_t(config.count)) break;
      if (b.trajectories.size() > std::size_t(config.count) - collected) {
        b.trajectories.resize(std::size_t(config.count) - collected);
      }
      for (auto& t : b.trajectories) t.agent_id = static_cast<int>(collected++);
      gained += b.trajectories.size();
      if (!b.trajectories.empty()) out.push_back(std::move(b));
    }
    empty_waves = gained == 0 ? empty_waves + 1 : 0;
    if (empty_waves > 50) {
      throw AugmentError(AugmentError::Code::kMapTooConstrained,
                         "map too constrained: rollouts keep timing out");
    }
  }
  return out;
}

std::vector<Trajectory> generate_trajectories(const StaticMap& map, const AugmentConfig& config) {
  std::vector<Trajectory> out;
  for (auto& b : generate_rollouts(map, config)) {
    for (auto& t : b.trajectories) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace socnav
