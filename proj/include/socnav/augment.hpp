#pragma once

// Synthetic trajectory generation: random start/goal pairs, grid A* with
// line-of-sight smoothing, and reciprocal avoidance between concurrently
// simulated agents.

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "socnav/baselines.hpp"
#include "socnav/error.hpp"
#include "socnav/world.hpp"

namespace socnav {

class KvDocument;

struct AugmentConfig {
  int count = 6000;
  double speed = 1.34;
  double min_path_length = 5.0;
  std::uint64_t seed = 0;
  double grid_resolution = 0.25;
  double agent_radius = 0.3;
  int agents_per_rollout = 8;
  double dt = 0.1;
  double goal_tolerance = 0.3;
  double timeout = 120.0;
  // Successive rollouts are shifted by this much simulated time so agents of
  // different rollouts never coexist when the output is replayed as one scene.
  double rollout_time_stride = 1000.0;

  void validate() const;
  static AugmentConfig from_kv(const KvDocument& doc);
};

class AugmentError : public Error {
 public:
  enum class Code { kMapTooConstrained, kUnreachable };
  AugmentError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct Cell {
  int ix = 0;
  int iy = 0;
  bool operator==(const Cell&) const = default;
};

class NavGrid {
 public:
  NavGrid(const StaticMap& map, double resolution, double inflation);

  const StaticMap& map() const { return *map_; }
  double resolution() const { return resolution_; }
  double inflation() const { return inflation_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }

  bool in_grid(Cell c) const { return c.ix >= 0 && c.iy >= 0 && c.ix < nx_ && c.iy < ny_; }
  bool free(Cell c) const { return in_grid(c) && free_[std::size_t(c.iy) * nx_ + c.ix] != 0; }
  Vec2 center(Cell c) const;
  Cell cell_of(Vec2 p) const;
  std::size_t free_count() const;

  // Clearance >= inflation from every obstacle and the walkable boundary.
  bool point_clear(Vec2 p) const;
  bool segment_clear(Vec2 a, Vec2 b) const;

 private:
  const StaticMap* map_;
  std::vector<Segment> segments_;
  double resolution_;
  double inflation_;
  Vec2 origin_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::uint8_t> free_;
};

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from raw engine bits.
double uniform01(Rng& rng);

std::pair<Vec2, Vec2> sample_goal_pair(const NavGrid& grid, const AugmentConfig& config, Rng& rng);

struct GridPath {
  std::vector<Cell> cells;
  double cost = 0.0;  // in cells: 1 per axis move, sqrt(2) per diagonal move
};

// 8-connected A* with a Euclidean heuristic; diagonal moves may not cut
// corners of blocked cells.
GridPath astar_grid_path(const NavGrid& grid, Cell start, Cell goal);

// A* followed by greedy line-of-sight smoothing. First waypoint is `start`,
// last is `goal`.
std::vector<Vec2> plan_path(const NavGrid& grid, Vec2 start, Vec2 goal);

// One rollout's worth of agents sharing a time axis.
struct RolloutBatch {
  std::vector<Trajectory> trajectories;
};

// Simulates agents_per_rollout agents with waypoint following + RVO. Agents
// that time out are dropped from the batch.
RolloutBatch simulate_rollout(const NavGrid& grid, const AugmentConfig& config,
                              std::uint64_t rollout_index);

// Runs rollouts (in parallel waves) until `count` trajectories exist; output
// is ordered by rollout index, then agent slot. Agent ids are 0..count-1.
std::vector<RolloutBatch> generate_rollouts(const StaticMap& map, const AugmentConfig& config);
std::vector<Trajectory> generate_trajectories(const StaticMap& map, const AugmentConfig& config);

}  // namespace socnav
