#include "socnav/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "socnav/error.hpp"
#include "socnav/kv_file.hpp"

namespace socnav {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void SfmParams::validate() const {
  for (double v : {relaxation_time, desired_speed, agent_strength, agent_range, obstacle_strength,
                   obstacle_range, visual_range, visual_fov_deg}) {
    if (!(v > 0.0)) throw ConfigError("SFM parameters must all be > 0");
  }
  if (visual_fov_deg > 180.0) throw ConfigError("SFM visual_fov_deg must lie in (0, 180]");
}

SfmParams SfmParams::from_kv(const KvDocument& doc) {
  SfmParams p;
  p.relaxation_time = doc.get_double("sfm_relaxation_time", p.relaxation_time);
  p.desired_speed = doc.get_double("sfm_desired_speed", p.desired_speed);
  p.agent_strength = doc.get_double("sfm_agent_strength", p.agent_strength);
  p.agent_range = doc.get_double("sfm_agent_range", p.agent_range);
  p.obstacle_strength = doc.get_double("sfm_obstacle_strength", p.obstacle_strength);
  p.obstacle_range = doc.get_double("sfm_obstacle_range", p.obstacle_range);
  p.visual_range = doc.get_double("sfm_visual_range", p.visual_range);
  p.visual_fov_deg = doc.get_double("sfm_visual_fov_deg", p.visual_fov_deg);
  p.validate();
  return p;
}

void RvoParams::validate() const {
  for (double v : {time_horizon, neighbor_range, max_speed, preferred_speed, collision_weight}) {
    if (!(v > 0.0)) throw ConfigError("RVO parameters must all be > 0");
  }
  if (sample_count < 1) throw ConfigError("RVO sample_count must be >= 1");
}

RvoParams RvoParams::from_kv(const KvDocument& doc) {
  RvoParams p;
  p.time_horizon = doc.get_double("rvo_time_horizon", p.time_horizon);
  p.neighbor_range = doc.get_double("rvo_neighbor_range", p.neighbor_range);
  p.max_speed = doc.get_double("rvo_max_speed", p.max_speed);
  p.preferred_speed = doc.get_double("rvo_preferred_speed", p.preferred_speed);
  p.sample_count = static_cast<int>(doc.get_int("rvo_sample_count", p.sample_count));
  p.collision_weight = doc.get_double("rvo_collision_weight", p.collision_weight);
  p.validate();
  return p;
}

bool in_visual_field(Vec2 self, double heading, Vec2 other, double range, double fov_deg) {
  const Vec2 rel = other - self;
  const double d = rel.norm();
  if (d == 0.0 || d > range) return false;
  const Vec2 fwd{std::cos(heading), std::sin(heading)};
  return dot(fwd, rel) >= d * std::cos(fov_deg * std::numbers::pi / 360.0);
}

Vec2 sfm_step(const PolicyInput& in, const SfmParams& p, double dt) {
  Vec2 e_goal = normalized(in.goal - in.position);

  std::vector<const Neighbor*> visible;
  for (const auto& n : in.neighbors) {
    if (in_visual_field(in.position, in.heading, n.position, p.visual_range, p.visual_fov_deg)) {
      visible.push_back(&n);
    }
  }
  for (const auto* n : visible) {
    const Vec2 rel = n->position - in.position;
    if (dot(rel, e_goal) > 0.0 && std::abs(cross(e_goal, rel)) <= 1e-9 * rel.norm()) {
      e_goal = rotated(e_goal, kSfmDeadlockBias);
      break;
    }
  }

  Vec2 force = (e_goal * p.desired_speed - in.velocity) / p.relaxation_time;
  for (const auto* n : visible) {
    const Vec2 away = in.position - n->position;
    const double d = away.norm();
    force += (away / d) * (p.agent_strength * std::exp((in.radius + n->radius - d) / p.agent_range));
  }
  if (in.map) {
    for (const auto& obs : in.map->obstacles) {
      const Vec2 c = closest_point_on_boundary(obs, in.position);
      if (!in_visual_field(in.position, in.heading, c, p.visual_range, p.visual_fov_deg)) continue;
      const Vec2 away = in.position - c;
      const double d = away.norm();
      force += (away / d) *
               (p.obstacle_strength * std::exp((in.radius - d) / p.obstacle_range));
    }
  }

  Vec2 v = in.velocity + force * dt;
  const double cap = 1.3 * p.desired_speed;
  const double speed = v.norm();
  if (speed > cap) v *= cap / speed;
  return v;
}

double segment_time_to_contact(Vec2 p, Vec2 v, double radius, const Segment& s) {
  if (distance(closest_point_on_segment(s.a, s.b, p), p) <= radius) return 0.0;
  double best = kInf;
  const double a = v.squared_norm();
  if (a == 0.0) return best;
  for (const Vec2 end : {s.a, s.b}) {
    const Vec2 rel = p - end;
    const double b = dot(rel, v);
    const double c = rel.squared_norm() - radius * radius;
    const double disc = b * b - a * c;
    if (disc < 0.0 || b >= 0.0) continue;
    const double t = (-b - std::sqrt(disc)) / a;
    if (t >= 0.0) best = std::min(best, t);
  }
  const Vec2 e = s.b - s.a;
  const double len = e.norm();
  if (len > 0.0) {
    const Vec2 dir = e / len;
    const Vec2 n{-dir.y, dir.x};
    const double s0 = dot(p - s.a, n);
    const double sv = dot(v, n);
    if (sv != 0.0) {
      const double side = s0 >= 0.0 ? radius : -radius;
      const double t = (side - s0) / sv;
      if (t >= 0.0) {
        const double along = dot(p + v * t - s.a, dir);
        if (along >= 0.0 && along <= len) best = std::min(best, t);
      }
    }
  }
  return best;
}

namespace {

struct RvoContext {
  const PolicyInput* in;
  std::vector<const Neighbor*> neighbors;
  std::vector<Segment> segments;
};

RvoContext make_context(const PolicyInput& in, const RvoParams& p) {
  RvoContext ctx{&in, {}, {}};
  for (const auto& n : in.neighbors) {
    if (distance(n.position, in.position) <= p.neighbor_range) ctx.neighbors.push_back(&n);
  }
  if (in.map) ctx.segments = blocking_segments(*in.map);
  return ctx;
}

double time_to_collision(const RvoContext& ctx, const RvoParams& p, Vec2 cand) {
  const PolicyInput& in = *ctx.in;
  double best = kInf;
  for (const auto* n : ctx.neighbors) {
    const Vec2 rel_p = in.position - n->position;
    const Vec2 rel_v = cand * 2.0 - in.velocity - n->velocity;
    const double r = in.radius + n->radius;
    const double c = rel_p.squared_norm() - r * r;
    const double b = dot(rel_p, rel_v);
    if (c < 0.0) {
      if (b > 0.0) continue;  // separating
      return 0.0;
    }
    const double a = rel_v.squared_norm();
    const double disc = b * b - a * c;
    if (a == 0.0 || b >= 0.0 || disc < 0.0) continue;
    best = std::min(best, (-b - std::sqrt(disc)) / a);
  }
  for (const auto& s : ctx.segments) {
    const Vec2 closest = closest_point_on_segment(s.a, s.b, in.position);
    if (distance(closest, in.position) < in.radius) {
      if (dot(cand, in.position - closest) > 0.0) continue;
      return 0.0;
    }
    best = std::min(best, segment_time_to_contact(in.position, cand, in.radius, s));
  }
  return best <= p.time_horizon ? best : kInf;
}

double penalty(const RvoContext& ctx, const RvoParams& p, double dt, Vec2 cand, Vec2 pref) {
  const double ttc = time_to_collision(ctx, p, cand);
  if (ttc < dt) return kInf;
  const double collision = ttc == kInf ? 0.0 : p.collision_weight / ttc;
  return collision + (cand - pref).norm();
}

}  // namespace

Vec2 rvo_preferred_velocity(const PolicyInput& in, const RvoParams& p, double dt) {
  const Vec2 to_goal = in.goal - in.position;
  const double dist = to_goal.norm();
  const double speed = std::min({p.preferred_speed, p.max_speed, dist / dt});
  return normalized(to_goal) * speed;
}

std::vector<Vec2> rvo_candidates(const PolicyInput& in, const RvoParams& p, double dt,
                                 std::uint64_t step_index) {
  const Vec2 pref = rvo_preferred_velocity(in, p, dt);
  Vec2 u = normalized(pref);
  if (u == Vec2{}) u = normalized(in.velocity);
  if (u == Vec2{}) u = {1.0, 0.0};
  const Vec2 w{-u.y, u.x};

  // R2 low-discrepancy sequence (plastic constant), offset by step index.
  constexpr double g = 1.32471795724474602596;
  constexpr double a1 = 1.0 / g;
  constexpr double a2 = 1.0 / (g * g);
  std::vector<Vec2> out;
  out.reserve(p.sample_count + 2);
  out.push_back(pref);
  out.push_back({});
  const double base = double(step_index) * p.sample_count;
  for (int k = 0; k < p.sample_count; ++k) {
    const double n = base + k;
    const double x1 = std::fmod(0.5 + a1 * n, 1.0);
    const double x2 = std::fmod(0.5 + a2 * n, 1.0);
    const double r = p.max_speed * std::sqrt(x1);
    const double ang = 2.0 * std::numbers::pi * x2;
    const double lx = r * std::cos(ang);
    const double ly = r * std::sin(ang);
    out.push_back(u * lx + w * ly);
  }
  return out;
}

double rvo_time_to_collision(const PolicyInput& in, const RvoParams& p, Vec2 candidate) {
  return time_to_collision(make_context(in, p), p, candidate);
}

double rvo_penalty(const PolicyInput& in, const RvoParams& p, double dt, Vec2 candidate,
                   Vec2 preferred) {
  return penalty(make_context(in, p), p, dt, candidate, preferred);
}

Vec2 rvo_step(const PolicyInput& in, const RvoParams& p, double dt, std::uint64_t step_index) {
  const RvoContext ctx = make_context(in, p);
  const Vec2 pref = rvo_preferred_velocity(in, p, dt);
  const auto candidates = rvo_candidates(in, p, dt, step_index);
  Vec2 best = candidates.front();
  double best_penalty = kInf;
  for (const Vec2 c : candidates) {
    const double pen = penalty(ctx, p, dt, c, pref);
    if (pen < best_penalty) {
      best_penalty = pen;
      best = c;
    }
  }
  if (best_penalty == kInf) {
    // Every candidate collides within the period: take the latest contact.
    double best_ttc = -1.0;
    for (const Vec2 c : candidates) {
      const double ttc = time_to_collision(ctx, p, c);
      if (ttc > best_ttc) {
        best_ttc = ttc;
        best = c;
      }
    }
  }
  return best;
}

Vec2 GtReplayPolicy::act(const PolicyInput& input, std::uint64_t step) {
  const double next_t = t0_ + double(step + 1) * dt_;
  return (interpolate_position(gt_, next_t) - input.position) / dt_;
}

std::vector<Neighbor> neighbors_at(const Scene& scene, int exclude_id, double t) {
  std::vector<Neighbor> out;
  for (const auto& traj : scene.trajectories) {
    if (traj.agent_id == exclude_id || !traj.active_at(t)) continue;
    out.push_back({interpolate_position(traj, t), finite_difference_velocity(traj, t, scene.dt),
                   scene.body.radius});
  }
  return out;
}

RolloutResult policy_rollout(const Scene& scene, int controlled_agent_id, Policy& policy,
                             const RolloutOptions& options) {
  const Trajectory* gt = scene.find(controlled_agent_id);
  if (!gt) throw ConfigError("rollout: agent " + std::to_string(controlled_agent_id) + " not in scene");
  const double dt = scene.dt;
  const double t0 = gt->start_time();

  RolloutResult result;
  result.trajectory.agent_id = controlled_agent_id;
  result.trajectory.goal = gt->goal;
  Vec2 x = gt->samples.front().position;
  Vec2 v = finite_difference_velocity(*gt, t0, dt);
  double heading = choose_heading(v, x, gt->goal, 0.0);
  result.trajectory.samples.push_back({t0, x});

  CameraConfig cam = options.camera;
  policy.reset();
  for (std::uint64_t k = 0;; ++k) {
    if (distance(x, gt->goal) <= options.goal_radius) {
      result.success = true;
      break;
    }
    if (double(k) * dt >= options.timeout - 1e-9) {
      result.timed_out = true;
      break;
    }
    const double t = t0 + double(k) * dt;
    PolicyInput input;
    input.position = x;
    input.velocity = v;
    input.heading = heading;
    input.radius = scene.body.radius;
    input.goal = gt->goal;
    input.neighbors = neighbors_at(scene, controlled_agent_id, t);
    input.map = &scene.map;
    DepthFrame depth;
    if (policy.needs_depth()) {
      std::vector<AgentView> others;
      for (const auto& n : input.neighbors) others.push_back({{n.position, 0.0}, scene.body});
      depth = render_depth({x, heading}, others, scene.map, cam);
      input.depth = &depth;
    }
    const Vec2 command = policy.act(input, k);
    if (!command.finite()) {
      throw NumericError("rollout: policy produced a non-finite velocity at step " +
                         std::to_string(k));
    }
    x = x + command * dt;
    v = command;
    heading = choose_heading(v, x, gt->goal, heading);
    result.trajectory.samples.push_back({t0 + double(k + 1) * dt, x});
  }
  return result;
}

}  // namespace socnav
