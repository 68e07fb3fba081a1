#include "socnav/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>

#include "socnav/error.hpp"
#include "socnav/kv_file.hpp"

namespace socnav {

void SocialZones::validate() const {
  if (!(r1 > 0.0 && r1 < r2 && r2 < r3)) throw ConfigError("social zones need 0 < r1 < r2 < r3");
  if (!(c1 > c2 && c2 > c3 && c3 > 0.0)) throw ConfigError("social zone costs need c1 > c2 > c3 > 0");
}

double SocialZones::cost(double d) const {
  if (d < r1) return c1;
  if (d < r2) return c2;
  if (d < r3) return c3;
  return 0.0;
}

void EvalConfig::validate() const {
  if (!(control_rate > 0.0) || !(goal_radius > 0.0) || !(collision_distance > 0.0) ||
      !(timeout_factor > 0.0)) {
    throw ConfigError("eval config values must all be positive");
  }
}

EvalConfig EvalConfig::from_kv(const KvDocument& doc) {
  EvalConfig c;
  c.control_rate = doc.get_double("control_rate", c.control_rate);
  c.goal_radius = doc.get_double("goal_radius", c.goal_radius);
  c.collision_distance = doc.get_double("collision_distance", c.collision_distance);
  c.timeout_factor = doc.get_double("timeout_factor", c.timeout_factor);
  c.validate();
  return c;
}

void EvalConfig::append_to(KvDocument& doc) const {
  doc.add("control_rate", control_rate);
  doc.add("goal_radius", goal_radius);
  doc.add("collision_distance", collision_distance);
  doc.add("timeout_factor", timeout_factor);
}

double social_score(const Trajectory& agent, std::span<const Trajectory> others,
                    const SocialZones& zones) {
  if (agent.samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : agent.samples) {
    double step = 0.0;
    for (const auto& o : others) {
      if (o.agent_id == agent.agent_id || !o.active_at(s.t)) continue;
      step = std::max(step, zones.cost(distance(s.position, interpolate_position(o, s.t))));
    }
    total += step;
  }
  return total / double(agent.samples.size());
}

double ade(const Trajectory& agent, const Trajectory& gt) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : agent.samples) {
    if (!gt.active_at(s.t)) continue;
    sum += distance(s.position, interpolate_position(gt, s.t));
    ++n;
  }
  if (n == 0) throw ConfigError("ade: trajectories share no timestamps");
  return sum / double(n);
}

double fde(Vec2 final_position, Vec2 goal) { return distance(final_position, goal); }

int count_contact_events(std::span<const double> distances, double threshold) {
  int events = 0;
  bool in_contact = false;
  for (double d : distances) {
    const bool now = d < threshold;
    if (now && !in_contact) ++events;
    in_contact = now;
  }
  return events;
}

double count_collisions(const Trajectory& agent, std::span<const Trajectory> others,
                        const EvalConfig& config) {
  if (agent.samples.empty()) return 0.0;
  int events = 0;
  std::vector<double> series(agent.samples.size());
  for (const auto& o : others) {
    if (o.agent_id == agent.agent_id) continue;
    for (std::size_t i = 0; i < agent.samples.size(); ++i) {
      const auto& s = agent.samples[i];
      series[i] = o.active_at(s.t) ? distance(s.position, interpolate_position(o, s.t))
                                   : std::numeric_limits<double>::infinity();
    }
    events += count_contact_events(series, config.collision_distance);
  }
  return double(events) / double(agent.samples.size());
}

std::vector<EvalEpisode> select_episodes(std::span<const Scene> scenes, std::size_t max_count,
                                         double goal_radius) {
  std::vector<EvalEpisode> out;
  for (std::size_t s = 0; s < scenes.size() && out.size() < max_count; ++s) {
    for (const auto& t : scenes[s].trajectories) {
      if (out.size() >= max_count) break;
      if (t.samples.size() < 2 || distance(t.samples.front().position, t.goal) <= goal_radius) continue;
      out.push_back({s, t.agent_id});
    }
  }
  return out;
}

RolloutOptions rollout_options(const Trajectory& gt, const EvalConfig& config,
                               const CameraConfig& camera) {
  RolloutOptions o;
  o.goal_radius = config.goal_radius;
  o.timeout = config.timeout_factor * gt.duration();
  o.camera = camera;
  return o;
}

namespace {

void check_rate(const Scene& scene, const EvalConfig& config) {
  if (std::abs(scene.dt - config.dt()) > 1e-12) {
    throw ConfigError("scene step " + format_double(scene.dt) + " s does not match the control rate " +
                      format_double(config.control_rate) + " Hz");
  }
}

const Trajectory& require_agent(const Scene& scene, int agent_id) {
  const Trajectory* gt = scene.find(agent_id);
  if (!gt) throw ConfigError("agent " + std::to_string(agent_id) + " not in scene '" + scene.map.name + "'");
  return *gt;
}

}  // namespace

Trajectory gt_reference_trajectory(const Scene& scene, int agent_id, const EvalConfig& config) {
  check_rate(scene, config);
  const Trajectory& gt = require_agent(scene, agent_id);
  const double dt = scene.dt;
  const double t0 = gt.start_time();
  const double timeout = config.timeout_factor * gt.duration();
  Trajectory out;
  out.agent_id = agent_id;
  out.goal = gt.goal;
  out.samples.push_back({t0, gt.samples.front().position});
  for (std::uint64_t k = 0;; ++k) {
    if (distance(out.samples.back().position, gt.goal) <= config.goal_radius) break;
    if (double(k) * dt >= timeout - 1e-9) break;
    const double t = t0 + double(k + 1) * dt;
    out.samples.push_back({t, interpolate_position(gt, t)});
  }
  return out;
}

EpisodeResult evaluate_episode(const Scene& scene, int agent_id, Policy& policy,
                               const EvalConfig& config, const SocialZones& zones,
                               const CameraConfig& camera) {
  check_rate(scene, config);
  const Trajectory& gt = require_agent(scene, agent_id);
  const RolloutResult r = policy_rollout(scene, agent_id, policy, rollout_options(gt, config, camera));
  const Trajectory reference = gt_reference_trajectory(scene, agent_id, config);

  EpisodeResult e;
  e.scene = scene.map.name;
  e.agent_id = agent_id;
  e.steps = r.trajectory.samples.size();
  e.success = r.success;
  e.social_score = social_score(r.trajectory, scene.trajectories, zones);
  e.collisions = count_collisions(r.trajectory, scene.trajectories, config);
  e.ade = ade(r.trajectory, gt);
  const auto& last = r.trajectory.samples.back();
  e.fde_goal = fde(last.position, gt.goal);
  e.fde_gt = distance(last.position, interpolate_position(gt, last.t));
  e.gt_social_score = social_score(reference, scene.trajectories, zones);
  e.gt_collisions = count_collisions(reference, scene.trajectories, config);
  return e;
}

EvalReport run_evaluation(std::span<const Scene> scenes, std::span<const EvalEpisode> episodes,
                          const Policy& policy, const std::string& model_name,
                          const EvalConfig& config, const SocialZones& zones,
                          const CameraConfig& camera) {
  return run_evaluation(
      scenes, episodes, [&policy](const Scene&, int) { return policy.clone(); }, model_name, config,
      zones, camera);
}

PolicyFactory gt_replay_factory() {
  return [](const Scene& scene, int agent_id) -> std::unique_ptr<Policy> {
    const Trajectory& gt = require_agent(scene, agent_id);
    return std::make_unique<GtReplayPolicy>(gt, scene.dt, gt.start_time());
  };
}

EvalReport run_evaluation(std::span<const Scene> scenes, std::span<const EvalEpisode> episodes,
                          const PolicyFactory& make_policy, const std::string& model_name,
                          const EvalConfig& config, const SocialZones& zones,
                          const CameraConfig& camera) {
  config.validate();
  zones.validate();
  EvalReport report;
  report.model = model_name;
  report.episodes.resize(episodes.size());
  std::vector<std::exception_ptr> errors(episodes.size());
  const long n = long(episodes.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      const auto& ep = episodes[std::size_t(i)];
      if (ep.scene >= scenes.size()) throw ConfigError("episode refers to a missing scene");
      const Scene& scene = scenes[ep.scene];
      std::unique_ptr<Policy> local;
      std::exception_ptr factory_error;
#pragma omp critical(socnav_policy_factory)
      {
        try {
          local = make_policy(scene, ep.agent_id);
        } catch (...) {
          factory_error = std::current_exception();
        }
      }
      if (factory_error) std::rethrow_exception(factory_error);
      auto r = evaluate_episode(scene, ep.agent_id, *local, config, zones, camera);
      r.episode = int(i);
      report.episodes[std::size_t(i)] = std::move(r);
    } catch (...) {
      errors[std::size_t(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  report.over_episodes = aggregate(report.episodes);
  report.over_scenes = aggregate_by_scene(report.episodes);
  return report;
}

AggregateMetrics aggregate(std::span<const EpisodeResult> episodes) {
  AggregateMetrics a;
  if (episodes.empty()) return a;
  for (const auto& e : episodes) {
    a.social_score += e.social_score;
    a.collisions += e.collisions;
    a.success += e.success ? 1.0 : 0.0;
    a.ade += e.ade;
    a.fde_goal += e.fde_goal;
    a.fde_gt += e.fde_gt;
    a.gt_social_score += e.gt_social_score;
  }
  const double inv = 1.0 / double(episodes.size());
  a.social_score *= inv;
  a.collisions *= inv;
  a.success *= inv;
  a.ade *= inv;
  a.fde_goal *= inv;
  a.fde_gt *= inv;
  a.gt_social_score *= inv;
  return a;
}

AggregateMetrics aggregate_by_scene(std::span<const EpisodeResult> episodes) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<EpisodeResult>> groups;
  for (const auto& e : episodes) {
    if (!groups.count(e.scene)) order.push_back(e.scene);
    groups[e.scene].push_back(e);
  }
  std::vector<EpisodeResult> per_scene;
  for (const auto& name : order) {
    const AggregateMetrics m = aggregate(groups[name]);
    EpisodeResult r;
    r.scene = name;
    r.social_score = m.social_score;
    r.collisions = m.collisions;
    r.ade = m.ade;
    r.fde_goal = m.fde_goal;
    r.fde_gt = m.fde_gt;
    r.gt_social_score = m.gt_social_score;
    per_scene.push_back(r);
  }
  AggregateMetrics a = aggregate(per_scene);
  if (!order.empty()) {
    double success = 0.0;
    for (const auto& name : order) success += aggregate(groups[name]).success;
    a.success = success / double(order.size());
  }
  return a;
}

namespace {

std::string aggregate_row(const std::string& over, const std::string& model, const AggregateMetrics& a) {
  return over + "," + model + "," + format_double(a.social_score) + "," + format_double(a.collisions) +
         "," + format_double(a.success) + "," + format_double(a.ade) + "," + format_double(a.fde_goal) +
         "," + format_double(a.fde_gt) + "," + format_double(a.gt_social_score) + "\n";
}

}  // namespace

std::string format_report(const EvalReport& report) {
  std::string out =
      "model,scene,episode,agent_id,steps,success,social_score,collisions,ade,fde_goal,fde_gt,"
      "gt_social_score,gt_collisions\n";
  for (const auto& e : report.episodes) {
    out += report.model + "," + e.scene + "," + std::to_string(e.episode) + "," +
           std::to_string(e.agent_id) + "," + std::to_string(e.steps) + "," + (e.success ? "1" : "0") +
           "," + format_double(e.social_score) + "," + format_double(e.collisions) + "," +
           format_double(e.ade) + "," + format_double(e.fde_goal) + "," + format_double(e.fde_gt) + "," +
           format_double(e.gt_social_score) + "," + format_double(e.gt_collisions) + "\n";
  }
  out += "\naggregate,model,Social Score,Collisions,Success,ADE,FDE,FDE_gt,GT Social Score\n";
  out += aggregate_row("episodes", report.model, report.over_episodes);
  out += aggregate_row("scenes", report.model, report.over_scenes);
  return out;
}

}  // namespace socnav
