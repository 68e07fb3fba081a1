#pragma once

// Online evaluation: one agent of a replayed scene is driven by a policy while
// everyone else follows ground truth; social, collision and distance metrics
// are computed per episode and aggregated.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "socnav/baselines.hpp"
#include "socnav/world.hpp"

namespace socnav {

class KvDocument;

struct SocialZones {
  double r1 = 0.5;
  double r2 = 0.75;
  double r3 = 1.0;
  double c1 = 1.0;
  double c2 = 0.5;
  double c3 = 0.1;

  void validate() const;
  // Cost of the innermost zone containing distance d (strict <), 0 outside r3.
  double cost(double d) const;
};

struct EvalConfig {
  double control_rate = 10.0;  // Hz
  double goal_radius = 1.5;
  double collision_distance = 0.6;
  double timeout_factor = 2.0;  // times the GT episode duration

  void validate() const;
  double dt() const { return 1.0 / control_rate; }
  static EvalConfig from_kv(const KvDocument& doc);
  void append_to(KvDocument& doc) const;
};

// Mean over the agent's samples of the max zone cost against every other
// agent active at that sample's time.
double social_score(const Trajectory& agent, std::span<const Trajectory> others,
                    const SocialZones& zones);

// Mean distance to gt at every agent sample time inside gt's time span.
// Throws ConfigError when the spans do not overlap.
double ade(const Trajectory& agent, const Trajectory& gt);

double fde(Vec2 final_position, Vec2 goal);

// Rising edges of distance < threshold; the series starts out of contact.
int count_contact_events(std::span<const double> distances, double threshold);

// Contact events against every other agent (absent agents are out of
// contact), divided by the agent's sample count.
double count_collisions(const Trajectory& agent, std::span<const Trajectory> others,
                        const EvalConfig& config);

struct EvalEpisode {
  std::size_t scene = 0;
  int agent_id = 0;
};

// Up to max_count episodes in scene order then trajectory order, skipping
// agents that start inside their own goal disc.
std::vector<EvalEpisode> select_episodes(std::span<const Scene> scenes, std::size_t max_count,
                                         double goal_radius);

RolloutOptions rollout_options(const Trajectory& gt, const EvalConfig& config,
                               const CameraConfig& camera);

// The exact trajectory a perfect replay would produce: GT positions at
// t0 + k*dt (held at the last sample), cut by the same goal/timeout rules as
// policy_rollout.
Trajectory gt_reference_trajectory(const Scene& scene, int agent_id, const EvalConfig& config);

struct EpisodeResult {
  std::string scene;
  int episode = 0;
  int agent_id = 0;
  std::size_t steps = 0;
  bool success = false;
  double social_score = 0.0;
  double collisions = 0.0;
  double ade = 0.0;
  double fde_goal = 0.0;
  double fde_gt = 0.0;
  // Same metrics for the recorded agent, from the dataset alone.
  double gt_social_score = 0.0;
  double gt_collisions = 0.0;
};

struct AggregateMetrics {
  double social_score = 0.0;
  double collisions = 0.0;
  double success = 0.0;
  double ade = 0.0;
  double fde_goal = 0.0;
  double fde_gt = 0.0;
  double gt_social_score = 0.0;
};

struct EvalReport {
  std::string model;
  std::vector<EpisodeResult> episodes;
  AggregateMetrics over_episodes;
  AggregateMetrics over_scenes;  // mean of per-scene means
};

EpisodeResult evaluate_episode(const Scene& scene, int agent_id, Policy& policy,
                               const EvalConfig& config, const SocialZones& zones,
                               const CameraConfig& camera);

// Builds the controller for one episode (called once per episode).
using PolicyFactory = std::function<std::unique_ptr<Policy>(const Scene&, int agent_id)>;

// Episodes run in parallel, each with its own policy instance; results keep
// episode order.
EvalReport run_evaluation(std::span<const Scene> scenes, std::span<const EvalEpisode> episodes,
                          const PolicyFactory& make_policy, const std::string& model_name,
                          const EvalConfig& config, const SocialZones& zones,
                          const CameraConfig& camera);
// Every episode gets a clone of `policy`.
EvalReport run_evaluation(std::span<const Scene> scenes, std::span<const EvalEpisode> episodes,
                          const Policy& policy, const std::string& model_name,
                          const EvalConfig& config, const SocialZones& zones,
                          const CameraConfig& camera);
// Replays each episode's own recorded trajectory.
PolicyFactory gt_replay_factory();

AggregateMetrics aggregate(std::span<const EpisodeResult> episodes);
AggregateMetrics aggregate_by_scene(std::span<const EpisodeResult> episodes);

std::string format_report(const EvalReport& report);

}  // namespace socnav
