#pragma once

// Reference controllers (social force model, reciprocal velocity obstacles),
// the policy interface they share with the learned model, and closed-loop
// rollouts against replayed ground truth.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "socnav/depth_render.hpp"
#include "socnav/world.hpp"

namespace socnav {

class KvDocument;

struct Neighbor {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.3;
};

struct PolicyInput {
  Vec2 position;
  Vec2 velocity;
  double heading = 0.0;
  double radius = 0.3;
  Vec2 goal;
  // Every other agent present at this instant; each policy applies its own
  // sensing range.
  std::vector<Neighbor> neighbors;
  const StaticMap* map = nullptr;
  // Only rendered for policies that ask for it.
  const DepthFrame* depth = nullptr;
};

struct SfmParams {
  double relaxation_time = 0.5;
  double desired_speed = 1.34;
  double agent_strength = 2.1;
  double agent_range = 0.3;
  double obstacle_strength = 10.0;
  double obstacle_range = 0.2;
  double visual_range = 7.0;
  double visual_fov_deg = 135.0;

  void validate() const;
  static SfmParams from_kv(const KvDocument& doc);
};

struct RvoParams {
  double time_horizon = 2.0;
  double neighbor_range = 7.0;
  double max_speed = 1.6;
  double preferred_speed = 1.34;
  int sample_count = 250;
  double collision_weight = 1.0;

  void validate() const;
  static RvoParams from_kv(const KvDocument& doc);
};

// Rotation applied to the goal direction when a neighbour sits exactly on the
// goal line ahead (breaks symmetric head-on deadlocks).
constexpr double kSfmDeadlockBias = 1e-3;

// Sensing cone: within `range` and within half the fov of `heading`.
bool in_visual_field(Vec2 self, double heading, Vec2 other, double range, double fov_deg);

Vec2 sfm_step(const PolicyInput& input, const SfmParams& params, double dt);

Vec2 rvo_preferred_velocity(const PolicyInput& input, const RvoParams& params, double dt);
// Candidate set for a step: preferred velocity, zero, then `sample_count`
// low-discrepancy disc samples expressed in the preferred-direction frame.
std::vector<Vec2> rvo_candidates(const PolicyInput& input, const RvoParams& params, double dt,
                                 std::uint64_t step_index);
// Time to first contact for `candidate` against neighbours (reciprocal: the
// neighbour is assumed to take half the avoidance) and static segments. 0 when
// already in contact and not separating; infinity when no contact within the
// time horizon.
double rvo_time_to_collision(const PolicyInput& input, const RvoParams& params, Vec2 candidate);
// collision_weight / ttc + |candidate - preferred|; infinity for candidates
// that make contact within one control period.
double rvo_penalty(const PolicyInput& input, const RvoParams& params, double dt, Vec2 candidate,
                   Vec2 preferred);
Vec2 rvo_step(const PolicyInput& input, const RvoParams& params, double dt,
              std::uint64_t step_index);

// Earliest t >= 0 at which a disc of `radius` moving from p with velocity v
// touches segment s; infinity if never.
double segment_time_to_contact(Vec2 p, Vec2 v, double radius, const Segment& s);

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::unique_ptr<Policy> clone() const = 0;
  virtual void reset() {}
  virtual bool needs_depth() const { return false; }
  virtual Vec2 act(const PolicyInput& input, std::uint64_t step_index) = 0;
};

class SfmPolicy : public Policy {
 public:
  SfmPolicy(SfmParams params, double dt) : params_(params), dt_(dt) {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<SfmPolicy>(*this); }
  Vec2 act(const PolicyInput& input, std::uint64_t) override { return sfm_step(input, params_, dt_); }

 private:
  SfmParams params_;
  double dt_;
};

class RvoPolicy : public Policy {
 public:
  RvoPolicy(RvoParams params, double dt) : params_(params), dt_(dt) {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<RvoPolicy>(*this); }
  Vec2 act(const PolicyInput& input, std::uint64_t step) override {
    return rvo_step(input, params_, dt_, step);
  }

 private:
  RvoParams params_;
  double dt_;
};

// Closed-loop replay of a recorded trajectory: commands the velocity that
// lands on the recorded position one control period later.
class GtReplayPolicy : public Policy {
 public:
  GtReplayPolicy(Trajectory gt, double dt, double start_time)
      : gt_(std::move(gt)), dt_(dt), t0_(start_time) {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<GtReplayPolicy>(*this); }
  Vec2 act(const PolicyInput& input, std::uint64_t step) override;

 private:
  Trajectory gt_;
  double dt_;
  double t0_;
};

class ZeroPolicy : public Policy {
 public:
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ZeroPolicy>(); }
  Vec2 act(const PolicyInput&, std::uint64_t) override { return {}; }
};

struct RolloutOptions {
  double goal_radius = 1.5;
  double timeout = 60.0;  // seconds of simulated time
  CameraConfig camera;
};

struct RolloutResult {
  Trajectory trajectory;  // controlled agent, one sample per control step
  bool success = false;
  bool timed_out = false;
};

// Neighbours present at time t (all agents except `exclude_id`).
std::vector<Neighbor> neighbors_at(const Scene& scene, int exclude_id, double t);

// Steps the controlled agent with `policy` while every other agent follows
// its interpolated ground truth. Integrates x += dt * v.
RolloutResult policy_rollout(const Scene& scene, int controlled_agent_id, Policy& policy,
                             const RolloutOptions& options);

}  // namespace socnav
