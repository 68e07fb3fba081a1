#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "socnav/baselines.hpp"
#include "socnav/error.hpp"
#include "test_support.hpp"

using namespace socnav;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

PolicyInput walker(Vec2 pos, Vec2 goal, Vec2 vel = {}) {
  PolicyInput in;
  in.position = pos;
  in.goal = goal;
  in.velocity = vel;
  in.heading = std::atan2(goal.y - pos.y, goal.x - pos.x);
  return in;
}

PolicyInput rotate_input(const PolicyInput& in, double a) {
  PolicyInput out = in;
  out.position = rotated(in.position, a);
  out.velocity = rotated(in.velocity, a);
  out.goal = rotated(in.goal, a);
  out.heading = in.heading + a;
  for (auto& n : out.neighbors) {
    n.position = rotated(n.position, a);
    n.velocity = rotated(n.velocity, a);
  }
  return out;
}

double brute_contact_time(Vec2 p, Vec2 v, double r, const Segment& s) {
  for (int i = 0; i <= 200000; ++i) {
    const double t = i * 1e-4;
    if (distance(closest_point_on_segment(s.a, s.b, p + v * t), p + v * t) <= r) return t;
  }
  return kInf;
}

}  // namespace

TEST_CASE("parameter defaults and validation") {
  SfmParams s;
  CHECK(s.relaxation_time == 0.5);
  CHECK(s.desired_speed == 1.34);
  CHECK(s.agent_strength == 2.1);
  CHECK(s.agent_range == 0.3);
  CHECK(s.visual_range == 7.0);
  CHECK(s.visual_fov_deg == 135.0);
  CHECK_NOTHROW(s.validate());
  s.visual_fov_deg = 190.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SfmParams{};
  s.agent_range = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  RvoParams r;
  CHECK(r.time_horizon == 2.0);
  CHECK(r.neighbor_range == 7.0);
  CHECK(r.max_speed == 1.6);
  CHECK(r.sample_count == 250);
  CHECK(r.collision_weight == 1.0);
  r.sample_count = 0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("visual field wedge") {
  CHECK(in_visual_field({0, 0}, 0.0, {3, 0}, 7.0, 135.0));
  CHECK_FALSE(in_visual_field({0, 0}, 0.0, {-3, 0}, 7.0, 135.0));
  CHECK_FALSE(in_visual_field({0, 0}, 0.0, {8, 0}, 7.0, 135.0));
  CHECK(in_visual_field({0, 0}, 0.0, {1, 2}, 7.0, 135.0));       // 63.4 deg off axis
  CHECK_FALSE(in_visual_field({0, 0}, 0.0, {1, 3}, 7.0, 135.0)); // 71.6 deg
  CHECK(in_visual_field({0, 0}, kPi / 2, {0, 5}, 7.0, 10.0));
}

TEST_CASE("sfm: relaxation from rest") {
  const Vec2 v = sfm_step(walker({0, 0}, {10, 0}), SfmParams{}, 0.1);
  CHECK(v.x == doctest::Approx(0.268).epsilon(1e-12));
  CHECK(v.y == 0.0);
}

TEST_CASE("sfm: desired velocity is a fixed point") {
  const Vec2 v = sfm_step(walker({0, 0}, {3, 4}, {1.34 * 0.6, 1.34 * 0.8}), SfmParams{}, 0.1);
  CHECK(v.x == doctest::Approx(1.34 * 0.6).epsilon(1e-12));
  CHECK(v.y == doctest::Approx(1.34 * 0.8).epsilon(1e-12));
}

TEST_CASE("sfm: neighbours outside the visual field are ignored") {
  PolicyInput in = walker({0, 0}, {10, 0}, {0.5, 0});
  const Vec2 alone = sfm_step(in, SfmParams{}, 0.1);
  in.neighbors = {{{-0.8, 0}, {0, 0}, 0.3}};
  CHECK(sfm_step(in, SfmParams{}, 0.1) == alone);
  in.neighbors = {{{7.5, 0.5}, {0, 0}, 0.3}};
  CHECK(sfm_step(in, SfmParams{}, 0.1) == alone);
}

TEST_CASE("sfm: a neighbour on the goal line slows the agent") {
  PolicyInput in = walker({0, 0}, {10, 0}, {1.0, 0});
  const Vec2 alone = sfm_step(in, SfmParams{}, 0.1);
  for (double d : {0.7, 1.0, 2.0, 4.0}) {
    in.neighbors = {{{d, 0}, {0, 0}, 0.3}};
    CHECK(sfm_step(in, SfmParams{}, 0.1).x < alone.x);
  }
}

TEST_CASE("sfm: head-on deadlock is broken counterclockwise") {
  PolicyInput in = walker({0, 0}, {10, 0});
  in.neighbors = {{{2, 0}, {0, 0}, 0.3}};
  const Vec2 v = sfm_step(in, SfmParams{}, 0.1);
  CHECK(v.y > 0.0);
  const Vec2 expected_goal_term = rotated({1, 0}, kSfmDeadlockBias) * (1.34 / 0.5 * 0.1);
  CHECK(v.y == doctest::Approx(expected_goal_term.y).epsilon(1e-9));
}

TEST_CASE("sfm: rotating the input rotates the output") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int trial = 0; trial < 200; ++trial) {
    PolicyInput in = walker({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng) / 4, u(rng) / 4});
    in.heading = ang(rng);
    for (int k = 0; k < 3; ++k) in.neighbors.push_back({{u(rng), u(rng)}, {u(rng) / 4, u(rng) / 4}, 0.3});
    const double a = ang(rng);
    const Vec2 expected = rotated(sfm_step(in, SfmParams{}, 0.1), a);
    const Vec2 got = sfm_step(rotate_input(in, a), SfmParams{}, 0.1);
    CHECK(distance(expected, got) < 1e-9);
  }
}

TEST_CASE("sfm: speed clamp and obstacle push") {
  PolicyInput in = walker({0, 0}, {10, 0}, {1.34, 0});
  in.neighbors = {{{0.5, 0.1}, {0, 0}, 0.3}};
  CHECK(sfm_step(in, SfmParams{}, 0.1).norm() <= 1.3 * 1.34 + 1e-12);
  StaticMap map;
  map.obstacles = {{{1.0, 0.3}, {3.0, 0.3}, {3.0, 2.0}, {1.0, 2.0}}};
  PolicyInput near = walker({0, 0}, {10, 0}, {1.34, 0});
  const Vec2 free_v = sfm_step(near, SfmParams{}, 0.1);
  near.map = &map;
  CHECK(sfm_step(near, SfmParams{}, 0.1).y < free_v.y);
}

TEST_CASE("rvo: no neighbours returns the preferred velocity exactly") {
  const PolicyInput in = walker({0, 0}, {20, 5});
  const RvoParams p;
  const Vec2 pref = rvo_preferred_velocity(in, p, 0.1);
  CHECK(pref.norm() == doctest::Approx(1.34));
  CHECK(rvo_step(in, p, 0.1, 7) == pref);
  // Near the goal the preferred speed lands exactly on it.
  const PolicyInput close = walker({0, 0}, {0.05, 0});
  CHECK(rvo_preferred_velocity(close, p, 0.1).x == doctest::Approx(0.5));
}

TEST_CASE("rvo: deterministic per step index") {
  PolicyInput in = walker({0, 0}, {10, 0}, {1, 0});
  in.neighbors = {{{2, 0.1}, {-1, 0}, 0.3}, {{3, -1}, {0, 0.5}, 0.3}};
  const RvoParams p;
  for (std::uint64_t k = 0; k < 10; ++k) CHECK(rvo_step(in, p, 0.1, k) == rvo_step(in, p, 0.1, k));
  CHECK(rvo_candidates(in, p, 0.1, 3) == rvo_candidates(in, p, 0.1, 3));
  CHECK(rvo_candidates(in, p, 0.1, 3) != rvo_candidates(in, p, 0.1, 4));
  const auto c = rvo_candidates(in, p, 0.1, 0);
  CHECK(c.size() == 252);
  for (const auto& v : c) CHECK(v.norm() <= p.max_speed + 1e-12);
}

TEST_CASE("rvo: chosen candidate minimises the penalty over the candidate set") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-4, 4);
  const RvoParams p;
  const StaticMap map = testing::two_obstacle_map();
  for (int trial = 0; trial < 100; ++trial) {
    PolicyInput in = walker({10 + u(rng), 10 + u(rng)}, {10 + u(rng), 10 + u(rng)}, {u(rng) / 4, u(rng) / 4});
    if (trial % 2) in.map = &map;
    for (int k = 0; k < 4; ++k) in.neighbors.push_back({{10 + u(rng), 10 + u(rng)}, {u(rng) / 4, u(rng) / 4}, 0.3});
    const std::uint64_t step = rng() % 100;
    const Vec2 pref = rvo_preferred_velocity(in, p, 0.1);
    const Vec2 out = rvo_step(in, p, 0.1, step);
    const double best = rvo_penalty(in, p, 0.1, out, pref);
    for (const Vec2 c : rvo_candidates(in, p, 0.1, step)) {
      const double pen = rvo_penalty(in, p, 0.1, c, pref);
      if (best == kInf) {
        CHECK(pen == kInf);
      } else {
        CHECK(best <= pen);
      }
    }
  }
}

TEST_CASE("rvo: time to collision matches closed form") {
  PolicyInput in = walker({0, 0}, {10, 0});
  in.neighbors = {{{4, 0}, {0, 0}, 0.3}};
  const RvoParams p;
  // Reciprocal: relative velocity is 2c - v_i - v_j = (2, 0); contact at gap 3.4.
  CHECK(rvo_time_to_collision(in, p, {1, 0}) == doctest::Approx(3.4 / 2.0));
  CHECK(rvo_time_to_collision(in, p, {0.5, 0}) == kInf);  // 3.4 s, past the horizon
  CHECK(rvo_time_to_collision(in, p, {-1, 0}) == kInf);
  const double pen = rvo_penalty(in, p, 0.1, {1, 0}, {1.34, 0});
  CHECK(pen == doctest::Approx(1.0 / 1.7 + 0.34));
}

TEST_CASE("rvo: neighbour already in contact") {
  PolicyInput in = walker({0, 0}, {10, 0});
  in.neighbors = {{{0.4, 0.1}, {0, 0}, 0.3}};
  const RvoParams p;
  CHECK(rvo_time_to_collision(in, p, {1, 0}) == 0.0);
  const Vec2 v = rvo_step(in, p, 0.1, 0);
  CHECK(v.norm() <= p.max_speed + 1e-12);
  const Vec2 sep = in.position - in.neighbors[0].position;
  CHECK(dot(v, sep) > 0.0);
}

TEST_CASE("rvo: symmetric head-on agents mirror each other and never touch") {
  const RvoParams p;
  const double dt = 0.1;
  Vec2 a{-5, 0}, b{5, 0}, va{}, vb{};
  const Vec2 ga{5, 0}, gb{-5, 0};
  double closest = kInf;
  for (std::uint64_t k = 0; k < 100; ++k) {
    PolicyInput ia = walker(a, ga, va);
    ia.neighbors = {{b, vb, 0.3}};
    PolicyInput ib = walker(b, gb, vb);
    ib.neighbors = {{a, va, 0.3}};
    const Vec2 ca = rvo_step(ia, p, dt, k);
    const Vec2 cb = rvo_step(ib, p, dt, k);
    CHECK(distance(ca, -cb) < 1e-12);
    va = ca;
    vb = cb;
    a += va * dt;
    b += vb * dt;
    closest = std::min(closest, distance(a, b));
  }
  CHECK(closest > 0.6);
  CHECK(distance(a, ga) < 0.5);
  CHECK(distance(b, gb) < 0.5);
}

TEST_CASE("segment contact time against a stepped oracle") {
  CHECK(segment_time_to_contact({0, 0}, {1, 0}, 0.5, {{3, -1}, {3, 1}}) == doctest::Approx(2.5));
  CHECK(segment_time_to_contact({0, 0}, {1, 0}, 0.5, {{3, 1}, {3, 5}}) == kInf);
  CHECK(segment_time_to_contact({0, 0}, {1, 0}, 0.5, {{3, 0.3}, {3, 5}}) == doctest::Approx(2.6));
  CHECK(segment_time_to_contact({0, 0}, {1, 0}, 0.5, {{0.2, -1}, {0.2, 1}}) == 0.0);
  CHECK(segment_time_to_contact({0, 0}, {0, 0}, 0.5, {{3, -1}, {3, 1}}) == kInf);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 60; ++trial) {
    const Segment s{{u(rng), u(rng)}, {u(rng), u(rng)}};
    const Vec2 p{u(rng), u(rng)};
    const Vec2 v{u(rng), u(rng)};
    const double t = segment_time_to_contact(p, v, 0.3, s);
    const double oracle = brute_contact_time(p, v, 0.3, s);
    if (oracle == kInf) {
      CHECK(t == kInf);
    } else {
      CHECK(std::abs(t - oracle) <= 1e-4 + 1e-9);
    }
  }
}

TEST_CASE("rollout: GT replay reproduces the recorded trajectory") {
  Scene scene;
  scene.map = testing::square_map(20.0);
  Trajectory gt;
  gt.agent_id = 4;
  for (int k = 0; k <= 60; ++k) {
    const double t = 2.0 + 0.1 * k;
    gt.samples.push_back({t, {2.0 + 0.2 * k, 5.0 + std::sin(0.1 * k)}});
  }
  gt.goal = gt.samples.back().position;
  scene.trajectories = {gt, testing::line_trajectory(5, {15, 15}, {5, 15}, 0.0, 10.0, 0.1)};
  GtReplayPolicy policy(gt, 0.1, gt.start_time());
  RolloutOptions opt;
  opt.goal_radius = 1e-6;
  opt.timeout = 20.0;
  const RolloutResult r = policy_rollout(scene, 4, policy, opt);
  CHECK(r.success);
  REQUIRE(r.trajectory.samples.size() == gt.samples.size());
  for (std::size_t k = 0; k < gt.samples.size(); ++k) {
    CHECK(r.trajectory.samples[k].t == doctest::Approx(gt.samples[k].t));
    CHECK(distance(r.trajectory.samples[k].position, gt.samples[k].position) < 1e-9);
  }
}

TEST_CASE("rollout: SFM reaches the goal in an empty map, zero policy times out") {
  Scene scene;
  scene.map = testing::square_map(20.0);
  scene.trajectories = {testing::line_trajectory(1, {2, 2}, {16, 12}, 0.0, 12.0, 0.1)};
  RolloutOptions opt;
  opt.timeout = 30.0;
  SfmPolicy sfm(SfmParams{}, 0.1);
  const RolloutResult ok = policy_rollout(scene, 1, sfm, opt);
  CHECK(ok.success);
  CHECK_FALSE(ok.timed_out);
  CHECK(distance(ok.trajectory.samples.back().position, scene.trajectories[0].goal) <= 1.5);
  RvoPolicy rvo(RvoParams{}, 0.1);
  CHECK(policy_rollout(scene, 1, rvo, opt).success);
  ZeroPolicy zero;
  const RolloutResult stuck = policy_rollout(scene, 1, zero, opt);
  CHECK(stuck.timed_out);
  CHECK_FALSE(stuck.success);
  CHECK(stuck.trajectory.samples.size() == 301);
  CHECK_THROWS_AS(policy_rollout(scene, 99, zero, opt), ConfigError);
}

TEST_CASE("neighbours follow interpolated ground truth") {
  Scene scene;
  scene.trajectories = {testing::line_trajectory(1, {0, 0}, {10, 0}, 0.0, 10.0, 0.1),
                        testing::line_trajectory(2, {0, 5}, {10, 5}, 3.0, 5.0, 0.1)};
  CHECK(neighbors_at(scene, 1, 1.0).empty());
  const auto n = neighbors_at(scene, 1, 4.0);
  REQUIRE(n.size() == 1);
  CHECK(n[0].position.x == doctest::Approx(2.0));
  CHECK(n[0].velocity.x == doctest::Approx(2.0));
  CHECK(neighbors_at(scene, 7, 4.0).size() == 2);
}
