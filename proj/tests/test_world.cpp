#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "socnav/error.hpp"
#include "socnav/world.hpp"
#include "test_support.hpp"

using namespace socnav;

namespace {

Trajectory corner() {
  Trajectory t;
  t.samples = {{0, {0, 0}}, {1, {2, 0}}, {2, {2, 2}}};
  t.goal = {2, 2};
  return t;
}

// Winding number by summed signed angles; nonzero means inside.
int winding_number(const Polygon& poly, Vec2 p) {
  double total = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i] - p;
    const Vec2 b = poly[(i + 1) % poly.size()] - p;
    total += std::atan2(cross(a, b), dot(a, b));
  }
  return int(std::lround(total / (2 * std::numbers::pi)));
}

bool oracle_walkable(const StaticMap& map, Vec2 p) {
  if (!map.walkable.empty() && winding_number(map.walkable, p) == 0) return false;
  for (const auto& o : map.obstacles) {
    if (winding_number(o, p) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("interpolate_position: midpoint, clamp and second segment") {
  Trajectory t;
  t.samples = {{0, {0, 0}}, {1, {2, 0}}};
  CHECK(interpolate_position(t, 0.5) == Vec2{1, 0});
  CHECK(interpolate_position(t, 2.0) == Vec2{2, 0});
  CHECK(interpolate_position(t, -1.0) == Vec2{0, 0});
  const Vec2 p = interpolate_position(corner(), 1.25);
  CHECK(p.x == doctest::Approx(2.0));
  CHECK(p.y == doctest::Approx(0.5));
}

TEST_CASE("finite_difference_velocity examples") {
  Trajectory t;
  t.samples = {{0, {0, 0}}, {1, {2, 0}}};
  CHECK(finite_difference_velocity(t, 1.0, 0.5) == Vec2{2, 0});
  Trajectory still;
  still.samples = {{0, {3, 3}}, {1, {3, 3}}, {2, {3, 3}}};
  CHECK(finite_difference_velocity(still, 1.0, 0.1) == Vec2{0, 0});
  const Vec2 v = finite_difference_velocity(corner(), 1.5, 1.0);
  CHECK(v.x == doctest::Approx(1.0));
  CHECK(v.y == doctest::Approx(1.0));
  // At the start: forward difference.
  CHECK(finite_difference_velocity(t, 0.0, 0.5) == Vec2{2, 0});
}

TEST_CASE("finite_difference_velocity is exact on constant-velocity trajectories") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec2 v{u(rng), u(rng)};
    const Vec2 x0{u(rng) * 5, u(rng) * 5};
    Trajectory t;
    for (int k = 0; k <= 30; ++k) t.samples.push_back({0.4 * k, x0 + v * (0.4 * k)});
    for (double s = 0.1; s < 12.0; s += 0.37) {
      const Vec2 fd = finite_difference_velocity(t, s, 0.1);
      CHECK(std::abs(fd.x - v.x) < 1e-9);
      CHECK(std::abs(fd.y - v.y) < 1e-9);
    }
  }
}

TEST_CASE("interpolate_position is Lipschitz in the sample speed") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  Trajectory t;
  for (int k = 0; k < 40; ++k) t.samples.push_back({0.4 * k, {u(rng), u(rng)}});
  double vmax = 0.0;
  for (std::size_t i = 1; i < t.samples.size(); ++i) {
    vmax = std::max(vmax, distance(t.samples[i].position, t.samples[i - 1].position) / 0.4);
  }
  for (double s = -1.0; s < 17.0; s += 0.013) {
    for (double eps : {1e-4, 0.01, 0.1}) {
      CHECK(distance(interpolate_position(t, s), interpolate_position(t, s + eps)) <= vmax * eps + 1e-12);
    }
  }
}

TEST_CASE("point_in_walkable examples") {
  StaticMap empty;
  CHECK(point_in_walkable(empty, {123.0, -4.0}));
  const StaticMap map = testing::two_obstacle_map();
  CHECK_FALSE(point_in_walkable(map, {6.5, 7.0}));  // centroid of the first obstacle
  CHECK(point_in_walkable(map, {8.0 + 1e-3, 7.0}));
  CHECK_FALSE(point_in_walkable(map, {8.0 - 1e-3, 7.0}));
  CHECK_FALSE(point_in_walkable(map, {-1e-3, 3.0}));
  // Boundary convention: the walkable edge is inside, an obstacle edge is outside the obstacle.
  CHECK(point_in_walkable(map, {0.0, 3.0}));
  CHECK(point_in_walkable(map, {8.0, 7.0}));
}

TEST_CASE("point_in_walkable agrees with a winding-number oracle") {
  StaticMap map;
  map.walkable = {{0, 0}, {10, 0}, {12, 6}, {6, 11}, {-1, 7}};
  map.obstacles = {{{2, 2}, {4, 2}, {3, 4}},
                   {{6, 3}, {9, 3}, {9, 4}, {7, 4}, {7, 6}, {6, 6}},
                   {{3, 7}, {5, 6.5}, {5.5, 8.5}, {3.5, 9}}};
  const std::vector<StaticMap> maps{map, testing::two_obstacle_map()};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 22);
  for (const auto& m : maps) {
    int disagreements = 0;
    for (int i = 0; i < 1000; ++i) {
      const Vec2 p{u(rng), u(rng)};
      if (point_in_walkable(m, p) != oracle_walkable(m, p)) ++disagreements;
    }
    CHECK(disagreements == 0);
  }
}

TEST_CASE("clearance is signed distance to the nearest boundary") {
  const StaticMap map = testing::two_obstacle_map();
  CHECK(clearance(map, {2.0, 7.0}) == doctest::Approx(2.0));
  CHECK(clearance(map, {9.0, 7.0}) == doctest::Approx(1.0));
  CHECK(clearance(map, {6.5, 7.0}) == doctest::Approx(-1.5));
}

TEST_CASE("map parsing") {
  const std::string text =
      "# test map\n"
      "name = lab\n"
      "walkable = (0,0) (10,0) (10,10) (0,10)\n"
      "obstacle = (2,2) (2,4) (4,4) (4,2)\n"  // clockwise, gets reversed
      "obstacle_height = 2.5\n";
  const StaticMap m = parse_map(text, "lab.map");
  CHECK(m.name == "lab");
  CHECK(m.walkable.size() == 4);
  REQUIRE(m.obstacles.size() == 1);
  CHECK(signed_area(m.obstacles[0]) > 0.0);
  CHECK(m.obstacle_height == 2.5);

  const StaticMap again = parse_map(format_map(m), "again");
  CHECK(again.walkable == m.walkable);
  CHECK(again.obstacles == m.obstacles);

  SUBCASE("self-intersecting obstacle names its line") {
    const std::string bad =
        "name = bad\nwalkable = (0,0) (10,0) (10,10) (0,10)\n\nobstacle = (1,1) (3,3) (3,1) (1,3)\n";
    try {
      parse_map(bad, "bad.map");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
  }
  SUBCASE("obstacle outside the walkable bounding box") {
    const std::string bad = "walkable = (0,0) (10,0) (10,10) (0,10)\nobstacle = (9,9) (12,9) (12,12)\n";
    CHECK_THROWS_AS(parse_map(bad, "bad.map"), ParseError);
  }
  SUBCASE("malformed point") {
    CHECK_THROWS_AS(parse_map("walkable = (0,0) (10,x) (10,10)\n", "bad.map"), ParseError);
  }
}

TEST_CASE("trajectory validation") {
  Trajectory t;
  t.samples = {{0, {0, 0}}};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.samples = {{0, {0, 0}}, {0, {1, 0}}};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.samples = {{0, {0, 0}}, {1, {std::nan(""), 0}}};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.samples = {{0, {0, 0}}, {1, {1, 0}}};
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("agent body invariants") {
  CHECK_NOTHROW(AgentBody{}.validate());
  CHECK_THROWS_AS((AgentBody{2.5, 1.7, 1.6}.validate()), ConfigError);
  CHECK_THROWS_AS((AgentBody{0.3, 1.5, 1.6}.validate()), ConfigError);
}
