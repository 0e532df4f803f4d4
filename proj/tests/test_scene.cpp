#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "pcsim/scene.hpp"

using namespace pcsim;

namespace {

std::vector<AgentSpec> two_agents() {
  AgentSpec ego{0, Pose(-40, 0, 0, 0), 100.0, 0.002, true};
  AgentSpec helper{1, Pose(40, 0, 0, std::numbers::pi), 100.0, 0.002, false};
  return {ego, helper};
}

// Independent occlusion oracle: exact ray/segment intersection against each
// footprint edge (no slab math). Returns first-hit object id or -1.
std::int64_t first_hit_object(const Scene& scene, double ox, double oy,
                              double angle, double max_range) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  double best_t = max_range;
  std::int64_t best = -1;
  for (const auto& obj : scene.objects) {
    if (obj.box.contains_xy({ox, oy, 0.0})) return obj.object_id;
    double cx[4], cy[4];
    obj.box.footprint(cx, cy);
    for (int e = 0; e < 4; ++e) {
      const double ax = cx[e], ay = cy[e];
      const double bx = cx[(e + 1) % 4], by = cy[(e + 1) % 4];
      const double ex = bx - ax, ey = by - ay;
      const double denom = dx * ey - dy * ex;
      if (std::abs(denom) < 1e-14) continue;
      const double t = ((ax - ox) * ey - (ay - oy) * ex) / denom;
      const double u = ((ax - ox) * dy - (ay - oy) * dx) / denom;
      if (t >= 0 && u >= 0 && u <= 1 && t < best_t) {
        best_t = t;
        best = obj.object_id;
      }
    }
  }
  return best;
}

Scene make_manual_scene(const std::vector<Vec3>& centers,
                        const SceneParams& params) {
  Scene scene;
  scene.agents = two_agents();
  const auto surface = detail::sample_box_surface(params);
  for (std::size_t k = 0; k < centers.size(); ++k) {
    ObjectState obj;
    obj.object_id = static_cast<std::uint32_t>(k);
    obj.box.center = centers[k];
    obj.box.length = params.object_length;
    obj.box.width = params.object_width;
    obj.box.height = params.object_height;
    obj.box.yaw = 0.0;
    obj.box.confidence = 1.0;
    obj.surface_local = surface;
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

}  // namespace

TEST_CASE("generate_scene validates its inputs") {
  SceneParams p;
  auto agents = two_agents();
  SceneParams bad = p;
  bad.object_count = 0;
  CHECK_THROWS_AS(generate_scene(bad, agents, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_scene(p, {agents[0]}, 1), std::invalid_argument);
  auto no_ego = agents;
  no_ego[0].is_ego = false;
  CHECK_THROWS_AS(generate_scene(p, no_ego, 1), std::invalid_argument);
  auto two_egos = agents;
  two_egos[1].is_ego = true;
  CHECK_THROWS_AS(generate_scene(p, two_egos, 1), std::invalid_argument);
  // Impossible density must fail rather than loop forever.
  SceneParams dense = p;
  dense.extent = 3.0;
  dense.object_count = 40;
  CHECK_THROWS_AS(generate_scene(dense, agents, 1), std::runtime_error);
}

TEST_CASE("generate_scene is deterministic and respects placement rules") {
  SceneParams p;
  p.speed_min = 1.0;
  p.speed_max = 5.0;
  const auto agents = two_agents();
  const Scene a = generate_scene(p, agents, 42);
  const Scene b = generate_scene(p, agents, 42);
  REQUIRE(a.objects.size() == static_cast<std::size_t>(p.object_count));
  REQUIRE(b.objects.size() == a.objects.size());
  for (std::size_t k = 0; k < a.objects.size(); ++k) {
    CHECK(a.objects[k].box.center.x == b.objects[k].box.center.x);
    CHECK(a.objects[k].box.yaw == b.objects[k].box.yaw);
    CHECK(a.objects[k].vx == b.objects[k].vx);
    CHECK(a.objects[k].box.center.x >= -p.extent);
    CHECK(a.objects[k].box.center.x <= p.extent);
    const double speed = std::hypot(a.objects[k].vx, a.objects[k].vy);
    CHECK(speed >= p.speed_min - 1e-12);
    CHECK(speed <= p.speed_max + 1e-12);
  }
  // No pair of footprints may overlap.
  for (std::size_t i = 0; i < a.objects.size(); ++i)
    for (std::size_t j = i + 1; j < a.objects.size(); ++j)
      CHECK_FALSE(
          detail::footprints_overlap(a.objects[i].box, a.objects[j].box, 0.0));

  const Scene c = generate_scene(p, agents, 43);
  bool any_diff = false;
  for (std::size_t k = 0; k < a.objects.size(); ++k)
    any_diff |= a.objects[k].box.center.x != c.objects[k].box.center.x;
  CHECK(any_diff);
}

TEST_CASE("step_scene advances centers linearly and composes") {
  SceneParams p;
  p.speed_min = 2.0;
  p.speed_max = 6.0;
  const Scene s0 = generate_scene(p, two_agents(), 7);
  CHECK_THROWS_AS(step_scene(s0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(step_scene(s0, -0.1), std::invalid_argument);
  const Scene s1 = step_scene(s0, 0.1);
  const Scene s2 = step_scene(s1, 0.1);
  const Scene s2_direct = step_scene(s0, 0.2);
  CHECK(s2.time == doctest::Approx(0.2));
  for (std::size_t k = 0; k < s0.objects.size(); ++k) {
    CHECK(s1.objects[k].box.center.x ==
          doctest::Approx(s0.objects[k].box.center.x + s0.objects[k].vx * 0.1));
    CHECK(s2.objects[k].box.center.x ==
          doctest::Approx(s2_direct.objects[k].box.center.x).epsilon(1e-12));
    CHECK(s2.objects[k].box.center.y ==
          doctest::Approx(s2_direct.objects[k].box.center.y).epsilon(1e-12));
    // Yaw and surface samples never change under motion.
    CHECK(s2.objects[k].box.yaw == s0.objects[k].box.yaw);
    CHECK(s2.objects[k].surface_local.size() ==
          s0.objects[k].surface_local.size());
  }
}

TEST_CASE("observe is deterministic and reports points in the agent frame") {
  SceneParams p;
  const Scene scene = generate_scene(p, two_agents(), 5);
  const OracleNoise noise;
  const auto a = observe(scene, scene.agents[0], noise, 99);
  const auto b = observe(scene, scene.agents[0], noise, 99);
  REQUIRE(a.points.size() == b.points.size());
  CHECK(a.points.size() > 0);
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    CHECK(a.points[k].position.x == b.points[k].position.x);
    CHECK(a.points[k].semantic_score == b.points[k].semantic_score);
  }
  // Each foreground point, mapped back to world, lies on its object's box
  // (slightly inflated for floating point).
  for (const auto& pt : a.points) {
    REQUIRE(pt.is_foreground);
    REQUIRE(pt.object_id.has_value());
    const Vec3 w = scene.agents[0].pose.apply(pt.position);
    CHECK(scene.objects[*pt.object_id].box.contains(w, 1e-6));
    CHECK(pt.semantic_score >= 0.7);
    CHECK(pt.semantic_score <= 1.0);
  }
}

TEST_CASE("zero noise gives exact center votes") {
  SceneParams p;
  const Scene scene = generate_scene(p, two_agents(), 5);
  const auto cloud = observe(scene, scene.agents[1], OracleNoise{}, 3);
  const Pose inv = pose_inverse(scene.agents[1].pose);
  for (const auto& pt : cloud.points) {
    const Vec3 expected = inv.apply(scene.objects[*pt.object_id].box.center);
    CHECK(distance(pt.predicted_center, expected) < 1e-9);
  }
}

TEST_CASE("an object directly behind another is fully shadowed") {
  SceneParams p;
  // Both objects on the +x axis from the ego at (-40, 0): the near one at
  // x=-10 blocks the far one at x=10 (footprint width 2 covers the narrow
  // angular span of the far box entirely).
  Scene scene = make_manual_scene({{-10, 0, 0.8}, {10, 0, 0.8}}, p);
  const auto cloud = observe(scene, scene.agents[0], OracleNoise{}, 1);
  CHECK(cloud.points.size() > 0);
  std::set<std::uint32_t> seen;
  for (const auto& pt : cloud.points) seen.insert(*pt.object_id);
  CHECK(seen.count(0) == 1);
  CHECK(seen.count(1) == 0);
  // The other agent at (40, 0) sees the situation mirrored.
  const auto cloud2 = observe(scene, scene.agents[1], OracleNoise{}, 1);
  std::set<std::uint32_t> seen2;
  for (const auto& pt : cloud2.points) seen2.insert(*pt.object_id);
  CHECK(seen2.count(1) == 1);
  CHECK(seen2.count(0) == 0);
  // Side-by-side objects are both visible.
  Scene open_scene = make_manual_scene({{0, -10, 0.8}, {0, 10, 0.8}}, p);
  const auto cloud3 = observe(open_scene, open_scene.agents[0], OracleNoise{}, 1);
  std::set<std::uint32_t> seen3;
  for (const auto& pt : cloud3.points) seen3.insert(*pt.object_id);
  CHECK(seen3.count(0) == 1);
  CHECK(seen3.count(1) == 1);
}

TEST_CASE("observe matches the independent ray-cast visibility oracle") {
  SceneParams p;
  p.object_count = 8;
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const Scene scene = generate_scene(p, two_agents(), seed);
    for (const auto& agent : scene.agents) {
      const auto cloud = observe(scene, agent, OracleNoise{}, 1);
      // Recompute the expected kept set from scratch.
      std::vector<std::pair<Vec3, std::uint32_t>> expected;
      const double bw = agent.angular_resolution;
      const auto n_bins = static_cast<std::int64_t>(
          std::ceil(2.0 * std::numbers::pi / bw));
      for (const auto& obj : scene.objects)
        for (std::size_t k = 0; k < obj.surface_local.size(); ++k) {
          const Vec3 w = obj.surface_world(k);
          const double dx = w.x - agent.pose.x, dy = w.y - agent.pose.y;
          if (std::hypot(dx, dy) > agent.sensor_range) continue;
          std::int64_t bin = static_cast<std::int64_t>(
              (std::atan2(dy, dx) + std::numbers::pi) / bw);
          bin = std::clamp<std::int64_t>(bin, 0, n_bins - 1);
          const double angle = (bin + 0.5) * bw - std::numbers::pi;
          if (first_hit_object(scene, agent.pose.x, agent.pose.y, angle,
                               agent.sensor_range) ==
              static_cast<std::int64_t>(obj.object_id))
            expected.emplace_back(w, obj.object_id);
        }
      REQUIRE(cloud.points.size() == expected.size());
      const Pose inv = pose_inverse(agent.pose);
      for (std::size_t k = 0; k < expected.size(); ++k) {
        CHECK(distance(cloud.points[k].position,
                       inv.apply(expected[k].first)) < 1e-9);
        CHECK(*cloud.points[k].object_id == expected[k].second);
      }
    }
  }
}

TEST_CASE("background clutter and score flipping") {
  SceneParams p;
  p.object_count = 2;
  const Scene scene = generate_scene(p, two_agents(), 9);
  OracleNoise noise;
  noise.bg_clutter_rate = 0.02;
  const auto cloud = observe(scene, scene.agents[0], noise, 4);
  std::size_t n_bg = 0;
  for (const auto& pt : cloud.points)
    if (!pt.is_foreground) {
      ++n_bg;
      CHECK_FALSE(pt.object_id.has_value());
      CHECK(pt.semantic_score <= 0.3);
      CHECK(pt.position.norm_xy() <= scene.agents[0].sensor_range + 1e-9);
    }
  const double area = std::numbers::pi * 100.0 * 100.0;
  CHECK(n_bg == static_cast<std::size_t>(noise.bg_clutter_rate * area + 0.5));

  OracleNoise flip;
  flip.score_flip_rate = 0.5;
  const auto flipped = observe(scene, scene.agents[0], flip, 4);
  std::size_t low = 0;
  for (const auto& pt : flipped.points)
    if (pt.is_foreground && pt.semantic_score < 0.5) ++low;
  CHECK(low > 0);
  CHECK(low < flipped.points.size());
}

TEST_CASE("cloud_to_csv emits one line per point") {
  SceneParams p;
  p.object_count = 1;
  const Scene scene = generate_scene(p, two_agents(), 2);
  const auto cloud = observe(scene, scene.agents[0], OracleNoise{}, 1);
  const std::string csv = cloud_to_csv(cloud);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == cloud.points.size());
}
