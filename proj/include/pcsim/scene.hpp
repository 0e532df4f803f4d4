#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcsim/cluster.hpp"
#include "pcsim/geometry.hpp"
#include "pcsim/rng.hpp"

namespace pcsim {

/// A ground-truth object: box, planar velocity, and its surface point set
/// sampled once at scene creation (in the object-local frame, so motion is a
/// pure box update).
struct ObjectState {
  OrientedBox box;  // confidence fixed at 1.0
  double vx = 0.0;
  double vy = 0.0;
  std::uint32_t object_id = 0;
  std::vector<Vec3> surface_local;

  Vec3 surface_world(std::size_t k) const {
    const Vec3& p = surface_local[k];
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    return {box.center.x + c * p.x - s * p.y, box.center.y + s * p.x + c * p.y,
            box.center.z + p.z};
  }
};

struct AgentSpec {
  std::uint32_t agent_id = 0;
  Pose pose;
  double sensor_range = 100.0;
  double angular_resolution = 0.002;  // radians per visibility bin
  bool is_ego = false;
};

struct LabeledPoint {
  Vec3 position;  // agent-local frame
  bool is_foreground = false;
  std::optional<std::uint32_t> object_id;
  double semantic_score = 0.0;
  Vec3 predicted_center;  // agent-local frame
};

struct LabeledPointCloud {
  std::vector<LabeledPoint> points;
};

/// Controls the fidelity of the sensing oracle.
struct OracleNoise {
  double center_sigma = 0.0;      // meters, on the per-point center vote
  double score_flip_rate = 0.0;   // probability of mirroring a score across 0.5
  double bg_clutter_rate = 0.0;   // background points per square meter
};

struct SceneParams {
  double extent = 50.0;  // objects placed in [-extent, extent]^2
  int object_count = 10;
  double speed_min = 0.0;
  double speed_max = 0.0;
  double object_length = 4.5;
  double object_width = 2.0;
  double object_height = 1.6;
  double surface_spacing = 0.25;  // horizontal spacing of surface samples
  int surface_rows = 3;           // vertical rows per face
  double placement_margin = 1.0;  // min footprint gap between objects
};

struct Scene {
  std::vector<ObjectState> objects;
  std::vector<AgentSpec> agents;
  double time = 0.0;
};

namespace detail {

inline std::vector<Vec3> sample_box_surface(const SceneParams& p) {
  std::vector<Vec3> pts;
  const double hl = 0.5 * p.object_length, hw = 0.5 * p.object_width;
  std::vector<double> zs;
  for (int r = 0; r < p.surface_rows; ++r) {
    const double f = (r + 1.0) / (p.surface_rows + 1.0);
    zs.push_back((f - 0.5) * p.object_height);
  }
  auto line = [&](double x0, double y0, double x1, double y1) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int n = std::max(1, static_cast<int>(len / p.surface_spacing));
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      for (double z : zs)
        pts.push_back({x0 + t * (x1 - x0), y0 + t * (y1 - y0), z});
    }
  };
  line(-hl, -hw, hl, -hw);
  line(hl, -hw, hl, hw);
  line(hl, hw, -hl, hw);
  line(-hl, hw, -hl, -hw);
  return pts;
}

inline bool footprints_overlap(const OrientedBox& a, const OrientedBox& b,
                               double margin) {
  // Conservative circle test followed by separating-axis test on both boxes.
  const double ra = 0.5 * std::hypot(a.length, a.width) + margin;
  const double rb = 0.5 * std::hypot(b.length, b.width);
  const double d = std::hypot(a.center.x - b.center.x, a.center.y - b.center.y);
  if (d > ra + rb) return false;
  auto separated_by = [&](const OrientedBox& ref, const OrientedBox& oth,
                          double pad) {
    double cx[4], cy[4];
    oth.footprint(cx, cy);
    const double c = std::cos(ref.yaw), s = std::sin(ref.yaw);
    double min_l = 1e300, max_l = -1e300, min_w = 1e300, max_w = -1e300;
    for (int i = 0; i < 4; ++i) {
      const double dx = cx[i] - ref.center.x, dy = cy[i] - ref.center.y;
      const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
      min_l = std::min(min_l, lx);
      max_l = std::max(max_l, lx);
      min_w = std::min(min_w, ly);
      max_w = std::max(max_w, ly);
    }
    return min_l > 0.5 * ref.length + pad || max_l < -0.5 * ref.length - pad ||
           min_w > 0.5 * ref.width + pad || max_w < -0.5 * ref.width - pad;
  };
  return !(separated_by(a, b, margin) || separated_by(b, a, margin));
}

/// Distance along the 2D ray (origin, direction angle) to the entry of the
/// box footprint; negative when the ray misses. Slab test in the box frame.
inline double ray_footprint_entry(double ox, double oy, double angle,
                                  const OrientedBox& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double rx = ox - box.center.x, ry = oy - box.center.y;
  // Ray origin and direction in the box-local frame.
  const double lx = c * rx + s * ry, ly = -s * rx + c * ry;
  const double dxw = std::cos(angle), dyw = std::sin(angle);
  const double dx = c * dxw + s * dyw, dy = -s * dxw + c * dyw;
  const double hx = 0.5 * box.length, hy = 0.5 * box.width;
  double t_enter = -1e300, t_exit = 1e300;
  for (int axis = 0; axis < 2; ++axis) {
    const double o = axis == 0 ? lx : ly;
    const double d = axis == 0 ? dx : dy;
    const double h = axis == 0 ? hx : hy;
    if (std::abs(d) < 1e-12) {
      if (std::abs(o) > h) return -1.0;
      continue;
    }
    double t0 = (-h - o) / d, t1 = (h - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_exit < 0) return -1.0;
  return std::max(t_enter, 0.0);
}

}  // namespace detail

/// Deterministically build a scene: agents as given, objects placed by
/// rejection sampling without footprint overlap. Throws if a non-overlapping
/// placement cannot be found within bounded retries or the config is invalid.
inline Scene generate_scene(const SceneParams& params,
                            const std::vector<AgentSpec>& agents,
                            std::uint64_t seed) {
  if (params.object_count < 1)
    throw std::invalid_argument("scene requires at least one object");
  if (agents.size() < 2)
    throw std::invalid_argument("scene requires at least two agents");
  int egos = 0;
  for (const auto& a : agents) egos += a.is_ego ? 1 : 0;
  if (egos != 1)
    throw std::invalid_argument("scene requires exactly one ego agent");

  Scene scene;
  scene.agents = agents;
  Rng rng(derive_seed(seed, 0));
  const auto surface = detail::sample_box_surface(params);
  const int max_tries = 200 * params.object_count;
  int tries = 0;
  for (int k = 0; k < params.object_count; ++k) {
    ObjectState obj;
    obj.object_id = static_cast<std::uint32_t>(k);
    obj.box.length = params.object_length;
    obj.box.width = params.object_width;
    obj.box.height = params.object_height;
    obj.box.confidence = 1.0;
    bool placed = false;
    while (!placed) {
      if (++tries > max_tries)
        throw std::runtime_error(
            "could not place objects without overlap; reduce object_count or "
            "grow extent");
      obj.box.center = {rng.uniform(-params.extent, params.extent),
                        rng.uniform(-params.extent, params.extent),
                        0.5 * params.object_height};
      obj.box.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      placed = true;
      for (const auto& other : scene.objects)
        if (detail::footprints_overlap(obj.box, other.box,
                                       params.placement_margin)) {
          placed = false;
          break;
        }
    }
    const double speed = rng.uniform(params.speed_min, params.speed_max);
    const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    obj.vx = speed * std::cos(heading);
    obj.vy = speed * std::sin(heading);
    obj.surface_local = surface;
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

/// Constant-velocity motion: advance every box center by velocity * dt.
inline Scene step_scene(const Scene& scene, double dt) {
  if (dt <= 0) throw std::invalid_argument("step_scene requires dt > 0");
  Scene out = scene;
  for (auto& obj : out.objects) {
    obj.box.center.x += obj.vx * dt;
    obj.box.center.y += obj.vy * dt;
  }
  out.time += dt;
  return out;
}

/// Sensing oracle with 2D ray-cast occlusion: surface points are binned by
/// bearing from the agent at angular_resolution, and a bin is owned by the
/// object whose footprint the bin's central ray enters first within
/// sensor_range; only the owner's points in that bin contribute. Returned
/// coordinates are in the agent's local frame.
inline LabeledPointCloud observe(const Scene& scene, const AgentSpec& agent,
                                 const OracleNoise& noise, std::uint64_t seed) {
  const Pose world_to_agent = pose_inverse(agent.pose);
  Rng rng(seed);

  struct Candidate {
    Vec3 world;
    std::uint32_t object_id;
    double range;
    std::int64_t bin;
  };
  std::vector<Candidate> candidates;
  const double bin_width = agent.angular_resolution;
  const std::int64_t n_bins = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::ceil(2.0 * std::numbers::pi / bin_width)));
  for (const auto& obj : scene.objects) {
    for (std::size_t k = 0; k < obj.surface_local.size(); ++k) {
      const Vec3 w = obj.surface_world(k);
      const double dx = w.x - agent.pose.x, dy = w.y - agent.pose.y;
      const double range = std::hypot(dx, dy);
      if (range > agent.sensor_range) continue;
      std::int64_t bin =
          static_cast<std::int64_t>((std::atan2(dy, dx) + std::numbers::pi) /
                                    bin_width);
      bin = std::clamp<std::int64_t>(bin, 0, n_bins - 1);
      candidates.push_back({w, obj.object_id, range, bin});
    }
  }
  // Bin ownership: first footprint the bin's central ray enters. Computed
  // lazily, only for bins that actually hold candidate points.
  std::vector<std::int64_t> owner(n_bins, -2);  // -2 unknown, -1 none
  auto bin_owner = [&](std::int64_t bin) {
    if (owner[bin] != -2) return owner[bin];
    const double angle =
        (bin + 0.5) * bin_width - std::numbers::pi;
    double best_t = agent.sensor_range;
    std::int64_t best = -1;
    for (const auto& obj : scene.objects) {
      const double t = detail::ray_footprint_entry(agent.pose.x, agent.pose.y,
                                                   angle, obj.box);
      if (t >= 0 && t < best_t) {
        best_t = t;
        best = obj.object_id;
      }
    }
    owner[bin] = best;
    return best;
  };

  LabeledPointCloud cloud;
  for (const auto& c : candidates) {
    if (bin_owner(c.bin) != static_cast<std::int64_t>(c.object_id)) continue;
    LabeledPoint pt;
    pt.position = world_to_agent.apply(c.world);
    pt.is_foreground = true;
    pt.object_id = c.object_id;
    double score = rng.uniform(0.7, 1.0);
    if (noise.score_flip_rate > 0 && rng.uniform() < noise.score_flip_rate)
      score = 1.0 - score;
    pt.semantic_score = score;
    const Vec3 true_center =
        world_to_agent.apply(scene.objects[c.object_id].box.center);
    pt.predicted_center = {true_center.x + rng.gaussian(noise.center_sigma),
                           true_center.y + rng.gaussian(noise.center_sigma),
                           true_center.z + rng.gaussian(noise.center_sigma)};
    cloud.points.push_back(pt);
  }

  if (noise.bg_clutter_rate > 0) {
    const double area =
        std::numbers::pi * agent.sensor_range * agent.sensor_range;
    const auto n_clutter =
        static_cast<std::size_t>(noise.bg_clutter_rate * area + 0.5);
    for (std::size_t k = 0; k < n_clutter; ++k) {
      const double r = agent.sensor_range * std::sqrt(rng.uniform());
      const double a = rng.uniform(-std::numbers::pi, std::numbers::pi);
      LabeledPoint pt;
      pt.position = {r * std::cos(a), r * std::sin(a), rng.uniform(0.0, 2.0)};
      pt.is_foreground = false;
      double score = rng.uniform(0.0, 0.3);
      if (noise.score_flip_rate > 0 && rng.uniform() < noise.score_flip_rate)
        score = 1.0 - score;
      pt.semantic_score = score;
      pt.predicted_center = {pt.position.x + rng.gaussian(noise.center_sigma),
                             pt.position.y + rng.gaussian(noise.center_sigma),
                             pt.position.z + rng.gaussian(noise.center_sigma)};
      cloud.points.push_back(pt);
    }
  }
  return cloud;
}

/// Debug export: one point per line "x,y,z,fg,object_id,score".
inline std::string cloud_to_csv(const LabeledPointCloud& cloud) {
  std::string out;
  char buf[160];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%d,%d,%.6f\n", p.position.x,
                  p.position.y, p.position.z, p.is_foreground ? 1 : 0,
                  p.object_id ? static_cast<int>(*p.object_id) : -1,
                  p.semantic_score);
    out += buf;
  }
  return out;
}

}  // namespace pcsim
