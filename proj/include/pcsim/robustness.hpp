#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "pcsim/aggregation.hpp"
#include "pcsim/cluster.hpp"

namespace pcsim {

/// Agent poses and object positions tied together by observed cluster
/// centers. All poses live in the ego frame; the ego vertex is the gauge fix
/// and never moves.
struct PoseGraph {
  struct Edge {
    std::uint32_t agent_id = 0;
    std::size_t object_index = 0;
    double cx = 0.0, cy = 0.0;  // observed center, sender-local frame
  };
  std::uint32_t ego_id = 0;
  std::map<std::uint32_t, Pose> agent_vertices;        // ego-frame poses
  std::vector<std::array<double, 2>> object_vertices;  // ego-frame positions
  std::vector<Edge> edges;
};

/// Build the graph from one communication round: clusters are matched across
/// agents with epsilon_pose (same component logic as aggregation); every
/// match component becomes an object vertex initialized at the mean of its
/// member centers in the (noisy) ego frame, and each member contributes an
/// edge carrying its center in its own sender-local frame.
inline PoseGraph build_pose_graph(const AgentMessage& ego_msg,
                                  const std::vector<AgentMessage>& received,
                                  double epsilon_pose) {
  PoseGraph graph;
  graph.ego_id = ego_msg.agent_id;
  graph.agent_vertices[ego_msg.agent_id] = Pose::identity();

  struct Item {
    std::uint32_t agent_id;
    Vec3 local_center;
  };
  std::vector<TaggedCluster> tagged;
  std::vector<Item> items;
  for (const auto& c : ego_msg.clusters) {
    tagged.push_back({ego_msg.agent_id, c});
    items.push_back({ego_msg.agent_id, c.center});
  }
  for (const auto& msg : received) {
    const Pose to_ego = relative_pose(ego_msg.pose, msg.pose);
    graph.agent_vertices[msg.agent_id] = to_ego;
    for (const auto& c : msg.clusters) {
      tagged.push_back({msg.agent_id, transform_cluster(c, to_ego)});
      items.push_back({msg.agent_id, c.center});
    }
  }

  // Connected components over the match graph, keyed back to input indices.
  const std::size_t n = tagged.size();
  UnionFind uf(n);
  const double eps2 = epsilon_pose * epsilon_pose;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (tagged[i].agent_id == tagged[j].agent_id) continue;
      if ((tagged[i].cluster.center - tagged[j].cluster.center).norm2() < eps2)
        uf.unite(i, j);
    }
  std::vector<std::size_t> slot(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = uf.find(i);
    if (slot[r] == n) {
      slot[r] = graph.object_vertices.size();
      graph.object_vertices.push_back({0.0, 0.0});
    }
    const std::size_t s = slot[r];
    graph.edges.push_back(
        {items[i].agent_id, s, items[i].local_center.x, items[i].local_center.y});
  }
  // Initialize object vertices at the mean of member centers (ego frame).
  std::vector<std::size_t> counts(graph.object_vertices.size(), 0);
  std::vector<std::array<double, 2>> sums(graph.object_vertices.size(),
                                          {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = slot[uf.find(i)];
    sums[s][0] += tagged[i].cluster.center.x;
    sums[s][1] += tagged[i].cluster.center.y;
    ++counts[s];
  }
  for (std::size_t s = 0; s < graph.object_vertices.size(); ++s)
    graph.object_vertices[s] = {sums[s][0] / counts[s], sums[s][1] / counts[s]};
  return graph;
}

struct PoseOptimizationResult {
  std::map<std::uint32_t, Pose> agent_poses;  // ego-frame, ego included
  std::vector<std::array<double, 2>> object_positions;
  bool degenerate = false;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
};

/// Minimize the summed squared pose-consistency error over non-ego agent
/// poses (x, y, yaw) and object positions (x, y) with damped Gauss-Newton
/// (Levenberg damping 1e-3, x10 on a rejected step, /10 on success). The
/// residual of an edge is the object position mapped into the agent frame
/// minus the agent's observed center. Under-constrained graphs (rank
/// deficient normal equations) return the initial poses with the degeneracy
/// flag set.
inline PoseOptimizationResult optimize_poses(const PoseGraph& graph) {
  PoseOptimizationResult result;
  result.agent_poses = graph.agent_vertices;
  result.object_positions = graph.object_vertices;

  std::vector<std::uint32_t> free_agents;
  for (const auto& [id, pose] : graph.agent_vertices)
    if (id != graph.ego_id) free_agents.push_back(id);
  const std::size_t n_obj = graph.object_vertices.size();
  const std::size_t dim = 3 * free_agents.size() + 2 * n_obj;
  if (dim == 0 || graph.edges.empty()) return result;  // nothing to optimize

  std::map<std::uint32_t, std::size_t> agent_offset;
  for (std::size_t k = 0; k < free_agents.size(); ++k)
    agent_offset[free_agents[k]] = 3 * k;
  const std::size_t obj_base = 3 * free_agents.size();

  Eigen::VectorXd x(dim);
  for (std::size_t k = 0; k < free_agents.size(); ++k) {
    const Pose& p = graph.agent_vertices.at(free_agents[k]);
    x(3 * k) = p.x;
    x(3 * k + 1) = p.y;
    x(3 * k + 2) = p.yaw;
  }
  for (std::size_t s = 0; s < n_obj; ++s) {
    x(obj_base + 2 * s) = graph.object_vertices[s][0];
    x(obj_base + 2 * s + 1) = graph.object_vertices[s][1];
  }

  const std::size_t n_res = 2 * graph.edges.size();
  auto linearize = [&](const Eigen::VectorXd& v, Eigen::VectorXd& r,
                       Eigen::MatrixXd* jac) {
    r.resize(n_res);
    if (jac) jac->setZero(n_res, dim);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const auto& edge = graph.edges[e];
      double ax = 0, ay = 0, ayaw = 0;
      std::size_t aoff = dim;  // dim == fixed (ego)
      if (edge.agent_id != graph.ego_id) {
        aoff = agent_offset.at(edge.agent_id);
        ax = v(aoff);
        ay = v(aoff + 1);
        ayaw = v(aoff + 2);
      }
      const double ox = v(obj_base + 2 * edge.object_index);
      const double oy = v(obj_base + 2 * edge.object_index + 1);
      const double c = std::cos(ayaw), s = std::sin(ayaw);
      const double dx = ox - ax, dy = oy - ay;
      // e = R(yaw)^T (chi - t) - C_local
      r(2 * e) = c * dx + s * dy - edge.cx;
      r(2 * e + 1) = -s * dx + c * dy - edge.cy;
      if (!jac) continue;
      Eigen::MatrixXd& J = *jac;
      // d e / d chi = R^T
      J(2 * e, obj_base + 2 * edge.object_index) = c;
      J(2 * e, obj_base + 2 * edge.object_index + 1) = s;
      J(2 * e + 1, obj_base + 2 * edge.object_index) = -s;
      J(2 * e + 1, obj_base + 2 * edge.object_index + 1) = c;
      if (aoff < dim) {
        J(2 * e, aoff) = -c;
        J(2 * e, aoff + 1) = -s;
        J(2 * e + 1, aoff) = s;
        J(2 * e + 1, aoff + 1) = -c;
        // d e / d yaw = dR^T/dyaw (chi - t)
        J(2 * e, aoff + 2) = -s * dx + c * dy;
        J(2 * e + 1, aoff + 2) = -c * dx - s * dy;
      }
    }
  };

  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  linearize(x, r, &J);
  result.initial_cost = r.squaredNorm();

  {
    // Gauge / observability check on the undamped normal equations.
    Eigen::MatrixXd H = J.transpose() * J;
    if (n_res < dim) {
      result.degenerate = true;
      result.final_cost = result.initial_cost;
      return result;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
    lu.setThreshold(1e-9);
    if (static_cast<std::size_t>(lu.rank()) < dim) {
      result.degenerate = true;
      result.final_cost = result.initial_cost;
      return result;
    }
  }

  double cost = result.initial_cost;
  double damping = 1e-3;
  int iter = 0;
  for (; iter < 50; ++iter) {
    linearize(x, r, &J);
    cost = r.squaredNorm();
    const Eigen::MatrixXd H = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool stepped = false;
    for (int attempt = 0; attempt < 10 && !stepped; ++attempt) {
      Eigen::MatrixXd damped = H;
      damped.diagonal().array() += damping;
      const Eigen::VectorXd delta = damped.ldlt().solve(-g);
      Eigen::VectorXd x_try = x + delta;
      Eigen::VectorXd r_try;
      linearize(x_try, r_try, nullptr);
      if (r_try.squaredNorm() < cost) {
        x = std::move(x_try);
        damping = std::max(damping / 10.0, 1e-12);
        stepped = true;
        const double new_cost = r_try.squaredNorm();
        if (cost - new_cost < 1e-6) {
          cost = new_cost;
          ++iter;
          goto converged;
        }
        cost = new_cost;
      } else {
        damping *= 10.0;
      }
    }
    if (!stepped) break;  // damping exhausted, already at a minimum
  }
converged:
  result.iterations = iter;
  result.final_cost = cost;
  for (std::size_t k = 0; k < free_agents.size(); ++k)
    result.agent_poses[free_agents[k]] =
        Pose(x(3 * k), x(3 * k + 1),
             graph.agent_vertices.at(free_agents[k]).z, x(3 * k + 2));
  for (std::size_t s = 0; s < n_obj; ++s)
    result.object_positions[s] = {x(obj_base + 2 * s), x(obj_base + 2 * s + 1)};
  return result;
}

struct LatencyParams {
  double epsilon_lo = 0.5;  // excludes stationary targets
  double epsilon_hi = 2.0;
};

/// Greedy nearest-neighbor temporal pairing over center distances inside
/// [epsilon_lo, epsilon_hi]; each cluster pairs at most once, pairs taken in
/// ascending distance order.
inline std::vector<std::pair<std::size_t, std::size_t>> match_temporal(
    const std::vector<PointCluster>& prev_clusters,
    const std::vector<PointCluster>& cur_clusters, const LatencyParams& params) {
  struct Candidate {
    double dist;
    std::size_t prev, cur;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < prev_clusters.size(); ++i)
    for (std::size_t j = 0; j < cur_clusters.size(); ++j) {
      const double d =
          (prev_clusters[i].center - cur_clusters[j].center).norm();
      if (d >= params.epsilon_lo && d <= params.epsilon_hi)
        candidates.push_back({d, i, j});
    }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a,
                                                     const Candidate& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.prev != b.prev) return a.prev < b.prev;
    return a.cur < b.cur;
  });
  std::vector<bool> prev_used(prev_clusters.size(), false);
  std::vector<bool> cur_used(cur_clusters.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& c : candidates) {
    if (prev_used[c.prev] || cur_used[c.cur]) continue;
    prev_used[c.prev] = true;
    cur_used[c.cur] = true;
    pairs.emplace_back(c.prev, c.cur);
  }
  return pairs;
}

struct LatencyCompensationResult {
  AgentMessage message;
  bool applied = false;
  std::size_t compensated_clusters = 0;
};

/// Advance stale clusters to `now` under constant velocity: per temporal
/// match, velocity = center displacement / time gap, and the whole cluster
/// translates by velocity * (now - message timestamp). Unmatched clusters
/// (stationary or ambiguous) pass through unchanged, as does everything when
/// no usable history exists.
inline LatencyCompensationResult compensate_latency(
    const std::optional<AgentMessage>& history, const AgentMessage& delivered,
    double now, const LatencyParams& params) {
  LatencyCompensationResult result;
  result.message = delivered;
  if (!history) return result;
  const double gap = delivered.timestamp - history->timestamp;
  if (gap <= 0) return result;  // clock went backwards; leave untouched
  const double tau = now - delivered.timestamp;
  result.applied = true;
  if (tau <= 0) return result;

  const auto pairs =
      match_temporal(history->clusters, delivered.clusters, params);
  for (const auto& [pi, ci] : pairs) {
    const Vec3 velocity =
        (delivered.clusters[ci].center - history->clusters[pi].center) *
        (1.0 / gap);
    const Vec3 offset = velocity * tau;
    PointCluster& c = result.message.clusters[ci];
    for (auto& p : c.points) p += offset;
    c.center += offset;
    if (c.proposal) c.proposal->center += offset;
    ++result.compensated_clusters;
  }
  return result;
}

}  // namespace pcsim
