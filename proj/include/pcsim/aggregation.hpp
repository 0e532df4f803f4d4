#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pcsim/cluster.hpp"
#include "pcsim/encoder.hpp"

namespace pcsim {

struct AggregationParams {
  double epsilon_agg = 0.6;
};

/// A cluster tagged with the agent it came from (post transform, ego frame).
struct TaggedCluster {
  std::uint32_t agent_id = 0;
  PointCluster cluster;
};

struct MatchResult {
  std::vector<TaggedCluster> unique;
  std::vector<std::vector<TaggedCluster>> shared;  // each tuple size >= 2
};

/// Match clusters across agents: pairwise center distance < epsilon_agg
/// between clusters of different agents, components via union-find. Within a
/// component at most one cluster per agent survives into the tuple -- the one
/// nearest the component centroid; surplus same-agent members fall back to
/// unique.
inline MatchResult match_clusters(const std::vector<TaggedCluster>& clusters,
                                  double epsilon_agg,
                                  Telemetry* telemetry = nullptr) {
  const std::size_t n = clusters.size();
  UnionFind uf(n);
  const double eps2 = epsilon_agg * epsilon_agg;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (clusters[i].agent_id == clusters[j].agent_id) continue;
      if (telemetry) ++telemetry->distance_evals;
      if ((clusters[i].cluster.center - clusters[j].cluster.center).norm2() <
          eps2)
        uf.unite(i, j);
    }

  std::vector<std::vector<std::size_t>> components;
  {
    std::vector<std::size_t> slot(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = uf.find(i);
      if (slot[r] == n) {
        slot[r] = components.size();
        components.emplace_back();
      }
      components[slot[r]].push_back(i);
    }
  }

  MatchResult result;
  for (const auto& comp : components) {
    if (comp.size() == 1) {
      result.unique.push_back(clusters[comp[0]]);
      continue;
    }
    Vec3 centroid;
    for (std::size_t i : comp) centroid += clusters[i].cluster.center;
    centroid = centroid * (1.0 / static_cast<double>(comp.size()));

    // Best member per agent; surplus members demote to unique.
    std::vector<std::size_t> winners;
    for (std::size_t i : comp) {
      const std::uint32_t agent = clusters[i].agent_id;
      auto it = std::find_if(winners.begin(), winners.end(), [&](std::size_t w) {
        return clusters[w].agent_id == agent;
      });
      if (it == winners.end()) {
        winners.push_back(i);
      } else if ((clusters[i].cluster.center - centroid).norm2() <
                 (clusters[*it].cluster.center - centroid).norm2()) {
        result.unique.push_back(clusters[*it]);
        *it = i;
      } else {
        result.unique.push_back(clusters[i]);
      }
    }
    if (winners.size() >= 2) {
      std::vector<TaggedCluster> tuple;
      for (std::size_t i : winners) tuple.push_back(clusters[i]);
      result.shared.push_back(std::move(tuple));
    } else {
      for (std::size_t i : winners) result.unique.push_back(clusters[i]);
    }
  }
  return result;
}

/// Merge a matched tuple: points are the multiset union, center and feature
/// are arithmetic means, and the proposal is the member box with the highest
/// confidence (ties to the lower agent id).
inline PointCluster merge_tuple(const std::vector<TaggedCluster>& tuple,
                                Telemetry* telemetry = nullptr) {
  if (tuple.size() < 2)
    throw std::invalid_argument("merge_tuple: tuple needs >= 2 members");
  PointCluster out;
  Vec3 center_sum;
  std::vector<double> feature_sum(tuple[0].cluster.feature.size(), 0.0);
  const TaggedCluster* best = &tuple[0];
  for (const auto& member : tuple) {
    const PointCluster& c = member.cluster;
    out.points.insert(out.points.end(), c.points.begin(), c.points.end());
    out.semantic_scores.insert(out.semantic_scores.end(),
                               c.semantic_scores.begin(),
                               c.semantic_scores.end());
    center_sum += c.center;
    if (c.feature.size() != feature_sum.size())
      throw std::invalid_argument("merge_tuple: feature dim mismatch");
    for (std::size_t k = 0; k < feature_sum.size(); ++k)
      feature_sum[k] += c.feature[k];
    if (telemetry) telemetry->merge_ops += c.points.size();
    if (!out.object_id && c.object_id) out.object_id = c.object_id;

    const double conf = c.proposal ? c.proposal->confidence : -1.0;
    const double best_conf =
        best->cluster.proposal ? best->cluster.proposal->confidence : -1.0;
    if (conf > best_conf ||
        (conf == best_conf && member.agent_id < best->agent_id))
      best = &member;
  }
  const double inv = 1.0 / static_cast<double>(tuple.size());
  out.center = center_sum * inv;
  out.feature.resize(feature_sum.size());
  for (std::size_t k = 0; k < feature_sum.size(); ++k)
    out.feature[k] = static_cast<float>(feature_sum[k] * inv);
  out.proposal = best->cluster.proposal;
  return out;
}

/// Geometric refinement of a merged proposal: keep yaw and confidence,
/// recompute each extent as the tight bound of the merged points in the box's
/// local frame, floored at the original size per dimension (the box only
/// grows), recentering grown axes.
inline OrientedBox refit_box(const PointCluster& merged) {
  if (!merged.proposal)
    throw std::invalid_argument("refit_box: cluster has no proposal");
  const OrientedBox& box = *merged.proposal;
  if (merged.points.empty()) return box;

  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  for (const auto& p : merged.points) {
    const double dx = p.x - box.center.x, dy = p.y - box.center.y;
    const double local[3] = {c * dx + s * dy, -s * dx + c * dy,
                             p.z - box.center.z};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], local[a]);
      hi[a] = std::max(hi[a], local[a]);
    }
  }
  const double orig[3] = {box.length, box.width, box.height};
  double out_len[3], out_mid[3];
  for (int a = 0; a < 3; ++a) {
    const double span = hi[a] - lo[a];
    if (span > orig[a]) {
      out_len[a] = span;
      out_mid[a] = 0.5 * (lo[a] + hi[a]);
    } else {
      out_len[a] = orig[a];
      out_mid[a] = 0.0;
    }
  }
  OrientedBox out = box;
  out.length = out_len[0];
  out.width = out_len[1];
  out.height = out_len[2];
  out.center = {box.center.x + c * out_mid[0] - s * out_mid[1],
                box.center.y + s * out_mid[0] + c * out_mid[1],
                box.center.z + out_mid[2]};
  return out;
}

/// Full receiver-side fusion: transform received clusters into the ego frame,
/// match, merge tuples, and refit merged proposals. Output size is
/// |unique| + |shared|, the number of potential objects in view.
inline std::vector<PointCluster> aggregate(
    const AgentMessage& ego_msg, const std::vector<AgentMessage>& received,
    const AggregationParams& params, Telemetry* telemetry = nullptr) {
  std::vector<TaggedCluster> all;
  for (const auto& c : ego_msg.clusters)
    all.push_back({ego_msg.agent_id, c});
  for (const auto& msg : received) {
    const Pose to_ego = relative_pose(ego_msg.pose, msg.pose);
    for (const auto& c : msg.clusters)
      all.push_back({msg.agent_id, transform_cluster(c, to_ego)});
  }

  MatchResult match = match_clusters(all, params.epsilon_agg, telemetry);
  std::vector<PointCluster> out;
  for (auto& u : match.unique) out.push_back(std::move(u.cluster));
  for (const auto& tuple : match.shared) {
    PointCluster merged = merge_tuple(tuple, telemetry);
    merged.proposal = refit_box(merged);
    out.push_back(std::move(merged));
  }
  return out;
}

/// Detections export: "frame,agent,x,y,z,h,w,l,yaw,confidence" rows.
inline std::string detections_to_csv(const std::vector<PointCluster>& dets,
                                     int frame, std::uint32_t agent) {
  std::string out;
  char buf[220];
  for (const auto& d : dets) {
    if (!d.proposal) continue;
    const OrientedBox& b = *d.proposal;
    std::snprintf(buf, sizeof(buf),
                  "%d,%u,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", frame,
                  agent, b.center.x, b.center.y, b.center.z, b.height, b.width,
                  b.length, b.yaw, b.confidence);
    out += buf;
  }
  return out;
}

}  // namespace pcsim
