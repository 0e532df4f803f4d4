#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pcsim/geometry.hpp"

namespace pcsim {

/// The collaborative message unit: an object's sampled points, its voted
/// center, a semantic feature vector, and an optional proposal box.
struct PointCluster {
  std::vector<Vec3> points;
  Vec3 center;
  std::vector<float> feature;
  std::optional<OrientedBox> proposal;
  /// Per-point foreground scores, aligned with `points`.
  std::vector<double> semantic_scores;
  /// Ground-truth bookkeeping for the simulation only; never serialized and
  /// never consulted by matching, merging, or correction logic.
  std::optional<std::uint32_t> object_id;
};

/// Everything one sender transmits in a round: its packed clusters, its pose,
/// and the capture timestamp.
struct AgentMessage {
  std::vector<PointCluster> clusters;
  Pose pose;
  std::uint32_t agent_id = 0;
  double timestamp = 0.0;
};

/// Rigidly move a cluster (points, center, proposal); feature and scores are
/// frame-independent and pass through.
inline PointCluster transform_cluster(const PointCluster& c, const Pose& t) {
  PointCluster out = c;
  for (auto& p : out.points) p = t.apply(p);
  out.center = t.apply(c.center);
  if (out.proposal) *out.proposal = transform_box(*c.proposal, t);
  return out;
}

}  // namespace pcsim
