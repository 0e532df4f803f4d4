#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pcsim/cluster.hpp"
#include "pcsim/rng.hpp"
#include "pcsim/scene.hpp"

namespace pcsim {

struct ProposalNoise {
  double center_sigma = 0.0;
  double size_sigma = 0.0;
  double yaw_sigma = 0.0;
};

struct PackingParams {
  double zeta = 1.0;      // sampling rate in (0, 1]
  double lambda_s = 1.0;  // semantic-score exponent
  double lambda_d = 1.0;  // density-score exponent
  double kde_bandwidth = 0.5;
  ProposalNoise proposal_noise;
  bool half_precision = true;
  bool transmit_scores = false;  // per-point scores in the wire payload
};

struct CommReport {
  std::size_t n_values = 0;  // transmitted scalars
  std::size_t bytes = 0;     // n_values * 2 (fp16)
  double comm_log2 = 0.0;    // log2(bytes)
};

/// Oracle stand-in for the proposal heads: a cluster is positive iff its
/// voted center lies inside some ground-truth box (closed boundary, height
/// span included). Positives get that box perturbed by Gaussian noise with a
/// fresh confidence in [0.5, 1); negatives are dropped.
inline std::vector<PointCluster> generate_proposals(
    const std::vector<PointCluster>& clusters,
    const std::vector<OrientedBox>& gt_boxes, const ProposalNoise& noise,
    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PointCluster> out;
  for (const auto& cluster : clusters) {
    const OrientedBox* hit = nullptr;
    for (const auto& box : gt_boxes)
      if (box.contains(cluster.center)) {
        hit = &box;
        break;
      }
    if (!hit) continue;
    PointCluster c = cluster;
    OrientedBox prop = *hit;
    prop.center.x += rng.gaussian(noise.center_sigma);
    prop.center.y += rng.gaussian(noise.center_sigma);
    prop.center.z += rng.gaussian(noise.center_sigma);
    prop.length = std::max(0.1, prop.length + rng.gaussian(noise.size_sigma));
    prop.width = std::max(0.1, prop.width + rng.gaussian(noise.size_sigma));
    prop.height = std::max(0.1, prop.height + rng.gaussian(noise.size_sigma));
    prop.yaw = normalize_angle(prop.yaw + rng.gaussian(noise.yaw_sigma));
    prop.confidence = rng.uniform(0.5, 1.0);
    c.proposal = prop;
    out.push_back(std::move(c));
  }
  return out;
}

/// Replace a cluster's points by every foreground-candidate point of the
/// agent's cloud inside its proposal (closed box). Falls back to the original
/// points when the proposal captures none.
inline PointCluster override_points(const PointCluster& cluster,
                                    const LabeledPointCloud& cloud,
                                    double fg_threshold) {
  if (!cluster.proposal)
    throw std::invalid_argument("override_points: cluster has no proposal");
  PointCluster out = cluster;
  std::vector<Vec3> points;
  std::vector<double> scores;
  for (const auto& p : cloud.points) {
    if (p.semantic_score < fg_threshold) continue;
    if (!cluster.proposal->contains(p.position)) continue;
    points.push_back(p.position);
    scores.push_back(p.semantic_score);
  }
  if (!points.empty()) {
    out.points = std::move(points);
    out.semantic_scores = std::move(scores);
  }
  return out;
}

/// Distribution scores from a Gaussian kernel density over the cluster:
/// d_k = sum_j exp(-|p_k - p_j|^2 / (2h^2)), min-max inverted so that sparse
/// regions score high. All-equal densities map to 1 everywhere.
inline std::vector<double> kde_density_scores(const std::vector<Vec3>& points,
                                              double bandwidth) {
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("kde_density_scores: no points");
  const double inv_2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  std::vector<double> density(n, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      density[k] += std::exp(-(points[k] - points[j]).norm2() * inv_2h2);
  const auto [lo_it, hi_it] = std::minmax_element(density.begin(), density.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> scores(n, 1.0);
  if (hi - lo > 1e-12)
    for (std::size_t k = 0; k < n; ++k)
      scores[k] = 1.0 - (density[k] - lo) / (hi - lo);
  return scores;
}

/// Semantic- and distribution-guided farthest point sampling. The first pick
/// maximizes s_f + s_d; every later pick maximizes
/// s_f^lambda_s * s_d^lambda_d * d_point, where d_point is the running
/// min distance to the selected set. Ties break to the smallest index.
/// Scores are clamped to [1e-6, 1] so zero scores cannot freeze selection.
/// Returns max(1, floor(n * zeta)) unique indices in selection order.
inline std::vector<std::size_t> sd_fps(const std::vector<Vec3>& points,
                                       const std::vector<double>& s_f,
                                       const std::vector<double>& s_d,
                                       double zeta, double lambda_s,
                                       double lambda_d) {
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("sd_fps: no points");
  if (s_f.size() != n || s_d.size() != n)
    throw std::invalid_argument("sd_fps: score length mismatch");
  const std::size_t n_sample = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * zeta)));

  auto clamp_score = [](double s) { return std::clamp(s, 1e-6, 1.0); };
  std::vector<double> sf(n), sd(n);
  for (std::size_t k = 0; k < n; ++k) {
    sf[k] = clamp_score(s_f[k]);
    sd[k] = clamp_score(s_d[k]);
  }

  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> visited(n, false);
  std::vector<std::size_t> picked;
  picked.reserve(n_sample);
  for (std::size_t round = 0; round < n_sample; ++round) {
    std::size_t best = n;
    double best_val = -1.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (visited[k]) continue;
      const double val =
          round == 0
              ? sf[k] + sd[k]
              : std::pow(sf[k], lambda_s) * std::pow(sd[k], lambda_d) * dist[k];
      if (val > best_val) {
        best_val = val;
        best = k;
      }
    }
    visited[best] = true;
    picked.push_back(best);
    for (std::size_t u = 0; u < n; ++u)
      dist[u] = std::min(dist[u], (points[u] - points[best]).norm());
  }
  return picked;
}

/// Assemble the outgoing message: each cluster's points are subsampled via
/// sd_fps (scores subset alongside); centers, features, and proposals are
/// untouched. Bandwidth is controlled purely by the point count.
inline AgentMessage pack_message(const std::vector<PointCluster>& clusters,
                                 const PackingParams& params, const Pose& pose,
                                 std::uint32_t agent_id, double timestamp) {
  AgentMessage msg;
  msg.pose = pose;
  msg.agent_id = agent_id;
  msg.timestamp = timestamp;
  for (const auto& cluster : clusters) {
    PointCluster packed = cluster;
    if (params.zeta < 1.0) {
      const auto density =
          kde_density_scores(cluster.points, params.kde_bandwidth);
      const auto idx =
          sd_fps(cluster.points, cluster.semantic_scores, density, params.zeta,
                 params.lambda_s, params.lambda_d);
      packed.points.clear();
      packed.semantic_scores.clear();
      for (std::size_t k : idx) {
        packed.points.push_back(cluster.points[k]);
        packed.semantic_scores.push_back(cluster.semantic_scores[k]);
      }
    }
    msg.clusters.push_back(std::move(packed));
  }
  return msg;
}

/// Volume report for a raw transmitted-scalar count under 2-byte encoding,
/// on the log2-bytes scale.
inline CommReport comm_report_from_values(std::size_t n_values) {
  CommReport report;
  report.n_values = n_values;
  report.bytes = n_values * 2;
  report.comm_log2 =
      report.bytes > 0 ? std::log2(static_cast<double>(report.bytes)) : 0.0;
  return report;
}

/// Count transmitted scalars of a full message and express the volume on the
/// log2-bytes scale.
inline CommReport comm_volume(const AgentMessage& msg,
                              bool transmit_scores = false) {
  CommReport report;
  for (const auto& c : msg.clusters) {
    report.n_values += 3 * c.points.size();  // coordinates
    report.n_values += 3;                    // center
    report.n_values += c.feature.size();
    report.n_values += 8;  // proposal box
    if (transmit_scores) report.n_values += c.points.size();
  }
  return comm_report_from_values(report.n_values);
}

}  // namespace pcsim
