#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "pcsim/cluster.hpp"
#include "pcsim/rng.hpp"
#include "pcsim/scene.hpp"

namespace pcsim {

struct ClusteringParams {
  double epsilon_point = 0.6;  // center-vote grouping radius
  double fg_threshold = 0.5;
  int min_cluster_points = 3;
};

/// Union-find with union by rank; equal ranks resolve to the smaller index so
/// partitions are reproducible.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    if (rank_[a] == rank_[b]) {
      if (b < a) std::swap(a, b);
      ++rank_[a];
    }
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

/// Operation counters used by the complexity tests.
struct Telemetry {
  std::size_t distance_evals = 0;
  std::size_t merge_ops = 0;
};

namespace detail {

struct GridKey {
  std::int64_t x, y, z;
  bool operator==(const GridKey&) const = default;
};

struct GridKeyHash {
  std::size_t operator()(const GridKey& k) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

/// Group foreground points into clusters: two points share a cluster iff
/// their predicted centers are within epsilon_point under transitive closure.
/// Neighbor candidates come from a uniform grid of cell size epsilon_point,
/// so grouping is subquadratic on spread-out inputs. Cluster centers are the
/// mean of member center votes; clusters below min_cluster_points are
/// dropped. Output clusters carry no features or proposals yet.
inline std::vector<PointCluster> group_clusters(const LabeledPointCloud& cloud,
                                                const ClusteringParams& params,
                                                Telemetry* telemetry = nullptr) {
  std::vector<std::size_t> fg;  // indices into cloud.points
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    if (cloud.points[i].semantic_score >= params.fg_threshold) fg.push_back(i);
  const std::size_t n = fg.size();

  const double eps = params.epsilon_point;
  const double eps2 = eps * eps;
  std::unordered_map<detail::GridKey, std::vector<std::size_t>,
                     detail::GridKeyHash>
      grid;
  auto key_of = [&](const Vec3& p) {
    return detail::GridKey{static_cast<std::int64_t>(std::floor(p.x / eps)),
                           static_cast<std::int64_t>(std::floor(p.y / eps)),
                           static_cast<std::int64_t>(std::floor(p.z / eps))};
  };
  for (std::size_t k = 0; k < n; ++k)
    grid[key_of(cloud.points[fg[k]].predicted_center)].push_back(k);

  UnionFind uf(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3& c = cloud.points[fg[k]].predicted_center;
    const detail::GridKey base = key_of(c);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({base.x + dx, base.y + dy, base.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second) {
            if (j <= k) continue;
            if (telemetry) ++telemetry->distance_evals;
            if ((c - cloud.points[fg[j]].predicted_center).norm2() <= eps2)
              uf.unite(k, j);
          }
        }
  }

  // Collect components in order of their smallest member index.
  std::unordered_map<std::size_t, std::size_t> root_to_slot;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = uf.find(k);
    auto [it, inserted] = root_to_slot.try_emplace(r, members.size());
    if (inserted) members.emplace_back();
    members[it->second].push_back(k);
  }

  std::vector<PointCluster> clusters;
  for (const auto& m : members) {
    if (m.size() < static_cast<std::size_t>(params.min_cluster_points))
      continue;
    PointCluster c;
    Vec3 center_sum;
    for (std::size_t k : m) {
      const LabeledPoint& p = cloud.points[fg[k]];
      c.points.push_back(p.position);
      c.semantic_scores.push_back(p.semantic_score);
      center_sum += p.predicted_center;
      if (p.object_id && !c.object_id) c.object_id = p.object_id;
    }
    c.center = center_sum * (1.0 / static_cast<double>(m.size()));
    clusters.push_back(std::move(c));
  }
  return clusters;
}

/// Fixed seeded weights for the stacked point-feature layers. Untrained: the
/// pipeline only relies on the transform being deterministic and shared
/// across agents.
struct SirWeights {
  struct Layer {
    Eigen::MatrixXd w1;  // (D+3) x D
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // (2D) x D
    Eigen::VectorXd b2;
  };
  std::vector<Layer> layers;
  Eigen::MatrixXd proj;  // (L1*D) x D
  Eigen::VectorXd proj_b;
  int feature_dim = 0;

  static SirWeights make(int d, int n_layers, std::uint64_t seed) {
    SirWeights w;
    w.feature_dim = d;
    Rng rng(seed);
    auto fill = [&](Eigen::MatrixXd& m, int rows, int cols) {
      m.resize(rows, cols);
      const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          m(i, j) = rng.uniform(-scale, scale);
    };
    auto fill_v = [&](Eigen::VectorXd& v, int rows) {
      v.resize(rows);
      for (int i = 0; i < rows; ++i) v(i) = rng.uniform(-0.1, 0.1);
    };
    for (int l = 0; l < n_layers; ++l) {
      SirWeights::Layer layer;
      fill(layer.w1, d + 3, d);
      fill_v(layer.b1, d);
      fill(layer.w2, 2 * d, d);
      fill_v(layer.b2, d);
      w.layers.push_back(std::move(layer));
    }
    fill(w.proj, n_layers * d, d);
    fill_v(w.proj_b, d);
    return w;
  }
};

/// One point-feature layer: per-point MLP over [F; P - C], channel-wise max
/// pool, then an MLP over [F~; broadcast(maxpool(F~))]. MLP = affine + ReLU.
inline Eigen::MatrixXd sir_layer(const std::vector<Vec3>& points,
                                 const Vec3& center,
                                 const Eigen::MatrixXd& point_feats,
                                 const SirWeights::Layer& layer) {
  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index d = point_feats.cols();
  if (n < 1 || point_feats.rows() != n)
    throw std::invalid_argument("sir_layer: point/feature shape mismatch");
  if (layer.w1.rows() != d + 3 || layer.w1.cols() != d)
    throw std::invalid_argument("sir_layer: weight shape mismatch");

  Eigen::MatrixXd input(n, d + 3);
  input.leftCols(d) = point_feats;
  for (Eigen::Index i = 0; i < n; ++i) {
    input(i, d) = points[i].x - center.x;
    input(i, d + 1) = points[i].y - center.y;
    input(i, d + 2) = points[i].z - center.z;
  }
  Eigen::MatrixXd hidden =
      ((input * layer.w1).rowwise() + layer.b1.transpose()).cwiseMax(0.0);
  const Eigen::RowVectorXd pooled = hidden.colwise().maxCoeff();
  Eigen::MatrixXd input2(n, 2 * d);
  input2.leftCols(d) = hidden;
  input2.rightCols(d) = pooled.replicate(n, 1);
  return ((input2 * layer.w2).rowwise() + layer.b2.transpose()).cwiseMax(0.0);
}

/// Cluster feature: zero initial point features run through the stacked
/// layers; per-layer outputs concatenated channel-wise, linearly projected to
/// D, and max-pooled over points.
inline std::vector<float> extract_cluster_feature(const PointCluster& cluster,
                                                  const SirWeights& weights) {
  const auto n = static_cast<Eigen::Index>(cluster.points.size());
  if (n < 1)
    throw std::invalid_argument("extract_cluster_feature: empty cluster");
  const int d = weights.feature_dim;
  const auto l1 = static_cast<Eigen::Index>(weights.layers.size());

  Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(n, d);
  Eigen::MatrixXd concat(n, l1 * d);
  for (Eigen::Index l = 0; l < l1; ++l) {
    feats = sir_layer(cluster.points, cluster.center, feats, weights.layers[l]);
    concat.middleCols(l * d, d) = feats;
  }
  Eigen::MatrixXd projected =
      (concat * weights.proj).rowwise() + weights.proj_b.transpose();
  const Eigen::RowVectorXd pooled = projected.colwise().maxCoeff();
  std::vector<float> out(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) out[i] = static_cast<float>(pooled(i));
  return out;
}

}  // namespace pcsim
