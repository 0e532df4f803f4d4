#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "pcsim/packing.hpp"

using namespace pcsim;

namespace {

PointCluster cluster_at(const Vec3& center, std::vector<Vec3> points) {
  PointCluster c;
  c.center = center;
  c.points = std::move(points);
  c.semantic_scores.assign(c.points.size(), 0.9);
  return c;
}

// Vanilla farthest point sampling, seeded at index 0, ties to smallest index.
std::vector<std::size_t> naive_fps(const std::vector<Vec3>& pts,
                                   std::size_t n_sample) {
  std::vector<std::size_t> picked = {0};
  std::vector<double> dist(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    dist[i] = (pts[i] - pts[0]).norm();
  while (picked.size() < n_sample) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (dist[i] > dist[best]) best = i;
    picked.push_back(best);
    for (std::size_t i = 0; i < pts.size(); ++i)
      dist[i] = std::min(dist[i], (pts[i] - pts[best]).norm());
  }
  return picked;
}

}  // namespace

TEST_CASE("generate_proposals keeps exactly the clusters inside a box") {
  OrientedBox gt{{10, 0, 0.8}, 1.6, 2.0, 4.5, 0.0, 1.0};
  std::vector<PointCluster> clusters = {
      cluster_at({10, 0, 0.8}, {{10, 0, 0.8}}),        // inside
      cluster_at({12.25, 0, 0.8}, {{12.25, 0, 0.8}}),  // exactly on +x face
      cluster_at({20, 0, 0.8}, {{20, 0, 0.8}}),        // outside
  };
  const auto out = generate_proposals(clusters, {gt}, ProposalNoise{}, 1);
  REQUIRE(out.size() == 2);  // closed boundary: the face point counts
  for (const auto& c : out) {
    REQUIRE(c.proposal.has_value());
    // Zero noise: the proposal is the ground-truth box itself.
    CHECK(c.proposal->center.x == gt.center.x);
    CHECK(c.proposal->length == gt.length);
    CHECK(c.proposal->yaw == gt.yaw);
    CHECK(c.proposal->confidence >= 0.5);
    CHECK(c.proposal->confidence < 1.0);
  }
  // Same seed, same confidences.
  const auto again = generate_proposals(clusters, {gt}, ProposalNoise{}, 1);
  CHECK(again[0].proposal->confidence == out[0].proposal->confidence);

  ProposalNoise noise;
  noise.center_sigma = 0.3;
  noise.yaw_sigma = 0.1;
  const auto noisy = generate_proposals(clusters, {gt}, ProposalNoise{noise}, 2);
  CHECK(noisy[0].proposal->center.x != gt.center.x);
  CHECK(noisy[0].proposal->yaw != gt.yaw);
}

TEST_CASE("override_points swaps in the foreground points inside the proposal") {
  LabeledPointCloud cloud;
  auto add = [&](Vec3 p, double score) {
    LabeledPoint lp;
    lp.position = p;
    lp.semantic_score = score;
    cloud.points.push_back(lp);
  };
  add({0, 0, 0.5}, 0.9);
  add({1, 0, 0.5}, 0.8);
  add({0, 0, 0.5}, 0.3);   // below threshold
  add({50, 0, 0.5}, 0.9);  // outside the proposal

  PointCluster c = cluster_at({0, 0, 0.5}, {{9, 9, 9}});
  CHECK_THROWS_AS(override_points(c, cloud, 0.5), std::invalid_argument);

  c.proposal = OrientedBox{{0, 0, 0.8}, 1.6, 2.0, 4.5, 0.0, 0.9};
  const auto out = override_points(c, cloud, 0.5);
  REQUIRE(out.points.size() == 2);
  CHECK(out.points[0].x == 0);
  CHECK(out.points[1].x == 1);
  CHECK(out.semantic_scores == std::vector<double>{0.9, 0.8});
  CHECK(out.center.x == c.center.x);  // center untouched

  // Proposal that captures nothing keeps the original points.
  PointCluster far = cluster_at({0, 0, 0.5}, {{9, 9, 9}});
  far.proposal = OrientedBox{{500, 0, 0.8}, 1.6, 2.0, 4.5, 0.0, 0.9};
  const auto kept = override_points(far, cloud, 0.5);
  CHECK(kept.points.size() == 1);
  CHECK(kept.points[0].x == 9);
}

TEST_CASE("kde density scores") {
  CHECK_THROWS_AS(kde_density_scores({}, 0.5), std::invalid_argument);
  // Symmetric configurations have equal densities -> all scores 1.
  CHECK(kde_density_scores({{0, 0, 0}}, 0.5) == std::vector<double>{1.0});
  CHECK(kde_density_scores({{0, 0, 0}, {1, 0, 0}}, 0.5) ==
        std::vector<double>{1.0, 1.0});

  // Three collinear points: the middle one is densest, so it scores 0 and the
  // symmetric ends score 1. Verify against the closed-form densities.
  const double h = 0.7;
  const auto s = kde_density_scores({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, h);
  const double e1 = std::exp(-1.0 / (2 * h * h));
  const double e4 = std::exp(-4.0 / (2 * h * h));
  const double d_end = 1 + e1 + e4, d_mid = 1 + 2 * e1;
  REQUIRE(d_mid > d_end);
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] == doctest::Approx(1.0 - (d_mid - d_end) / (d_mid - d_end)));
  CHECK(s[1] == doctest::Approx(0.0));
  CHECK(s[2] == doctest::Approx(1.0));
}

TEST_CASE("sd_fps input validation and sample-count arithmetic") {
  CHECK_THROWS_AS(sd_fps({}, {}, {}, 0.5, 1, 1), std::invalid_argument);
  std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  std::vector<double> s(3, 0.5);
  CHECK_THROWS_AS(sd_fps(pts, {0.5, 0.5}, s, 0.5, 1, 1),
                  std::invalid_argument);
  // floor(3 * 0.5) = 1; floor never reaches 0.
  CHECK(sd_fps(pts, s, s, 0.5, 1, 1).size() == 1);
  CHECK(sd_fps(pts, s, s, 1.0 / 128, 1, 1).size() == 1);
  CHECK(sd_fps(pts, s, s, 1.0, 1, 1).size() == 3);
  // Picked indices are unique.
  const auto all = sd_fps(pts, s, s, 1.0, 1, 1);
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 3);
}

TEST_CASE("sd_fps worked example") {
  // Points at x = 0, 1, 2, 10 with uniform scores and zeta = 1/2: the first
  // pick ties to index 0, the second is the farthest point, x = 10.
  std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {10, 0, 0}};
  std::vector<double> s(4, 0.5);
  CHECK(sd_fps(pts, s, s, 0.5, 1, 1) == std::vector<std::size_t>{0, 3});
  // With a dominant semantic score at index 2, it is picked first instead.
  std::vector<double> sf = {0.5, 0.5, 1.0, 0.5};
  const auto picked = sd_fps(pts, sf, s, 0.5, 1, 1);
  CHECK(picked[0] == 2);
}

TEST_CASE("sd_fps reduces to vanilla FPS when the exponents are zero") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + static_cast<std::size_t>(rng.uniform(0, 60));
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < n; ++i)
      pts.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10),
                     rng.uniform(-1, 1)});
    std::vector<double> uniform(n, 0.7);
    const double zeta = rng.uniform(0.2, 1.0);
    const auto got = sd_fps(pts, uniform, uniform, zeta, 0.0, 0.0);
    CHECK(got == naive_fps(pts, got.size()));
  }
}

TEST_CASE("sd_fps selections are prefix-stable across zeta") {
  Rng rng(43);
  std::vector<Vec3> pts;
  std::vector<double> sf, sd;
  for (int i = 0; i < 64; ++i) {
    pts.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), 0});
    sf.push_back(rng.uniform(0.5, 1.0));
    sd.push_back(rng.uniform(0.0, 1.0));
  }
  const auto full = sd_fps(pts, sf, sd, 1.0, 1.0, 1.0);
  for (double zeta : {0.5, 0.25, 0.125}) {
    const auto part = sd_fps(pts, sf, sd, zeta, 1.0, 1.0);
    REQUIRE(part.size() == static_cast<std::size_t>(64 * zeta));
    for (std::size_t i = 0; i < part.size(); ++i) CHECK(part[i] == full[i]);
  }
}

TEST_CASE("zero scores cannot freeze selection") {
  std::vector<Vec3> pts = {{0, 0, 0}, {5, 0, 0}, {6, 0, 0}};
  std::vector<double> zeros(3, 0.0);
  const auto picked = sd_fps(pts, zeros, zeros, 1.0, 1.0, 1.0);
  CHECK(std::set<std::size_t>(picked.begin(), picked.end()).size() == 3);
}

TEST_CASE("pack_message subsamples per cluster") {
  std::vector<PointCluster> clusters;
  PointCluster a = cluster_at({0, 0, 0}, {});
  for (int i = 0; i < 10; ++i) a.points.push_back({0.3 * i, 0, 0});
  a.semantic_scores.assign(10, 0.9);
  a.semantic_scores[7] = 0.42;  // tag one score to track alignment
  a.feature = {1.0f, 2.0f};
  clusters.push_back(a);
  PointCluster b = cluster_at({5, 0, 0}, {{5, 0, 0}, {5.1, 0, 0}, {5.2, 0, 0}});
  clusters.push_back(b);

  PackingParams params;
  params.zeta = 1.0;
  const Pose pose(1, 2, 0, 0.5);
  const auto full = pack_message(clusters, params, pose, 3, 1.25);
  CHECK(full.agent_id == 3);
  CHECK(full.timestamp == 1.25);
  CHECK(full.pose.x == 1);
  REQUIRE(full.clusters.size() == 2);
  CHECK(full.clusters[0].points.size() == 10);

  params.zeta = 0.5;
  const auto half = pack_message(clusters, params, pose, 3, 1.25);
  CHECK(half.clusters[0].points.size() == 5);  // floor(10 * 0.5)
  CHECK(half.clusters[1].points.size() == 1);  // floor(3 * 0.5)
  CHECK(half.clusters[0].feature == a.feature);
  CHECK(half.clusters[0].center.x == a.center.x);
  // Scores travel with their points.
  for (std::size_t k = 0; k < half.clusters[0].points.size(); ++k) {
    const double x = half.clusters[0].points[k].x;
    const auto idx = static_cast<std::size_t>(std::round(x / 0.3));
    CHECK(half.clusters[0].semantic_scores[k] ==
          doctest::Approx(a.semantic_scores[idx]));
  }
}

TEST_CASE("communication volume accounting") {
  // 128 scalars -> 256 bytes -> exactly 8 on the log2 scale.
  const auto r = comm_report_from_values(128);
  CHECK(r.bytes == 256);
  CHECK(r.comm_log2 == 8.0);
  CHECK(comm_report_from_values(0).comm_log2 == 0.0);

  AgentMessage msg;
  PointCluster c = cluster_at({0, 0, 0}, {{0, 0, 0}, {1, 0, 0}});
  c.feature = {0.f, 0.f, 0.f, 0.f};
  msg.clusters.push_back(c);
  // 3*2 points + 3 center + 4 feature + 8 box = 21 values.
  CHECK(comm_volume(msg).n_values == 21);
  CHECK(comm_volume(msg, true).n_values == 23);
  CHECK(comm_volume(msg).comm_log2 == doctest::Approx(std::log2(42.0)));

  msg.clusters.push_back(c);
  CHECK(comm_volume(msg).n_values == 42);
}
