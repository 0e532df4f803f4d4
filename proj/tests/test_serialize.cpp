#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "pcsim/rng.hpp"
#include "pcsim/serialize.hpp"

using namespace pcsim;

namespace {

AgentMessage random_message(Rng& rng, std::size_t n_clusters, int feature_dim) {
  AgentMessage msg;
  msg.agent_id = static_cast<std::uint32_t>(rng.next_u64() & 0xffff);
  msg.timestamp = rng.uniform(0, 100);
  msg.pose = Pose(rng.uniform(-50, 50), rng.uniform(-50, 50),
                  rng.uniform(-2, 2), rng.uniform(-3, 3));
  for (std::size_t i = 0; i < n_clusters; ++i) {
    PointCluster c;
    const auto n = 1 + static_cast<std::size_t>(rng.uniform(0, 20));
    for (std::size_t k = 0; k < n; ++k) {
      c.points.push_back({rng.uniform(-60, 60), rng.uniform(-60, 60),
                          rng.uniform(-2, 3)});
      c.semantic_scores.push_back(rng.uniform(0, 1));
    }
    c.center = {rng.uniform(-60, 60), rng.uniform(-60, 60), rng.uniform(0, 2)};
    for (int k = 0; k < feature_dim; ++k)
      c.feature.push_back(static_cast<float>(rng.uniform(-4, 4)));
    c.proposal = OrientedBox{{rng.uniform(-60, 60), rng.uniform(-60, 60), 0.8},
                             1.6, 2.0, 4.5, rng.uniform(-3, 3),
                             rng.uniform(0, 1)};
    msg.clusters.push_back(std::move(c));
  }
  return msg;
}

}  // namespace

TEST_CASE("binary16 codec hits known bit patterns") {
  CHECK(float_to_half(0.0f) == 0x0000);
  CHECK(float_to_half(-0.0f) == 0x8000);
  CHECK(float_to_half(1.0f) == 0x3c00);
  CHECK(float_to_half(-2.0f) == 0xc000);
  CHECK(float_to_half(65504.0f) == 0x7bff);  // largest finite half
  CHECK(float_to_half(0.5f) == 0x3800);
  CHECK(float_to_half(5.9604644775390625e-8f) == 0x0001);  // smallest subnormal
  CHECK(std::isinf(half_to_float(float_to_half(1e6f))));
  CHECK(std::isnan(half_to_float(float_to_half(NAN))));
  CHECK(half_to_float(0x3c00) == 1.0f);
  CHECK(half_to_float(0x0001) == 5.9604644775390625e-8f);
  CHECK(half_to_float(0x7c00) == std::numeric_limits<float>::infinity());
}

TEST_CASE("binary16 rounding is nearest-even") {
  // Halfway between 1.0 and the next half (1 + 2^-10): ties to even -> 1.0.
  CHECK(float_to_half(1.0f + 0x1p-11f) == 0x3c00);
  // Halfway between 1 + 2^-10 (odd mantissa) and 1 + 2^-9: ties up to even.
  CHECK(float_to_half(1.0f + 3 * 0x1p-11f) == 0x3c02);
  // Just above halfway rounds up.
  CHECK(float_to_half(1.0f + 0x1p-11f + 0x1p-20f) == 0x3c01);
  // Halfway past the largest finite half overflows to infinity.
  CHECK(std::isinf(half_to_float(float_to_half(65520.0f))));
  CHECK(half_to_float(float_to_half(65519.0f)) == 65504.0f);
}

TEST_CASE("every non-nan half value survives a float round trip") {
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    const auto half = static_cast<std::uint16_t>(h);
    const float f = half_to_float(half);
    if (std::isnan(f)) continue;
    CHECK(float_to_half(f) == half);
  }
}

TEST_CASE("serialization round trip at full precision") {
  Rng rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const auto msg = random_message(rng, 1 + trial % 4, 16);
    const auto bytes = serialize(msg, /*half_precision=*/false,
                                 /*transmit_scores=*/true);
    const auto back = deserialize(bytes);
    CHECK(back.agent_id == msg.agent_id);
    CHECK(back.timestamp == msg.timestamp);
    CHECK(back.pose.x == static_cast<float>(msg.pose.x));
    CHECK(back.pose.yaw == static_cast<float>(msg.pose.yaw));
    REQUIRE(back.clusters.size() == msg.clusters.size());
    for (std::size_t i = 0; i < msg.clusters.size(); ++i) {
      const auto& a = msg.clusters[i];
      const auto& b = back.clusters[i];
      REQUIRE(b.points.size() == a.points.size());
      CHECK(b.feature == a.feature);
      CHECK(b.center.x == static_cast<float>(a.center.x));
      REQUIRE(b.proposal.has_value());
      CHECK(b.proposal->yaw == static_cast<float>(a.proposal->yaw));
      CHECK(b.proposal->confidence == static_cast<float>(a.proposal->confidence));
      for (std::size_t k = 0; k < a.points.size(); ++k) {
        CHECK(b.points[k].x == static_cast<float>(a.points[k].x));
        CHECK(b.semantic_scores[k] ==
              static_cast<float>(a.semantic_scores[k]));
      }
      CHECK_FALSE(b.object_id.has_value());  // bookkeeping never travels
    }
  }
}

TEST_CASE("half precision quantizes exactly to the codec grid") {
  Rng rng(52);
  const auto msg = random_message(rng, 3, 8);
  const auto back = deserialize(serialize(msg, true, true));
  for (std::size_t i = 0; i < msg.clusters.size(); ++i) {
    for (std::size_t k = 0; k < msg.clusters[i].points.size(); ++k) {
      CHECK(back.clusters[i].points[k].x ==
            half_round(static_cast<float>(msg.clusters[i].points[k].x)));
      CHECK(back.clusters[i].semantic_scores[k] ==
            half_round(static_cast<float>(msg.clusters[i].semantic_scores[k])));
    }
    for (std::size_t k = 0; k < msg.clusters[i].feature.size(); ++k)
      CHECK(back.clusters[i].feature[k] ==
            static_cast<float>(half_round(msg.clusters[i].feature[k])));
    // Centers and boxes stay full precision regardless of the flag.
    CHECK(back.clusters[i].center.x ==
          static_cast<float>(msg.clusters[i].center.x));
  }
  // Scores omitted by default.
  const auto lean = deserialize(serialize(msg, true, false));
  CHECK(lean.clusters[0].semantic_scores.empty());
}

TEST_CASE("serialization is deterministic and omitting scores shrinks it") {
  Rng rng(53);
  const auto msg = random_message(rng, 2, 8);
  CHECK(serialize(msg) == serialize(msg));
  CHECK(serialize(msg, true, false).size() < serialize(msg, true, true).size());
  CHECK(serialize(msg, true, false).size() < serialize(msg, false, false).size());
}

TEST_CASE("empty message round trip") {
  AgentMessage msg;
  msg.agent_id = 7;
  msg.timestamp = 2.5;
  const auto back = deserialize(serialize(msg));
  CHECK(back.agent_id == 7);
  CHECK(back.timestamp == 2.5);
  CHECK(back.clusters.empty());
}

TEST_CASE("inconsistent feature dimensions are rejected") {
  AgentMessage msg;
  PointCluster a, b;
  a.points = b.points = {{0, 0, 0}};
  a.feature = {1.f, 2.f};
  b.feature = {1.f};
  msg.clusters = {a, b};
  CHECK_THROWS_AS(serialize(msg), std::invalid_argument);
}

TEST_CASE("malformed buffers raise typed errors and never crash") {
  Rng rng(54);
  const auto msg = random_message(rng, 2, 8);
  auto bytes = serialize(msg, true, true);

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[1] = 'X';
    CHECK_THROWS_AS(deserialize(bad), BadMagic);
  }
  SUBCASE("unknown version") {
    auto bad = bytes;
    bad[3] = '2';
    CHECK_THROWS_AS(deserialize(bad), VersionMismatch);
  }
  SUBCASE("every truncation throws TruncatedBuffer") {
    for (std::size_t len = 0; len < bytes.size(); ++len) {
      std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + len);
      CHECK_THROWS_AS(deserialize(cut), TruncatedBuffer);
    }
  }
  SUBCASE("random corruption past the header yields a value or typed error") {
    for (int trial = 0; trial < 200; ++trial) {
      auto bad = bytes;
      const auto pos = 4 + rng.uniform_index(bad.size() - 4);
      bad[pos] = static_cast<std::uint8_t>(rng.next_u64() & 0xff);
      try {
        (void)deserialize(bad);
      } catch (const SerializeError&) {
      }
    }
    CHECK(true);
  }
}
