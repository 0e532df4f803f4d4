#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcsim/cluster.hpp"

namespace pcsim {

struct SerializeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TruncatedBuffer : SerializeError {
  TruncatedBuffer() : SerializeError("truncated message buffer") {}
};
struct BadMagic : SerializeError {
  BadMagic() : SerializeError("bad message magic") {}
};
struct VersionMismatch : SerializeError {
  VersionMismatch() : SerializeError("unsupported message version") {}
};

/// IEEE binary16 conversion with round-to-nearest-even.
inline std::uint16_t float_to_half(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::int32_t exp = static_cast<std::int32_t>((x >> 23) & 0xff) - 127;
  std::uint32_t mant = x & 0x7fffffu;
  if (exp == 128) {  // inf / nan
    return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0));
  }
  if (exp > 15) return static_cast<std::uint16_t>(sign | 0x7c00u);  // overflow
  if (exp >= -14) {
    // Normal: 10-bit mantissa with round-to-nearest-even on the lost 13 bits.
    std::uint32_t half = (static_cast<std::uint32_t>(exp + 15) << 10) |
                         (mant >> 13);
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  if (exp >= -25) {
    // Subnormal half.
    mant |= 0x800000u;
    const int shift = -exp - 2;  // 13..24 bits dropped
    std::uint32_t half = mant >> (shift + 1);
    const std::uint32_t rem = mant & ((1u << (shift + 1)) - 1);
    const std::uint32_t halfway = 1u << shift;
    if (rem > halfway || (rem == halfway && (half & 1))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  return static_cast<std::uint16_t>(sign);  // underflow to zero
}

inline float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while (!(mant & 0x400u));
      out = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) |
            ((mant & 0x3ffu) << 13);
    }
  } else if (exp == 31) {
    out = sign | 0x7f800000u | (mant << 13);
  } else {
    out = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(out);
}

inline double half_round(double v) {
  return static_cast<double>(half_to_float(float_to_half(static_cast<float>(v))));
}

namespace wire {

inline constexpr char kMagic[4] = {'P', 'C', 'V', '1'};
inline constexpr std::uint8_t kFlagScores = 0x01;
inline constexpr std::uint8_t kFlagFullPrecision = 0x02;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back((v >> (8 * i)) & 0xff);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) {
    const auto b = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf_.push_back((b >> (8 * i)) & 0xff);
  }
  void f16(float v) {
    const std::uint16_t h = float_to_half(v);
    buf_.push_back(h & 0xff);
    buf_.push_back(h >> 8);
  }
  void scalar(double v, bool half) {
    if (half)
      f16(static_cast<float>(v));
    else
      f32(static_cast<float>(v));
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  float f16() {
    need(2);
    std::uint16_t h = buf_[pos_] | (static_cast<std::uint16_t>(buf_[pos_ + 1]) << 8);
    pos_ += 2;
    return half_to_float(h);
  }
  double scalar(bool half) {
    return half ? static_cast<double>(f16()) : static_cast<double>(f32());
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw TruncatedBuffer();
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace wire

/// Little-endian layout:
///   magic "PCV1" | flags u8 | feature_dim u32 | agent_id u32 | timestamp f64
///   | pose 4xf32 | cluster_count u32 | per cluster:
///   point_count u32 | center 3xf32 | feature Dxf16 | box 8xf32
///   | points (point_count*3)xf16 | scores point_count x f16 (flags bit 0).
/// Coordinates, features, and scores widen to f32 when flags bit 1 is set.
/// object_id is simulation bookkeeping and is never written.
inline std::vector<std::uint8_t> serialize(const AgentMessage& msg,
                                           bool half_precision = true,
                                           bool transmit_scores = false) {
  wire::Writer w;
  for (char c : wire::kMagic) w.u8(static_cast<std::uint8_t>(c));
  std::uint8_t flags = 0;
  if (transmit_scores) flags |= wire::kFlagScores;
  if (!half_precision) flags |= wire::kFlagFullPrecision;
  w.u8(flags);
  const std::uint32_t feature_dim =
      msg.clusters.empty() ? 0
                           : static_cast<std::uint32_t>(msg.clusters[0].feature.size());
  w.u32(feature_dim);
  w.u32(msg.agent_id);
  w.f64(msg.timestamp);
  w.f32(static_cast<float>(msg.pose.x));
  w.f32(static_cast<float>(msg.pose.y));
  w.f32(static_cast<float>(msg.pose.z));
  w.f32(static_cast<float>(msg.pose.yaw));
  w.u32(static_cast<std::uint32_t>(msg.clusters.size()));
  for (const auto& c : msg.clusters) {
    if (c.feature.size() != feature_dim)
      throw std::invalid_argument("serialize: inconsistent feature dims");
    w.u32(static_cast<std::uint32_t>(c.points.size()));
    w.f32(static_cast<float>(c.center.x));
    w.f32(static_cast<float>(c.center.y));
    w.f32(static_cast<float>(c.center.z));
    for (float f : c.feature) w.scalar(f, half_precision);
    const OrientedBox box = c.proposal.value_or(OrientedBox{});
    w.f32(static_cast<float>(box.center.x));
    w.f32(static_cast<float>(box.center.y));
    w.f32(static_cast<float>(box.center.z));
    w.f32(static_cast<float>(box.height));
    w.f32(static_cast<float>(box.width));
    w.f32(static_cast<float>(box.length));
    w.f32(static_cast<float>(box.yaw));
    w.f32(static_cast<float>(box.confidence));
    for (const auto& p : c.points) {
      w.scalar(p.x, half_precision);
      w.scalar(p.y, half_precision);
      w.scalar(p.z, half_precision);
    }
    if (transmit_scores)
      for (double s : c.semantic_scores) w.scalar(s, half_precision);
  }
  return w.take();
}

inline AgentMessage deserialize(const std::vector<std::uint8_t>& bytes) {
  wire::Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (magic[0] != 'P' || magic[1] != 'C' || magic[2] != 'V') throw BadMagic();
  if (magic[3] != '1') throw VersionMismatch();
  const std::uint8_t flags = r.u8();
  const bool scores = flags & wire::kFlagScores;
  const bool half = !(flags & wire::kFlagFullPrecision);
  const std::uint32_t feature_dim = r.u32();

  AgentMessage msg;
  msg.agent_id = r.u32();
  msg.timestamp = r.f64();
  const float px = r.f32(), py = r.f32(), pz = r.f32(), pyaw = r.f32();
  msg.pose = Pose(px, py, pz, pyaw);
  const std::uint32_t n_clusters = r.u32();
  const std::size_t scalar_bytes = (flags & wire::kFlagFullPrecision) ? 4 : 2;
  for (std::uint32_t i = 0; i < n_clusters; ++i) {
    PointCluster c;
    const std::uint32_t n_points = r.u32();
    // Reject corrupt counts before allocating for them.
    const std::size_t payload =
        (static_cast<std::size_t>(feature_dim) +
         static_cast<std::size_t>(n_points) * (scores ? 4 : 3)) *
            scalar_bytes +
        11 * 4;
    if (payload > r.remaining()) throw TruncatedBuffer();
    c.center = {r.f32(), r.f32(), r.f32()};
    c.feature.resize(feature_dim);
    for (auto& f : c.feature) f = static_cast<float>(r.scalar(half));
    OrientedBox box;
    box.center = {r.f32(), r.f32(), r.f32()};
    box.height = r.f32();
    box.width = r.f32();
    box.length = r.f32();
    box.yaw = r.f32();
    box.confidence = r.f32();
    c.proposal = box;
    c.points.resize(n_points);
    for (auto& p : c.points) {
      p.x = r.scalar(half);
      p.y = r.scalar(half);
      p.z = r.scalar(half);
    }
    if (scores) {
      c.semantic_scores.resize(n_points);
      for (auto& s : c.semantic_scores) s = r.scalar(half);
    }
    msg.clusters.push_back(std::move(c));
  }
  return msg;
}

}  // namespace pcsim
