#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "pcsim/packing.hpp"
#include "pcsim/rng.hpp"
#include "pcsim/serialize.hpp"

namespace pcsim {

struct ChannelConfig {
  double latency_s = 0.0;
  double pos_noise_sigma = 0.0;      // meters, on x and y
  double heading_noise_sigma = 0.0;  // radians
  std::optional<double> bandwidth_cap_log2;
  bool all_to_all = false;  // default is ego-centric collaboration
};

struct InFlightMessage {
  std::vector<std::uint8_t> payload;
  double send_time = 0.0;
  double deliver_time = 0.0;
  std::uint32_t sender = 0;
  std::uint32_t receiver = 0;
};

/// Gaussian localization error: x/y by pos_noise_sigma, yaw by
/// heading_noise_sigma (renormalized).
inline Pose corrupt_pose(const Pose& pose, const ChannelConfig& cfg,
                         std::uint64_t seed) {
  Rng rng(seed);
  return Pose(pose.x + rng.gaussian(cfg.pos_noise_sigma),
              pose.y + rng.gaussian(cfg.pos_noise_sigma), pose.z,
              pose.yaw + rng.gaussian(cfg.heading_noise_sigma));
}

inline constexpr std::array<double, 7> kZetaGrid = {
    1.0, 1.0 / 4, 1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128};

struct BandwidthDecision {
  PackingParams params;
  bool infeasible = false;
};

/// Pick the largest sampling rate from the fixed grid whose packed volume
/// fits under the cap. No cap leaves the configured rate untouched. If even
/// the smallest rate exceeds the cap, the message still goes out at that rate
/// with the infeasibility flagged.
inline BandwidthDecision enforce_bandwidth(
    const std::vector<PointCluster>& clusters, const PackingParams& params,
    std::optional<double> cap_log2) {
  BandwidthDecision decision;
  decision.params = params;
  if (!cap_log2) return decision;
  for (double zeta : kZetaGrid) {
    std::size_t n_values = 0;
    for (const auto& c : clusters) {
      const auto sampled = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::floor(static_cast<double>(c.points.size()) * zeta)));
      n_values += 3 * sampled + 3 + c.feature.size() + 8;
      if (params.transmit_scores) n_values += sampled;
    }
    if (comm_report_from_values(n_values).comm_log2 <= *cap_log2) {
      decision.params.zeta = zeta;
      return decision;
    }
  }
  decision.params.zeta = kZetaGrid.back();
  decision.infeasible = true;
  return decision;
}

/// One delivered message plus the sender's previous delivery, which is what
/// latency compensation consumes.
struct Delivery {
  AgentMessage message;
  std::optional<AgentMessage> previous;
};

/// Single-owner event queue over serialized payloads. Pose corruption is
/// applied at send time, before serialization, so the transmitted pose is the
/// wrong one and must be corrected by the receiver.
class Channel {
 public:
  explicit Channel(const ChannelConfig& cfg) : cfg_(cfg) {}

  void send(const AgentMessage& msg, std::uint32_t receiver, double now,
            std::uint64_t noise_seed, bool half_precision = true,
            bool transmit_scores = false) {
    AgentMessage corrupted = msg;
    corrupted.pose = corrupt_pose(msg.pose, cfg_, noise_seed);
    InFlightMessage m;
    m.payload = serialize(corrupted, half_precision, transmit_scores);
    m.send_time = now;
    m.deliver_time = now + cfg_.latency_s;
    m.sender = msg.agent_id;
    m.receiver = receiver;
    queue_.push_back(std::move(m));
  }

  /// Deliver everything due at `clock`, updating the per-sender history
  /// (depth 1: the last communication round).
  std::vector<Delivery> deliver(double clock) {
    std::vector<Delivery> out;
    std::deque<InFlightMessage> keep;
    for (auto& m : queue_) {
      if (m.deliver_time <= clock + 1e-12) {
        Delivery d;
        d.message = deserialize(m.payload);
        auto it = history_.find(m.sender);
        if (it != history_.end()) d.previous = it->second;
        history_[m.sender] = d.message;
        out.push_back(std::move(d));
      } else {
        keep.push_back(std::move(m));
      }
    }
    queue_ = std::move(keep);
    return out;
  }

  std::size_t pending() const { return queue_.size(); }

 private:
  ChannelConfig cfg_;
  std::deque<InFlightMessage> queue_;
  std::map<std::uint32_t, AgentMessage> history_;
};

}  // namespace pcsim
