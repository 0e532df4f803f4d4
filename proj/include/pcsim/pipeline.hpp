#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcsim/config.hpp"
#include "pcsim/evaluation.hpp"
#include "pcsim/netsim.hpp"
#include "pcsim/robustness.hpp"

namespace pcsim {

struct RunMetrics {
  double ap50 = 0.0;
  double ap70 = 0.0;
  std::optional<double> ap_sp_o, ap_cp, ap_sp_e;  // at IoU 0.7
  double mean_comm_log2 = 0.0;
  int degeneracy_warnings = 0;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<FrameEval> frames;
  std::string detections_csv;
  std::string manifest;
};

/// Agents evenly spaced on a ring of the configured radius, facing the
/// center; agent 0 is the ego.
inline std::vector<AgentSpec> make_ring_agents(const ScenarioConfig& cfg) {
  std::vector<AgentSpec> agents;
  for (int k = 0; k < cfg.agents.count; ++k) {
    const double angle =
        2.0 * std::numbers::pi * k / static_cast<double>(cfg.agents.count);
    AgentSpec a;
    a.agent_id = static_cast<std::uint32_t>(k);
    a.pose = Pose(cfg.agents.ring_radius * std::cos(angle),
                  cfg.agents.ring_radius * std::sin(angle), 0.0,
                  normalize_angle(angle + std::numbers::pi));
    a.sensor_range = cfg.agents.sensor_range;
    a.angular_resolution = cfg.agents.angular_resolution;
    a.is_ego = (k == 0);
    agents.push_back(a);
  }
  return agents;
}

namespace detail {

/// Documented sub-seed scheme: stream k = frame * 64 + agent * 8 + purpose,
/// offset past the scene/weights streams.
inline std::uint64_t frame_seed(std::uint64_t master, int frame, int agent,
                                int purpose) {
  return derive_seed(master, 16 +
                                 static_cast<std::uint64_t>(frame) * 64 +
                                 static_cast<std::uint64_t>(agent) * 8 +
                                 static_cast<std::uint64_t>(purpose));
}

struct AgentFrameState {
  std::vector<PointCluster> clusters;  // proposal-filtered, agent-local
  std::map<std::uint32_t, std::size_t> fg_counts;  // object_id -> point count
};

inline AgentFrameState process_agent(const Scene& scene, const AgentSpec& agent,
                                     const ScenarioConfig& cfg,
                                     const SirWeights& weights, int frame) {
  AgentFrameState state;
  const auto cloud = observe(scene, agent, cfg.oracle,
                             frame_seed(cfg.master_seed, frame, agent.agent_id, 0));
  for (const auto& p : cloud.points)
    if (p.is_foreground && p.object_id) ++state.fg_counts[*p.object_id];

  auto clusters = group_clusters(cloud, cfg.clustering);
  for (auto& c : clusters) c.feature = extract_cluster_feature(c, weights);

  const Pose world_to_agent = pose_inverse(agent.pose);
  std::vector<OrientedBox> gt_local;
  for (const auto& obj : scene.objects)
    gt_local.push_back(transform_box(obj.box, world_to_agent));

  clusters = generate_proposals(
      clusters, gt_local, cfg.packing.proposal_noise,
      frame_seed(cfg.master_seed, frame, agent.agent_id, 1));
  for (auto& c : clusters)
    c = override_points(c, cloud, cfg.clustering.fg_threshold);
  state.clusters = std::move(clusters);
  return state;
}

}  // namespace detail

/// Execute a full scenario: per frame, step the scene, observe per agent,
/// extract and pack clusters, exchange under the channel model, correct
/// poses, compensate latency, aggregate, and evaluate pooled AP at the end.
/// A bandwidth cap of exactly 0 disables collaboration (single-agent run).
inline RunResult run_scenario(const ScenarioConfig& cfg,
                              Telemetry* telemetry = nullptr) {
  validate_config(cfg);
  RunResult result;
  result.manifest = config_to_manifest(cfg);

  const auto agents = make_ring_agents(cfg);
  Scene scene =
      generate_scene(cfg.scene, agents, derive_seed(cfg.master_seed, 1));
  const SirWeights weights = SirWeights::make(cfg.sir.feature_dim,
                                              cfg.sir.layers,
                                              derive_seed(cfg.master_seed, 2));
  Channel channel(cfg.channel);
  const bool collaborate = !(cfg.channel.bandwidth_cap_log2 &&
                             *cfg.channel.bandwidth_cap_log2 == 0.0);
  const AgentSpec& ego = agents[0];

  double comm_sum = 0.0;
  std::size_t comm_count = 0;
  std::ostringstream detections_csv;

  for (int frame = 0; frame < cfg.frames; ++frame) {
    if (frame > 0) scene = step_scene(scene, cfg.dt);
    const double now = scene.time;

    std::vector<detail::AgentFrameState> states;
    for (const auto& agent : agents)
      states.push_back(detail::process_agent(scene, agent, cfg, weights, frame));

    // Senders pack under the bandwidth cap and transmit to the ego.
    if (collaborate) {
      for (std::size_t k = 1; k < agents.size(); ++k) {
        const auto decision =
            enforce_bandwidth(states[k].clusters, cfg.packing,
                              cfg.channel.bandwidth_cap_log2);
        if (decision.infeasible) ++result.metrics.degeneracy_warnings;
        AgentMessage msg =
            pack_message(states[k].clusters, decision.params, agents[k].pose,
                         agents[k].agent_id, now);
        const auto report = comm_volume(msg, cfg.packing.transmit_scores);
        comm_sum += report.comm_log2;
        ++comm_count;
        channel.send(msg, ego.agent_id, now,
                     detail::frame_seed(cfg.master_seed, frame, agents[k].agent_id, 2),
                     cfg.packing.half_precision, cfg.packing.transmit_scores);
      }
    }

    // The ego keeps its own clusters unsampled.
    PackingParams ego_params = cfg.packing;
    ego_params.zeta = 1.0;
    AgentMessage ego_msg = pack_message(states[0].clusters, ego_params,
                                        ego.pose, ego.agent_id, now);

    auto deliveries = channel.deliver(now);

    // Pose correction over this round's graph.
    std::map<std::uint32_t, Pose> corrected;
    if (cfg.robustness.pose_correction && !deliveries.empty()) {
      std::vector<AgentMessage> received;
      for (const auto& d : deliveries) received.push_back(d.message);
      const auto graph =
          build_pose_graph(ego_msg, received, cfg.robustness.epsilon_pose);
      const auto opt = optimize_poses(graph);
      if (opt.degenerate)
        ++result.metrics.degeneracy_warnings;
      else
        corrected = opt.agent_poses;
    }

    std::vector<AgentMessage> received;
    for (const auto& d : deliveries) {
      AgentMessage msg = d.message;
      if (cfg.robustness.latency_compensation)
        msg = compensate_latency(d.previous, msg, now, cfg.robustness.latency)
                  .message;
      auto it = corrected.find(msg.agent_id);
      if (it != corrected.end())
        msg.pose = pose_compose(ego.pose, it->second);
      received.push_back(std::move(msg));
    }

    const auto detections =
        aggregate(ego_msg, received, cfg.aggregation, telemetry);

    // Ground truth in the ego frame; targets nobody observed are excluded
    // (out of every sensor's reach, undetectable by construction).
    FrameEval eval;
    const Pose world_to_ego = pose_inverse(ego.pose);
    for (const auto& obj : scene.objects) {
      GroundTruthTarget gt;
      gt.box = transform_box(obj.box, world_to_ego);
      const auto& ego_counts = states[0].fg_counts;
      auto ego_it = ego_counts.find(obj.object_id);
      gt.ego_point_count = ego_it == ego_counts.end() ? 0 : ego_it->second;
      for (std::size_t k = 1; k < agents.size(); ++k) {
        auto it = states[k].fg_counts.find(obj.object_id);
        if (it != states[k].fg_counts.end()) gt.other_point_count += it->second;
      }
      if (gt.ego_point_count + gt.other_point_count > 0)
        eval.ground_truth.push_back(gt);
    }
    for (const auto& det : detections)
      if (det.proposal) eval.detections.push_back(*det.proposal);

    detections_csv << detections_to_csv(detections, frame, ego.agent_id);
    if (frame >= cfg.warmup_frames) result.frames.push_back(std::move(eval));
  }

  result.metrics.ap50 = compute_ap(result.frames, 0.5);
  result.metrics.ap70 = compute_ap(result.frames, 0.7);
  const auto cat = compute_category_ap(result.frames, 0.7, cfg.eval);
  result.metrics.ap_sp_o = cat.sp_o;
  result.metrics.ap_cp = cat.cp;
  result.metrics.ap_sp_e = cat.sp_e;
  result.metrics.mean_comm_log2 = comm_count ? comm_sum / comm_count : 0.0;
  result.detections_csv = detections_csv.str();
  return result;
}

struct SweepSpec {
  std::string parameter;        // dotted config path
  std::vector<std::string> values;
  int repetitions = 1;
};

struct SweepRow {
  std::string value;
  RunMetrics mean;
  RunMetrics stddev;
};

inline std::string metrics_csv_header() {
  return "sweep_value,ap50,ap70,ap_sp_o,ap_cp,ap_sp_e,mean_comm_log2\n";
}

inline std::string metrics_csv_row(const std::string& value,
                                   const RunMetrics& m) {
  auto opt = [](const std::optional<double>& v) {
    return v ? std::to_string(*v) : std::string("nan");
  };
  std::ostringstream out;
  out << value << "," << m.ap50 << "," << m.ap70 << "," << opt(m.ap_sp_o)
      << "," << opt(m.ap_cp) << "," << opt(m.ap_sp_e) << ","
      << m.mean_comm_log2 << "\n";
  return out.str();
}

/// One run per (value, repetition); repetition r of value v uses sub-seed
/// derive_seed(master, 4096 + v * reps + r). Returns per-value means and
/// standard deviations over repetitions.
inline std::vector<SweepRow> run_sweep(const ScenarioConfig& base,
                                       const SweepSpec& spec) {
  if (spec.repetitions < 1) throw ConfigError("sweep: repetitions must be >= 1");
  std::vector<SweepRow> rows;
  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    std::vector<RunMetrics> runs;
    for (int rep = 0; rep < spec.repetitions; ++rep) {
      ScenarioConfig cfg = base;
      config_set(cfg, spec.parameter, spec.values[vi]);
      cfg.master_seed = derive_seed(
          base.master_seed, 4096 + vi * static_cast<std::size_t>(spec.repetitions) + rep);
      runs.push_back(run_scenario(cfg).metrics);
    }
    auto stat = [&](auto getter) {
      double mean = 0.0;
      for (const auto& r : runs) mean += getter(r);
      mean /= runs.size();
      double var = 0.0;
      for (const auto& r : runs) {
        const double d = getter(r) - mean;
        var += d * d;
      }
      return std::pair<double, double>(mean, std::sqrt(var / runs.size()));
    };
    SweepRow row;
    row.value = spec.values[vi];
    std::tie(row.mean.ap50, row.stddev.ap50) =
        stat([](const RunMetrics& m) { return m.ap50; });
    std::tie(row.mean.ap70, row.stddev.ap70) =
        stat([](const RunMetrics& m) { return m.ap70; });
    std::tie(row.mean.mean_comm_log2, row.stddev.mean_comm_log2) =
        stat([](const RunMetrics& m) { return m.mean_comm_log2; });
    auto opt_stat = [&](auto getter) -> std::optional<double> {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : runs)
        if (getter(r)) {
          sum += *getter(r);
          ++n;
        }
      if (n == 0) return std::nullopt;
      return sum / n;
    };
    row.mean.ap_sp_o = opt_stat([](const RunMetrics& m) { return m.ap_sp_o; });
    row.mean.ap_cp = opt_stat([](const RunMetrics& m) { return m.ap_cp; });
    row.mean.ap_sp_e = opt_stat([](const RunMetrics& m) { return m.ap_sp_e; });
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace pcsim
