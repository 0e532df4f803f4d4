#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcsim/aggregation.hpp"
#include "pcsim/encoder.hpp"
#include "pcsim/evaluation.hpp"
#include "pcsim/netsim.hpp"
#include "pcsim/packing.hpp"
#include "pcsim/robustness.hpp"
#include "pcsim/scene.hpp"

namespace pcsim {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AgentLayout {
  int count = 2;
  double ring_radius = 30.0;  // agents evenly spaced on a circle, ego first
  double sensor_range = 100.0;
  double angular_resolution = 0.002;
};

struct RobustnessConfig {
  bool pose_correction = true;
  bool latency_compensation = true;
  double epsilon_pose = 1.5;
  LatencyParams latency;
};

struct SirConfig {
  int feature_dim = 128;
  int layers = 6;
};

/// Full experiment description; the master seed determines every random
/// draw of a run.
struct ScenarioConfig {
  SceneParams scene;
  AgentLayout agents;
  OracleNoise oracle;
  ClusteringParams clustering;
  PackingParams packing;
  ChannelConfig channel;
  AggregationParams aggregation;
  RobustnessConfig robustness;
  EvalConfig eval;
  SirConfig sir;
  int frames = 10;
  double dt = 0.1;
  int warmup_frames = 0;
  std::uint64_t master_seed = 1;
};

namespace detail {

inline double parse_double(const std::string& v, const std::string& path) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(path + ": expected a number, got '" + v + "'");
  }
}

inline int parse_int(const std::string& v, const std::string& path) {
  const double d = parse_double(v, path);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw ConfigError(path + ": expected an integer, got '" + v + "'");
  return i;
}

inline bool parse_bool(const std::string& v, const std::string& path) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(path + ": expected a boolean, got '" + v + "'");
}

}  // namespace detail

/// Assign one dotted-path key. Shared by the file parser and the sweep
/// driver, so every documented key is sweepable.
inline void config_set(ScenarioConfig& c, const std::string& path,
                       const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  const auto d = [&] { return parse_double(value, path); };
  const auto i = [&] { return parse_int(value, path); };
  const auto b = [&] { return parse_bool(value, path); };

  if (path == "scene.extent") c.scene.extent = d();
  else if (path == "scene.object_count") c.scene.object_count = i();
  else if (path == "scene.speed_min") c.scene.speed_min = d();
  else if (path == "scene.speed_max") c.scene.speed_max = d();
  else if (path == "scene.object_length") c.scene.object_length = d();
  else if (path == "scene.object_width") c.scene.object_width = d();
  else if (path == "scene.object_height") c.scene.object_height = d();
  else if (path == "scene.surface_spacing") c.scene.surface_spacing = d();
  else if (path == "scene.surface_rows") c.scene.surface_rows = i();
  else if (path == "scene.placement_margin") c.scene.placement_margin = d();
  else if (path == "agents.count") c.agents.count = i();
  else if (path == "agents.ring_radius") c.agents.ring_radius = d();
  else if (path == "agents.sensor_range") c.agents.sensor_range = d();
  else if (path == "agents.angular_resolution")
    c.agents.angular_resolution = d();
  else if (path == "oracle.center_sigma") c.oracle.center_sigma = d();
  else if (path == "oracle.score_flip_rate") c.oracle.score_flip_rate = d();
  else if (path == "oracle.bg_clutter_rate") c.oracle.bg_clutter_rate = d();
  else if (path == "clustering.epsilon_point") c.clustering.epsilon_point = d();
  else if (path == "clustering.fg_threshold") c.clustering.fg_threshold = d();
  else if (path == "clustering.min_cluster_points")
    c.clustering.min_cluster_points = i();
  else if (path == "packing.zeta") c.packing.zeta = d();
  else if (path == "packing.lambda_s") c.packing.lambda_s = d();
  else if (path == "packing.lambda_d") c.packing.lambda_d = d();
  else if (path == "packing.kde_bandwidth") c.packing.kde_bandwidth = d();
  else if (path == "packing.proposal_center_sigma")
    c.packing.proposal_noise.center_sigma = d();
  else if (path == "packing.proposal_size_sigma")
    c.packing.proposal_noise.size_sigma = d();
  else if (path == "packing.proposal_yaw_sigma")
    c.packing.proposal_noise.yaw_sigma = d();
  else if (path == "packing.half_precision") c.packing.half_precision = b();
  else if (path == "packing.transmit_scores") c.packing.transmit_scores = b();
  else if (path == "channel.latency_s") c.channel.latency_s = d();
  else if (path == "channel.pos_noise_sigma") c.channel.pos_noise_sigma = d();
  else if (path == "channel.heading_noise_sigma")
    c.channel.heading_noise_sigma = d();
  else if (path == "channel.bandwidth_cap_log2") {
    if (value == "none")
      c.channel.bandwidth_cap_log2.reset();
    else
      c.channel.bandwidth_cap_log2 = d();
  } else if (path == "channel.all_to_all") c.channel.all_to_all = b();
  else if (path == "aggregation.epsilon_agg") c.aggregation.epsilon_agg = d();
  else if (path == "robustness.pose_correction")
    c.robustness.pose_correction = b();
  else if (path == "robustness.latency_compensation")
    c.robustness.latency_compensation = b();
  else if (path == "robustness.epsilon_pose") c.robustness.epsilon_pose = d();
  else if (path == "robustness.epsilon_latency_lo")
    c.robustness.latency.epsilon_lo = d();
  else if (path == "robustness.epsilon_latency_hi")
    c.robustness.latency.epsilon_hi = d();
  else if (path == "eval.spo_max_points") c.eval.spo_max_points = i();
  else if (path == "eval.spe_ratio") c.eval.spe_ratio = d();
  else if (path == "sir.feature_dim") c.sir.feature_dim = i();
  else if (path == "sir.layers") c.sir.layers = i();
  else if (path == "run.frames") c.frames = i();
  else if (path == "run.dt") c.dt = d();
  else if (path == "run.warmup_frames") c.warmup_frames = i();
  else if (path == "run.master_seed")
    c.master_seed = static_cast<std::uint64_t>(parse_double(value, path));
  else
    throw ConfigError("unknown config key '" + path + "'");
}

inline void validate_config(const ScenarioConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(c.scene.object_count >= 1, "scene.object_count: must be >= 1");
  require(c.scene.extent > 0, "scene.extent: must be > 0");
  require(c.scene.speed_min >= 0 && c.scene.speed_max >= c.scene.speed_min,
          "scene.speed_min/speed_max: need 0 <= min <= max");
  require(c.agents.count >= 2, "agents.count: must be >= 2");
  require(c.agents.sensor_range > 0, "agents.sensor_range: must be > 0");
  require(c.agents.angular_resolution > 0,
          "agents.angular_resolution: must be > 0");
  require(c.clustering.epsilon_point > 0,
          "clustering.epsilon_point: must be > 0");
  require(c.clustering.fg_threshold >= 0 && c.clustering.fg_threshold <= 1,
          "clustering.fg_threshold: must be in [0, 1]");
  require(c.clustering.min_cluster_points >= 1,
          "clustering.min_cluster_points: must be >= 1");
  require(c.packing.zeta > 0 && c.packing.zeta <= 1,
          "packing.zeta: must be in (0, 1]");
  require(c.packing.lambda_s >= 0, "packing.lambda_s: must be >= 0");
  require(c.packing.lambda_d >= 0, "packing.lambda_d: must be >= 0");
  require(c.packing.kde_bandwidth > 0, "packing.kde_bandwidth: must be > 0");
  require(c.channel.latency_s >= 0, "channel.latency_s: must be >= 0");
  require(c.channel.pos_noise_sigma >= 0,
          "channel.pos_noise_sigma: must be >= 0");
  require(c.channel.heading_noise_sigma >= 0,
          "channel.heading_noise_sigma: must be >= 0");
  require(c.aggregation.epsilon_agg > 0, "aggregation.epsilon_agg: must be > 0");
  require(c.robustness.latency.epsilon_lo >= 0 &&
              c.robustness.latency.epsilon_lo < c.robustness.latency.epsilon_hi,
          "robustness.epsilon_latency_lo/hi: need 0 <= lo < hi");
  require(c.eval.spo_max_points >= 0, "eval.spo_max_points: must be >= 0");
  require(c.eval.spe_ratio > 0 && c.eval.spe_ratio < 1,
          "eval.spe_ratio: must be in (0, 1)");
  require(c.sir.feature_dim >= 1, "sir.feature_dim: must be >= 1");
  require(c.sir.layers >= 1, "sir.layers: must be >= 1");
  require(c.frames >= 1, "run.frames: must be >= 1");
  require(c.dt > 0, "run.dt: must be > 0");
  require(c.warmup_frames >= 0 && c.warmup_frames < c.frames,
          "run.warmup_frames: must be in [0, run.frames)");
}

/// Parse "key = value" lines; '#' starts a comment; blank lines skipped.
inline ScenarioConfig parse_config(std::istream& in) {
  ScenarioConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    config_set(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

/// The resolved configuration, one key per line, suitable as a run manifest.
inline std::string config_to_manifest(const ScenarioConfig& c) {
  std::ostringstream out;
  out.precision(12);
  out << "scene.extent = " << c.scene.extent << "\n"
      << "scene.object_count = " << c.scene.object_count << "\n"
      << "scene.speed_min = " << c.scene.speed_min << "\n"
      << "scene.speed_max = " << c.scene.speed_max << "\n"
      << "scene.object_length = " << c.scene.object_length << "\n"
      << "scene.object_width = " << c.scene.object_width << "\n"
      << "scene.object_height = " << c.scene.object_height << "\n"
      << "scene.surface_spacing = " << c.scene.surface_spacing << "\n"
      << "scene.surface_rows = " << c.scene.surface_rows << "\n"
      << "scene.placement_margin = " << c.scene.placement_margin << "\n"
      << "agents.count = " << c.agents.count << "\n"
      << "agents.ring_radius = " << c.agents.ring_radius << "\n"
      << "agents.sensor_range = " << c.agents.sensor_range << "\n"
      << "agents.angular_resolution = " << c.agents.angular_resolution << "\n"
      << "oracle.center_sigma = " << c.oracle.center_sigma << "\n"
      << "oracle.score_flip_rate = " << c.oracle.score_flip_rate << "\n"
      << "oracle.bg_clutter_rate = " << c.oracle.bg_clutter_rate << "\n"
      << "clustering.epsilon_point = " << c.clustering.epsilon_point << "\n"
      << "clustering.fg_threshold = " << c.clustering.fg_threshold << "\n"
      << "clustering.min_cluster_points = " << c.clustering.min_cluster_points
      << "\n"
      << "packing.zeta = " << c.packing.zeta << "\n"
      << "packing.lambda_s = " << c.packing.lambda_s << "\n"
      << "packing.lambda_d = " << c.packing.lambda_d << "\n"
      << "packing.kde_bandwidth = " << c.packing.kde_bandwidth << "\n"
      << "packing.proposal_center_sigma = "
      << c.packing.proposal_noise.center_sigma << "\n"
      << "packing.proposal_size_sigma = " << c.packing.proposal_noise.size_sigma
      << "\n"
      << "packing.proposal_yaw_sigma = " << c.packing.proposal_noise.yaw_sigma
      << "\n"
      << "packing.half_precision = " << (c.packing.half_precision ? "true" : "false")
      << "\n"
      << "packing.transmit_scores = "
      << (c.packing.transmit_scores ? "true" : "false") << "\n"
      << "channel.latency_s = " << c.channel.latency_s << "\n"
      << "channel.pos_noise_sigma = " << c.channel.pos_noise_sigma << "\n"
      << "channel.heading_noise_sigma = " << c.channel.heading_noise_sigma
      << "\n"
      << "channel.bandwidth_cap_log2 = "
      << (c.channel.bandwidth_cap_log2
              ? std::to_string(*c.channel.bandwidth_cap_log2)
              : std::string("none"))
      << "\n"
      << "channel.all_to_all = " << (c.channel.all_to_all ? "true" : "false")
      << "\n"
      << "aggregation.epsilon_agg = " << c.aggregation.epsilon_agg << "\n"
      << "robustness.pose_correction = "
      << (c.robustness.pose_correction ? "true" : "false") << "\n"
      << "robustness.latency_compensation = "
      << (c.robustness.latency_compensation ? "true" : "false") << "\n"
      << "robustness.epsilon_pose = " << c.robustness.epsilon_pose << "\n"
      << "robustness.epsilon_latency_lo = " << c.robustness.latency.epsilon_lo
      << "\n"
      << "robustness.epsilon_latency_hi = " << c.robustness.latency.epsilon_hi
      << "\n"
      << "eval.spo_max_points = " << c.eval.spo_max_points << "\n"
      << "eval.spe_ratio = " << c.eval.spe_ratio << "\n"
      << "sir.feature_dim = " << c.sir.feature_dim << "\n"
      << "sir.layers = " << c.sir.layers << "\n"
      << "run.frames = " << c.frames << "\n"
      << "run.dt = " << c.dt << "\n"
      << "run.warmup_frames = " << c.warmup_frames << "\n"
      << "run.master_seed = " << c.master_seed << "\n";
  return out.str();
}

}  // namespace pcsim
