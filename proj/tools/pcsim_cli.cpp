// Scenario runner for the point-cluster collaboration simulator.
//
// Subcommands:
//   run              execute one scenario, write metrics + detections
//   sweep            run a parameter sweep, write an aggregated CSV table
//   validate-config  parse and validate a config file
//   dump-scene       export the generated scene's ego observation as CSV
//
// Exit codes: 0 success, 2 config error, 3 runtime degeneracy warnings
// promoted by --strict.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "pcsim/pipeline.hpp"

namespace {

pcsim::ScenarioConfig load_or_default(const std::string& config_path,
                                      std::optional<std::uint64_t> seed) {
  pcsim::ScenarioConfig cfg;
  if (!config_path.empty()) cfg = pcsim::load_config(config_path);
  if (seed) cfg.master_seed = *seed;
  pcsim::validate_config(cfg);
  return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cluster collaborative perception simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool strict = false;
  app.add_option("--config", config_path, "Scenario config file");
  app.add_option("--seed", seed, "Override run.master_seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--strict", strict,
               "Exit 3 when degeneracy warnings occurred");

  auto* cmd_run = app.add_subcommand("run", "Execute one scenario");
  auto* cmd_sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  std::string sweep_arg;
  int reps = 1;
  cmd_sweep->add_option("--sweep", sweep_arg,
                        "Parameter sweep as PATH=v1,v2,...")
      ->required();
  cmd_sweep->add_option("--reps", reps, "Repetitions per sweep value");
  auto* cmd_validate =
      app.add_subcommand("validate-config", "Check a config file");
  auto* cmd_dump = app.add_subcommand("dump-scene",
                                      "Export the ego observation as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load_or_default(config_path, seed);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path out(out_dir);

    if (cmd_validate->parsed()) {
      std::cout << "config ok\n";
      return 0;
    }

    if (cmd_dump->parsed()) {
      const auto agents = pcsim::make_ring_agents(cfg);
      const auto scene = pcsim::generate_scene(
          cfg.scene, agents, pcsim::derive_seed(cfg.master_seed, 1));
      const auto cloud = pcsim::observe(scene, agents[0], cfg.oracle,
                                        pcsim::derive_seed(cfg.master_seed, 3));
      write_file(out / "scene.csv", pcsim::cloud_to_csv(cloud));
      std::cout << "wrote " << (out / "scene.csv").string() << " ("
                << cloud.points.size() << " points)\n";
      return 0;
    }

    if (cmd_run->parsed()) {
      const auto result = pcsim::run_scenario(cfg);
      write_file(out / "metrics.csv",
                 pcsim::metrics_csv_header() +
                     pcsim::metrics_csv_row("run", result.metrics));
      write_file(out / "detections.csv", result.detections_csv);
      write_file(out / "manifest.txt", result.manifest);
      std::cout << pcsim::metrics_csv_header()
                << pcsim::metrics_csv_row("run", result.metrics);
      if (strict && result.metrics.degeneracy_warnings > 0) {
        std::cerr << result.metrics.degeneracy_warnings
                  << " degeneracy warning(s)\n";
        return 3;
      }
      return 0;
    }

    if (cmd_sweep->parsed()) {
      const auto eq = sweep_arg.find('=');
      if (eq == std::string::npos)
        throw pcsim::ConfigError("--sweep expects PATH=v1,v2,...");
      pcsim::SweepSpec spec;
      spec.parameter = sweep_arg.substr(0, eq);
      std::string values = sweep_arg.substr(eq + 1);
      std::size_t pos = 0;
      while (pos <= values.size()) {
        const auto comma = values.find(',', pos);
        spec.values.push_back(values.substr(
            pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      spec.repetitions = reps;
      {  // every value must parse before we spend time running
        pcsim::ScenarioConfig probe = cfg;
        for (const auto& v : spec.values)
          pcsim::config_set(probe, spec.parameter, v);
      }
      const auto rows = pcsim::run_sweep(cfg, spec);
      std::string table = pcsim::metrics_csv_header();
      for (const auto& row : rows)
        table += pcsim::metrics_csv_row(row.value, row.mean);
      write_file(out / "sweep.csv", table);
      std::cout << table;
      return 0;
    }
  } catch (const pcsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
