// Command-line front end: run single scenarios, r-sweeps and system
// comparisons from JSON configs. Exit codes: 0 success, 2 config error,
// 3 divergence (partial outputs are still written).

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tikpd/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

tikpd::json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw tikpd::ConfigError("config", "cannot open config file: " + path);
  try {
    return tikpd::json::parse(in);
  } catch (const tikpd::json::parse_error& e) {
    throw tikpd::ConfigError("config",
                             "config file " + path + " is not valid JSON: " + e.what());
  }
}

tikpd::json load_with_overrides(const std::string& path,
                                const std::vector<std::string>& overrides) {
  tikpd::json config = load_config(path);
  for (const std::string& assignment : overrides)
    tikpd::apply_override(config, assignment);
  return config;
}

int finish_run(const tikpd::ScenarioResult& result,
               const std::filesystem::path& out_dir) {
  tikpd::write_scenario_outputs(result, out_dir);
  if (result.failed) {
    std::cerr << "error: " << result.error << " (partial outputs written)\n";
    return kExitDiverged;
  }
  std::cout << "wrote " << (out_dir / (result.config.output_prefix + "_metrics.csv")).string()
            << " and " << (out_dir / (result.config.output_prefix + "_summary.json")).string()
            << "\n";
  return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::vector<std::string>& overrides) {
  const tikpd::json config = load_with_overrides(config_path, overrides);
  const tikpd::ScenarioResult result = tikpd::run_scenario(config);
  return finish_run(result, out_dir);
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& overrides, int jobs) {
  const tikpd::json config = load_with_overrides(config_path, overrides);
  const tikpd::SweepConfig sweep = tikpd::parse_sweep_config(config);
  const tikpd::SweepResult result = tikpd::sweep_r(sweep.base, sweep.r_values, jobs);

  int exit_code = kExitOk;
  for (const tikpd::ScenarioResult& run : result.runs) {
    tikpd::write_scenario_outputs(run, out_dir);
    if (run.failed) {
      std::cerr << "error in " << run.config.output_prefix << ": " << run.error << "\n";
      exit_code = kExitDiverged;
    }
  }
  const auto table = std::filesystem::path(out_dir) /
                     (sweep.base.output_prefix + "_sweep.csv");
  tikpd::write_text_file(table, result.table_csv);
  std::cout << "wrote " << table.string() << " (" << result.runs.size() << " runs)\n";
  return exit_code;
}

int cmd_compare(const std::string& config_path, const std::string& out_dir,
                const std::vector<std::string>& overrides) {
  const tikpd::json config = load_with_overrides(config_path, overrides);
  const tikpd::CompareConfig compare = tikpd::parse_compare_config(config);
  const tikpd::CompareResult result =
      tikpd::compare_systems(compare.runs, compare.names);

  int exit_code = kExitOk;
  for (const tikpd::ScenarioResult& run : result.runs) {
    tikpd::write_scenario_outputs(run, out_dir);
    if (run.failed) {
      std::cerr << "error in " << run.config.output_prefix << ": " << run.error << "\n";
      exit_code = kExitDiverged;
    }
  }
  const auto table = std::filesystem::path(out_dir) /
                     (compare.output_prefix + "_compare.csv");
  tikpd::write_text_file(table, result.table_csv);
  std::cout << "wrote " << table.string() << "\n";
  return exit_code;
}

int cmd_presets(const std::string& out_dir, bool write_files) {
  for (const std::string& name : tikpd::preset_names()) {
    std::cout << name << "\n";
    if (write_files) {
      const auto path = std::filesystem::path(out_dir) / (name + ".json");
      tikpd::write_text_file(path, tikpd::preset_config(name).dump(2) + "\n");
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and diagnostics for Tikhonov-regularized primal-dual flows"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "run one scenario from a config file");
  run->add_option("--config", config_path, "scenario config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--set", overrides, "override a config entry, dotted path KEY=VALUE");

  auto* sweep = app.add_subcommand("sweep", "run the scenario once per r value");
  sweep->add_option("--config", config_path, "sweep config (JSON with r_values)")->required();
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--set", overrides, "override a config entry, dotted path KEY=VALUE");
  sweep->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);

  auto* compare = app.add_subcommand("compare", "run several systems on one problem");
  compare->add_option("--config", config_path, "compare config (JSON with runs)")->required();
  compare->add_option("--out", out_dir, "output directory");
  compare->add_option("--set", overrides, "override a config entry, dotted path KEY=VALUE");

  bool presets_write = false;
  auto* presets = app.add_subcommand("presets", "list built-in scenarios");
  presets->add_option("--out", out_dir, "also write the preset configs here")
      ->each([&](const std::string&) { presets_write = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, overrides);
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir, overrides, jobs);
    if (compare->parsed()) return cmd_compare(config_path, out_dir, overrides);
    if (presets->parsed()) return cmd_presets(out_dir, presets_write);
  } catch (const tikpd::ConfigError& e) {
    std::cerr << "config error [" << e.key() << "]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const tikpd::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
