// Command-line driver for ensemble experiments.
//
// Exit status: 0 success, 1 unexpected error, 2 invalid configuration or
// arguments, 3 numerical failure.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cim/experiment.hpp"
#include "cim/ising.hpp"
#include "cim/mcwf.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;

  cim::ExperimentConfig load() const {
    return cim::apply_overrides(cim::load_config(config), {seed, workers, out});
  }
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("config", flags.config, "JSON experiment configuration")->required();
  cmd->add_option("--seed", flags.seed, "override ensemble.seed");
  cmd->add_option("--workers", flags.workers, "override ensemble.workers (0 = all threads)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", flags.out, "override output.dir");
}

void print_summary(const cim::RunRecord& rec, const std::string& dir) {
  std::cout << dir << ": " << rec.times.size() << " checkpoints";
  for (const auto& c : rec.columns) {
    if (c.name != "success" && c.name != "purity") continue;
    for (std::size_t k = rec.times.size(); k-- > 0;)
      if (c.mean[k]) {
        std::printf(", final %s %.6f", c.name.c_str(), *c.mean[k]);
        if (c.standard_error[k]) std::printf(" +- %.6f", *c.standard_error[k]);
        break;
      }
  }
  std::printf(", %.2f s\n", rec.wall_seconds);
}

int run(const CommonFlags& flags) {
  const auto config = flags.load();
  if (config.sweep_path) throw cim::ConfigError({"sweep: config has a sweep section, use the sweep subcommand"});
  const auto rec = cim::run_experiment(config);
  cim::write_record(rec, config.output_dir);
  print_summary(rec, config.output_dir);
  return 0;
}

int sweep(const CommonFlags& flags) {
  const auto config = flags.load();
  if (!config.sweep_path) throw cim::ConfigError({"sweep: config has no sweep section"});
  const auto points = cim::expand_sweep(config);
  const auto records = cim::run_sweep(config);
  for (std::size_t i = 0; i < records.size(); ++i) print_summary(records[i], points[i].output_dir);
  std::cout << config.output_dir << "/sweep_summary.csv\n";
  return 0;
}

int validate(const CommonFlags& flags) {
  const auto config = flags.load();
  const auto points = cim::expand_sweep(config);
  std::cout << "valid: " << points.size() << (points.size() == 1 ? " run" : " runs") << ", hash "
            << cim::config_hash(config) << "\n"
            << cim::serialize_config(config).dump(2) << "\n";
  return 0;
}

int instances() {
  for (const auto& entry : cim::builtin_instances()) {
    const auto p = entry.make();
    std::printf("%-15s M=%d  ground energy %-8g degeneracy %zu  %s\n", entry.name.c_str(), p.modes(),
                p.ground_energy, p.ground_set.size(), entry.description.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum-trajectory simulator for coherent Ising machine networks"};
  app.require_subcommand(1);
  CommonFlags run_flags, sweep_flags, validate_flags;
  auto* run_cmd = app.add_subcommand("run", "run one ensemble and write timeseries.csv and metadata.json");
  add_common(run_cmd, run_flags);
  auto* sweep_cmd = app.add_subcommand("sweep", "run every point of the sweep section");
  add_common(sweep_cmd, sweep_flags);
  auto* validate_cmd = app.add_subcommand("validate", "check a configuration and print its canonical form");
  add_common(validate_cmd, validate_flags);
  auto* instances_cmd = app.add_subcommand("instances", "list built-in problem instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*run_cmd) return run(run_flags);
    if (*sweep_cmd) return sweep(sweep_flags);
    if (*validate_cmd) return validate(validate_flags);
    if (*instances_cmd) return instances();
  } catch (const cim::ConfigError& e) {
    for (const auto& v : e.violations()) std::cerr << "error: " << v << "\n";
    return kExitInvalid;
  } catch (const cim::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
