// Batch experiment driver: JSON configuration, initial-state preparation,
// ensemble execution and result files.
//
// Configuration grammar (JSON object, unknown keys rejected):
//
//   problem      "ring3" | {"builtin": name, "j12": x}
//                | {"matrix": [[...], ...]} | {"nodes": n, "edges": [[u, v, w?], ...]}
//   model        {"pump", "gamma", "g", "coupling_gain": parameter,
//                 "detuning": [...], "alpha_lock": x}
//                parameter = number | {"kind": "constant", "value": x}
//                          | {"kind": "linear" | "tanh", "start": x, "end": y, "sharpness": s}
//   cutoff       photon levels per mode
//   initial      {"kind": "vacuum" | "coherent" | "cat-product" | "entangled-cat", "alpha": x}
//   grid         {"t_max", "steps", "stride", "jumps": "interpolated" | "boundary"}
//   ensemble     {"trajectories", "seed", "workers"}
//   observables  subset of ["success", "purity", "photon", "sign"]
//   purity       {"every": k, "pair_budget", "exact_limit"}
//   errors       {"timestep": bool}
//   output       {"dir": path}
//   sweep        {"path": "dotted.key", "values": [...]}
//
// Schedules run over [0, t_max]. The default cat amplitude is sqrt(lambda(0)) / g(0).
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cim/fock.hpp"
#include "cim/ising.hpp"
#include "cim/mcwf.hpp"
#include "cim/model.hpp"

namespace cim {

// Every violation found, each prefixed by its field path.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct ParameterSpec {
  Schedule::Kind kind = Schedule::Kind::constant;
  double start = 0.0;
  double end = 0.0;
  double sharpness = 3.0;

  static ParameterSpec constant(double v) { return {Schedule::Kind::constant, v, v, 3.0}; }
  Schedule schedule(double horizon) const;
  friend bool operator==(const ParameterSpec&, const ParameterSpec&) = default;
};

struct ProblemSpec {
  enum class Kind { builtin, matrix, edges };
  Kind kind = Kind::builtin;
  std::string name = "ring3";
  std::optional<double> j12;          // builtin frustrated4 / ferro-weighted only
  int size = 0;                       // matrix dimension or node count
  std::vector<double> matrix;         // row-major
  std::vector<WeightedEdge> edges;

  friend bool operator==(const ProblemSpec&, const ProblemSpec&) = default;
};

enum class InitialKind { vacuum, coherent, cat_product, entangled_cat };

struct ExperimentConfig {
  ProblemSpec problem;
  ParameterSpec pump = ParameterSpec::constant(2.4);
  ParameterSpec gamma = ParameterSpec::constant(1.0);
  ParameterSpec g = ParameterSpec::constant(0.6);
  ParameterSpec coupling_gain = ParameterSpec::constant(1.0);
  std::vector<double> detuning;
  std::optional<double> alpha_lock;
  int cutoff = 16;
  InitialKind initial = InitialKind::vacuum;
  std::optional<double> alpha;
  double t_max = 8.0;
  int steps = 1200;
  int stride = 10;
  JumpPlacement jumps = JumpPlacement::interpolated;
  std::size_t trajectories = 1000;
  std::uint64_t seed = 1;
  int workers = 0;
  std::vector<std::string> observables{"success", "purity"};
  int purity_every = 10;  // every k-th checkpoint, plus the last
  std::size_t pair_budget = 1000000;
  std::size_t exact_limit = 2000;
  bool timestep_error = false;
  std::string output_dir = "out";
  std::optional<std::string> sweep_path;
  std::vector<nlohmann::json> sweep_values;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical form: every field written, keys sorted.
nlohmann::json serialize_config(const ExperimentConfig& config);

// The serialization without worker count and output directory; recorded in
// run metadata and hashed, so outputs do not depend on where or how wide a run was.
nlohmann::json experiment_document(const ExperimentConfig& config);

// Memory budget in MiB from CIM_MEMORY_BUDGET_MB, default 4096.
std::size_t memory_budget_mb();
// Rough peak bytes of a run: workspaces plus stored purity states.
std::size_t estimated_bytes(const ExperimentConfig& config);

ProblemInstance build_problem(const ProblemSpec& spec);
NetworkModel build_model(const ExperimentConfig& config, const ProblemInstance& problem);
TimeGrid build_grid(const ExperimentConfig& config);

struct PreparedState {
  MultiModeState state;
  double leakage = 0.0;  // worst single-mode truncation loss
  bool leakage_warning() const { return leakage > SingleModeVector::kLeakageWarning; }
};

// Equal superposition over modes of (|alpha> + |-alpha>) in one mode and vacuum
// elsewhere, normalized in the truncated space.
PreparedState build_entangled_cat(int modes, double alpha, int cutoff);
PreparedState prepare_initial_state(const ExperimentConfig& config, const FockGeometry& geometry);
double default_alpha(const ExperimentConfig& config);

struct ColumnSeries {
  std::string name;
  std::vector<std::optional<double>> mean;
  std::vector<std::optional<double>> standard_error;
};

struct RunRecord {
  std::vector<double> times;
  std::vector<ColumnSeries> columns;
  nlohmann::json metadata;
  double wall_seconds = 0.0;

  const ColumnSeries& column(const std::string& name) const;
};

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> output_dir;
};

ExperimentConfig apply_overrides(ExperimentConfig config, const RunOverrides& overrides);

// Validates the budget, runs the ensemble (and the half-step rerun when
// requested) and returns the reduced record.
RunRecord run_experiment(const ExperimentConfig& config);

// timeseries.csv, metadata.json and timing.json under `dir`.
void write_record(const RunRecord& record, const std::filesystem::path& dir);
std::string timeseries_csv(const RunRecord& record);

// One config per sweep value, each writing to <dir>/point_NNN.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& config);
// Runs every point and writes sweep_summary.csv to the base output directory.
std::vector<RunRecord> run_sweep(const ExperimentConfig& config);

std::string config_hash(const ExperimentConfig& config);

}  // namespace cim
