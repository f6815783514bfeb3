// Ising and max-cut problem instances with an exhaustive ground-state oracle.
//
// Energies sum over ordered pairs, E = -sum_{i != j} J_ij s_i s_j - sum_j h_j s_j,
// so each unordered pair contributes twice.
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cim/model.hpp"
#include "cim/observables.hpp"

namespace cim {

struct ProblemInstance {
  CouplingMatrix J{1};
  std::vector<double> h;  // empty means zero field
  std::string label;
  std::vector<SpinConfig> ground_set;  // filled by brute_force_ground
  double ground_energy = 0.0;

  int modes() const { return J.size(); }
};

double energy(const SpinConfig& config, const ProblemInstance& instance);

struct GroundSet {
  std::vector<SpinConfig> configs;  // ascending in bit order, mode 0 most significant
  double energy;
  std::size_t degeneracy() const { return configs.size(); }
};

inline constexpr int kMaxBruteForceModes = 24;

// Exhaustive minimization; ties within `tolerance` (relative to the energy
// scale) count as degenerate.
GroundSet brute_force_ground(const ProblemInstance& instance, double tolerance = 1e-9);

// Runs the oracle and stores the result in the instance.
ProblemInstance& solve(ProblemInstance& instance);

// Spin configuration encoded by the bits of `index`, mode 0 most significant, bit 1 is spin down.
SpinConfig config_from_index(std::size_t index, int modes);

struct WeightedEdge {
  int u;
  int v;
  double weight = 1.0;

  friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

struct MaxCutProblem {
  ProblemInstance instance;
  std::vector<WeightedEdge> edges;

  double cut_size(const SpinConfig& config) const;
};

// Zero-based node labels. J_uv = -w_uv on edges.
MaxCutProblem maxcut_to_ising(int nodes, std::span<const WeightedEdge> edges, std::string label = "maxcut");

ProblemInstance ring_instance(int modes);
ProblemInstance frustrated4_instance(double j12 = 0.295);
ProblemInstance ferro_weighted_instance(double j12 = -0.295);
MaxCutProblem maxcut5_problem();

struct CatalogEntry {
  std::string name;
  std::string description;
  std::function<ProblemInstance()> make;
};

// Built-in instances, ground sets already solved.
const std::vector<CatalogEntry>& builtin_instances();
// Throws std::invalid_argument for unknown names.
ProblemInstance builtin_instance(const std::string& name);

}  // namespace cim
