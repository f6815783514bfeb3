#include "cim/ising.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace cim {

double energy(const SpinConfig& config, const ProblemInstance& instance) {
  const int M = instance.modes();
  if (config.size() != static_cast<std::size_t>(M))
    throw std::invalid_argument("configuration length " + std::to_string(config.size()) + " does not match " +
                                std::to_string(M) + " modes");
  double e = 0.0;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j)
      if (i != j) e -= instance.J(i, j) * config[i] * config[j];
  if (!instance.h.empty())
    for (int i = 0; i < M; ++i) e -= instance.h[i] * config[i];
  return e;
}

SpinConfig config_from_index(std::size_t index, int modes) {
  SpinConfig s(static_cast<std::size_t>(modes));
  for (int i = 0; i < modes; ++i) s[i] = (index >> (modes - 1 - i)) & 1u ? -1 : 1;
  return s;
}

GroundSet brute_force_ground(const ProblemInstance& instance, double tolerance) {
  const int M = instance.modes();
  if (M < 1) throw std::invalid_argument("instance has no spins");
  if (M > kMaxBruteForceModes)
    throw std::invalid_argument("brute force limited to " + std::to_string(kMaxBruteForceModes) + " spins");
  if (!instance.h.empty() && instance.h.size() != static_cast<std::size_t>(M))
    throw std::invalid_argument("field length does not match spin count");
  const auto h = [&](int i) { return instance.h.empty() ? 0.0 : instance.h[i]; };

  double scale = 1.0;
  for (double v : instance.J.entries()) scale += std::abs(v);
  for (double v : instance.h) scale += std::abs(v);
  const double tol = tolerance * scale;

  // Gray-code walk with incremental local fields; candidates are re-scored exactly.
  SpinConfig s(static_cast<std::size_t>(M), 1);
  std::vector<double> field(static_cast<std::size_t>(M), 0.0);  // sum_j J_ij s_j
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j)
      if (i != j) field[i] += instance.J(i, j);
  double e = energy(s, instance);
  double best = e;
  std::vector<std::size_t> candidates{0};
  const std::size_t total = std::size_t{1} << M;
  for (std::size_t k = 1; k < total; ++k) {
    const int bit = std::countr_zero(k);
    const int mode = M - 1 - bit;
    const int old = s[mode];
    e += 4.0 * old * field[mode] + 2.0 * h(mode) * old;
    s[mode] = -old;
    for (int j = 0; j < M; ++j)
      if (j != mode) field[j] -= 2.0 * instance.J(j, mode) * old;
    if (e < best - tol) {
      best = e;
      candidates.clear();
    }
    if (e <= best + tol) candidates.push_back(k ^ (k >> 1));
  }

  GroundSet out{{}, 0.0};
  double exact_best = INFINITY;
  std::vector<std::pair<std::size_t, double>> scored;
  for (auto idx : candidates) {
    const double v = energy(config_from_index(idx, M), instance);
    scored.emplace_back(idx, v);
    exact_best = std::min(exact_best, v);
  }
  std::sort(scored.begin(), scored.end());
  for (const auto& [idx, v] : scored)
    if (v <= exact_best + tol) out.configs.push_back(config_from_index(idx, M));
  out.energy = exact_best;
  return out;
}

ProblemInstance& solve(ProblemInstance& instance) {
  auto g = brute_force_ground(instance);
  instance.ground_set = std::move(g.configs);
  instance.ground_energy = g.energy;
  return instance;
}

double MaxCutProblem::cut_size(const SpinConfig& config) const {
  if (config.size() != static_cast<std::size_t>(instance.modes()))
    throw std::invalid_argument("configuration length does not match node count");
  double f = 0.0;
  for (const auto& e : edges) f += e.weight * (1.0 - config[e.u] * config[e.v]) / 2.0;
  return f;
}

MaxCutProblem maxcut_to_ising(int nodes, std::span<const WeightedEdge> edges, std::string label) {
  if (nodes < 1) throw std::invalid_argument("graph needs at least one node");
  CouplingMatrix J(nodes);
  for (const auto& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= nodes || e.v >= nodes)
      throw std::invalid_argument("edge endpoint out of range");
    if (e.u == e.v) throw std::invalid_argument("self-loop on node " + std::to_string(e.u));
    if (J(e.u, e.v) != 0.0) throw std::invalid_argument("duplicate edge");
    J.set(e.u, e.v, -e.weight);
  }
  MaxCutProblem p{{J, {}, std::move(label), {}, 0.0}, {edges.begin(), edges.end()}};
  solve(p.instance);
  return p;
}

ProblemInstance ring_instance(int modes) {
  if (modes < 3) throw std::invalid_argument("ring needs at least three modes");
  CouplingMatrix J(modes);
  for (int i = 0; i < modes; ++i) J.set(i, (i + 1) % modes, -1.0);
  J.set(0, 1, 1.0);
  ProblemInstance p{J, {}, "ring" + std::to_string(modes), {}, 0.0};
  return solve(p);
}

ProblemInstance frustrated4_instance(double j12) {
  ProblemInstance p{CouplingMatrix(4, {0.0, j12, -0.4, -0.2,  //
                                       j12, 0.0, -0.2, -0.1,  //
                                       -0.4, -0.2, 0.0, -0.1,  //
                                       -0.2, -0.1, -0.1, 0.0}),
                    {},
                    "frustrated4",
                    {},
                    0.0};
  return solve(p);
}

ProblemInstance ferro_weighted_instance(double j12) {
  // Reconstruction: the frustrated4 magnitudes with ferromagnetic off-(1,2) signs.
  ProblemInstance p{CouplingMatrix(4, {0.0, j12, 0.4, 0.2,  //
                                       j12, 0.0, 0.2, 0.1,  //
                                       0.4, 0.2, 0.0, 0.1,  //
                                       0.2, 0.1, 0.1, 0.0}),
                    {},
                    "ferro-weighted",
                    {},
                    0.0};
  return solve(p);
}

MaxCutProblem maxcut5_problem() {
  // Reconstruction: bipartite between {0, 3} and {1, 2, 4} with edge (0, 4) removed.
  const std::vector<WeightedEdge> edges{{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}};
  return maxcut_to_ising(5, edges, "maxcut5");
}

const std::vector<CatalogEntry>& builtin_instances() {
  static const std::vector<CatalogEntry> catalog{
      {"ring3", "3-spin ring, J=-1 with J_12 flipped to +1", [] { return ring_instance(3); }},
      {"ring4", "4-spin ring, J=-1 with J_12 flipped to +1", [] { return ring_instance(4); }},
      {"ring5", "5-spin ring, J=-1 with J_12 flipped to +1", [] { return ring_instance(5); }},
      {"frustrated4", "4-spin frustrated weighted instance, J_12=0.295", [] { return frustrated4_instance(); }},
      {"ferro-weighted", "4-spin ferromagnetic weighted instance, J_12=-0.295",
       [] { return ferro_weighted_instance(); }},
      {"maxcut5", "5-node unit-weight max-cut graph, optimum 5", [] { return maxcut5_problem().instance; }},
  };
  return catalog;
}

ProblemInstance builtin_instance(const std::string& name) {
  for (const auto& e : builtin_instances())
    if (e.name == name) return e.make();
  throw std::invalid_argument("unknown built-in instance '" + name + "'");
}

}  // namespace cim
