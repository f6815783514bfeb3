#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "cim/ising.hpp"

using namespace cim;

namespace {

// Exhaustive check that `ground` holds exactly the minimizers.
bool ground_set_is_exact(const ProblemInstance& p, const GroundSet& ground) {
  const int M = p.modes();
  double lowest = 1e300;
  for (std::size_t idx = 0; idx < (std::size_t{1} << M); ++idx)
    lowest = std::min(lowest, energy(config_from_index(idx, M), p));
  if (std::abs(lowest - ground.energy) > 1e-12) return false;
  std::size_t members = 0;
  for (std::size_t idx = 0; idx < (std::size_t{1} << M); ++idx) {
    const auto cfg = config_from_index(idx, M);
    const bool in = std::find(ground.configs.begin(), ground.configs.end(), cfg) != ground.configs.end();
    const double e = energy(cfg, p);
    if (in && std::abs(e - lowest) > 1e-12) return false;
    if (!in && !(e > lowest + 1e-12)) return false;
    members += in;
  }
  return members == ground.degeneracy();
}

SpinConfig flipped(SpinConfig s) {
  for (auto& x : s) x = -x;
  return s;
}

}  // namespace

TEST_SUITE("ising") {
  TEST_CASE("energy examples") {
    const auto ring = ring_instance(3);
    CHECK(ring.J(0, 1) == 1.0);
    CHECK(ring.J(0, 2) == -1.0);
    CHECK(ring.J(1, 2) == -1.0);
    CHECK(energy({1, 1, -1}, ring) == -6.0);
    CHECK(energy({1, 1, 1}, ring) == 2.0);

    ProblemInstance free;
    free.J = CouplingMatrix(4);
    for (std::size_t idx = 0; idx < 16; ++idx) CHECK(energy(config_from_index(idx, 4), free) == 0.0);

    ProblemInstance field;
    field.J = CouplingMatrix(2);
    field.h = {0.5, -1.0};
    CHECK(energy({1, 1}, field) == 0.5);
    CHECK_THROWS_AS(energy({1, 1}, ring), std::invalid_argument);
  }

  TEST_CASE("global flip leaves the energy unchanged") {
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ProblemInstance p;
    p.J = CouplingMatrix(6);
    for (int i = 0; i < 6; ++i)
      for (int j = i + 1; j < 6; ++j) p.J.set(i, j, u(rng));
    for (std::size_t idx = 0; idx < 64; ++idx) {
      const auto cfg = config_from_index(idx, 6);
      CHECK(energy(cfg, p) == doctest::Approx(energy(flipped(cfg), p)).epsilon(1e-14));
    }
  }

  TEST_CASE("configuration indexing") {
    CHECK(config_from_index(0, 3) == SpinConfig{1, 1, 1});
    CHECK(config_from_index(1, 3) == SpinConfig{1, 1, -1});
    CHECK(config_from_index(4, 3) == SpinConfig{-1, 1, 1});
  }

  TEST_CASE("built-in ground sets are exact and flip-closed") {
    for (const auto& entry : builtin_instances()) {
      CAPTURE(entry.name);
      const auto p = entry.make();
      const auto g = brute_force_ground(p);
      CHECK(ground_set_is_exact(p, g));
      CHECK(g.configs == p.ground_set);
      CHECK(g.energy == p.ground_energy);
      for (const auto& cfg : g.configs)
        CHECK(std::find(g.configs.begin(), g.configs.end(), flipped(cfg)) != g.configs.end());
      CHECK(builtin_instance(entry.name).ground_set == p.ground_set);
    }
    CHECK_THROWS_AS(builtin_instance("nope"), std::invalid_argument);
  }

  TEST_CASE("ring ground states") {
    const auto ring3 = ring_instance(3);
    CHECK(ring3.ground_set == std::vector<SpinConfig>{{1, 1, -1}, {-1, -1, 1}});
    CHECK(ring3.ground_energy == -6.0);
    CHECK(ring_instance(4).ground_set.size() == 8);
    CHECK(ring_instance(5).ground_set.size() == 2);
    CHECK_THROWS(ring_instance(2));
  }

  TEST_CASE("uniform ferromagnet") {
    for (int M : {2, 5, 9}) {
      ProblemInstance p;
      p.J = CouplingMatrix(M);
      for (int i = 0; i < M; ++i)
        for (int j = i + 1; j < M; ++j) p.J.set(i, j, 0.7);
      const auto g = brute_force_ground(p);
      REQUIRE(g.degeneracy() == 2);
      CHECK(g.configs[0] == SpinConfig(M, 1));
      CHECK(g.configs[1] == SpinConfig(M, -1));
    }
  }

  TEST_CASE("four-mode instances") {
    const auto f = frustrated4_instance();
    CHECK(f.J(0, 0) == 0.0);
    CHECK(f.J(0, 1) == 0.295);
    CHECK(f.J(0, 2) == -0.4);
    CHECK(f.J(0, 3) == -0.2);
    CHECK(f.ground_set.size() == 2);
    CHECK(f.ground_energy == doctest::Approx(-2.19));
    CHECK(frustrated4_instance(0.3).ground_set.size() == 2);

    CHECK(ferro_weighted_instance().ground_set.size() == 2);
    CHECK(ferro_weighted_instance(-0.3).ground_set.size() == 4);
  }

  TEST_CASE("max-cut mapping") {
    const std::vector<WeightedEdge> single{{0, 1}};
    const auto one = maxcut_to_ising(2, single);
    CHECK(one.instance.J(0, 1) == -1.0);
    CHECK(one.instance.ground_set == std::vector<SpinConfig>{{1, -1}, {-1, 1}});
    CHECK(one.cut_size({1, -1}) == 1.0);

    const std::vector<WeightedEdge> triangle{{0, 1}, {1, 2}, {0, 2}};
    const auto tri = maxcut_to_ising(3, triangle);
    CHECK(tri.instance.ground_set.size() == 6);
    for (const auto& cfg : tri.instance.ground_set) CHECK(tri.cut_size(cfg) == 2.0);

    const auto five = maxcut5_problem();
    CHECK(five.instance.modes() == 5);
    CHECK(five.edges.size() == 5);
    const SpinConfig s14{1, -1, -1, 1, -1};
    CHECK(five.cut_size(s14) == 5.0);
    CHECK(std::find(five.instance.ground_set.begin(), five.instance.ground_set.end(), s14) !=
          five.instance.ground_set.end());
    CHECK(five.instance.ground_energy == -10.0);

    const std::vector<WeightedEdge> loop{{1, 1}};
    CHECK_THROWS_AS(maxcut_to_ising(3, loop), std::invalid_argument);
    const std::vector<WeightedEdge> outside{{0, 3}};
    CHECK_THROWS_AS(maxcut_to_ising(3, outside), std::invalid_argument);
    const std::vector<WeightedEdge> twice{{0, 1}, {1, 0}};
    CHECK_THROWS_AS(maxcut_to_ising(3, twice), std::invalid_argument);
    CHECK_THROWS_AS(one.cut_size({1}), std::invalid_argument);
  }

  TEST_CASE("cut size and Ising energy are affinely equivalent") {
    std::mt19937_64 rng(52);
    std::uniform_real_distribution<double> w(0.1, 2.0);
    std::bernoulli_distribution keep(0.5);
    for (int nodes = 2; nodes <= 12; ++nodes) {
      std::vector<WeightedEdge> edges;
      for (int u = 0; u < nodes; ++u)
        for (int v = u + 1; v < nodes; ++v)
          if (keep(rng)) edges.push_back({u, v, w(rng)});
      if (edges.empty()) edges.push_back({0, 1, 1.0});
      const auto mc = maxcut_to_ising(nodes, edges);
      // f = W/2 - E/4 with E counting ordered pairs.
      const double base = mc.cut_size(SpinConfig(nodes, 1)) + energy(SpinConfig(nodes, 1), mc.instance) / 4.0;
      double worst = 0.0, best_cut = 0.0;
      for (std::size_t idx = 0; idx < (std::size_t{1} << nodes); ++idx) {
        const auto cfg = config_from_index(idx, nodes);
        worst = std::max(worst, std::abs(mc.cut_size(cfg) + energy(cfg, mc.instance) / 4.0 - base));
        best_cut = std::max(best_cut, mc.cut_size(cfg));
      }
      CHECK(worst < 1e-12);
      for (const auto& cfg : mc.instance.ground_set) CHECK(mc.cut_size(cfg) == doctest::Approx(best_cut));
    }
  }

  TEST_CASE("relabeling modes permutes the energy") {
    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int M = 7;
    ProblemInstance p;
    p.J = CouplingMatrix(M);
    p.h.resize(M);
    for (int i = 0; i < M; ++i) {
      p.h[i] = u(rng);
      for (int j = i + 1; j < M; ++j) p.J.set(i, j, u(rng));
    }
    std::vector<int> perm(M);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ProblemInstance q;
    q.J = CouplingMatrix(M);
    q.h.resize(M);
    for (int i = 0; i < M; ++i) {
      q.h[perm[i]] = p.h[i];
      for (int j = i + 1; j < M; ++j) q.J.set(perm[i], perm[j], p.J(i, j));
    }
    for (std::size_t idx = 0; idx < (std::size_t{1} << M); ++idx) {
      const auto cfg = config_from_index(idx, M);
      SpinConfig moved(M);
      for (int i = 0; i < M; ++i) moved[perm[i]] = cfg[i];
      CHECK(energy(moved, q) == doctest::Approx(energy(cfg, p)).epsilon(1e-13));
    }
  }

  TEST_CASE("ground search limits") {
    ProblemInstance big;
    big.J = CouplingMatrix(kMaxBruteForceModes + 1);
    CHECK_THROWS_AS(brute_force_ground(big), std::invalid_argument);

    ProblemInstance field;
    field.J = CouplingMatrix(3);
    field.h = {1.0, -1.0, 0.5};
    const auto g = brute_force_ground(field);
    CHECK(g.configs == std::vector<SpinConfig>{{1, -1, 1}});
    CHECK(ground_set_is_exact(field, g));
  }
}
