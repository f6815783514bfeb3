#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cim/ising.hpp"
#include "cim/reference.hpp"
#include "dense.hpp"

using namespace cim;
using reference::DensityMatrix;

namespace {

NetworkModel network(int N, CouplingMatrix J, double pump, double gamma, double g) {
  const int M = J.size();
  return NetworkModel{.geometry = FockGeometry(M, N),
                      .coupling = std::move(J),
                      .pump = Schedule::constant(pump),
                      .gamma = Schedule::constant(gamma),
                      .two_photon = Schedule::constant(g),
                      .coupling_gain = Schedule::constant(1.0),
                      .detuning = {},
                      .alpha_lock = std::nullopt};
}

DensityMatrix mixture(const std::vector<MultiModeState>& states, const std::vector<double>& weights) {
  DensityMatrix rho(states.front().geometry());
  for (std::size_t k = 0; k < states.size(); ++k)
    rho.entries() += weights[k] * dense::to_vec(states[k]) * dense::to_vec(states[k]).adjoint();
  return rho;
}

}  // namespace

TEST_SUITE("reference") {
  TEST_CASE("damped cavity") {
    const auto model = network(4, CouplingMatrix(1), 0.0, 1.0, 0.0);
    const std::vector<int> one{1};
    const TimeGrid grid(3.0, 600, 20);
    const auto rhos = reference::integrate_master_equation(
        DensityMatrix::pure(MultiModeState::basis(model.geometry, one)), model, grid);
    REQUIRE(rhos.size() == grid.checkpoint_count());
    double worst = 0.0;
    const auto times = grid.checkpoint_times();
    for (std::size_t c = 0; c < rhos.size(); ++c)
      worst = std::max(worst, std::abs(rhos[c].mean_photon(0) - std::exp(-2.0 * times[c])));
    CHECK(worst < 1e-6);
  }

  TEST_CASE("pump alone is unitary") {
    std::mt19937_64 rng(61);
    auto model = network(10, CouplingMatrix(1), 1.0, 0.0, 0.0);
    model.detuning = {0.4};
    const auto rho0 = mixture({dense::random_state(model.geometry, rng), dense::random_state(model.geometry, rng),
                               MultiModeState::vacuum(model.geometry)},
                              {0.5, 0.3, 0.2});
    const auto rhos = reference::integrate_master_equation(rho0, model, TimeGrid(2.0, 800, 100));
    for (const auto& r : rhos) {
      CHECK(std::abs(r.purity() - rho0.purity()) < 1e-8);
      CHECK(std::abs(r.trace() - 1.0) < 1e-8);
    }
  }

  TEST_CASE("single oscillator above threshold") {
    // Frozen from this integrator; an independent adaptive-step integration
    // (tolerance 1e-12) of the same equation gives 3.63830510606.
    const auto model = network(16, CouplingMatrix(1), 2.4, 1.0, 0.6);
    const TimeGrid grid(8.0, 1200, 100);
    const auto rhos =
        reference::integrate_master_equation(DensityMatrix::pure(MultiModeState::vacuum(model.geometry)), model, grid);
    const double n_final = rhos.back().mean_photon(0);
    CHECK(n_final == doctest::Approx(3.638305106).epsilon(1e-8));
    // Quantum fluctuations keep it below, but within ten percent of, the
    // mean-field steady state (pump - loss) / g^2.
    const double mean_field = (2.4 - 1.0) / 0.36;
    CHECK(n_final < mean_field);
    CHECK(std::abs(n_final - mean_field) / mean_field < 0.10);
    for (const auto& r : rhos) {
      CHECK(r.min_eigenvalue() >= -1e-8);
      CHECK(r.hermiticity_error() < 1e-10);
      CHECK(r.sign_probability(0, hermite_half_table(16)) == doctest::Approx(0.5).epsilon(1e-10));
    }
  }

  TEST_CASE("coupled pair stays a density matrix") {
    CouplingMatrix J(2);
    J.set(0, 1, -1.0);
    const auto model = network(5, J, 2.4, 1.0, 0.6);
    const auto rhos = reference::integrate_master_equation(DensityMatrix::pure(MultiModeState::vacuum(model.geometry)),
                                                           model, TimeGrid(4.0, 600, 60));
    for (const auto& r : rhos) {
      CHECK(r.min_eigenvalue() >= -1e-8);
      CHECK(r.hermiticity_error() < 1e-10);
      CHECK(std::abs(r.trace() - 1.0) < 1e-8);
    }
  }

  TEST_CASE("dimension guard and breakdown") {
    const auto big = network(65, CouplingMatrix(2), 1.0, 1.0, 0.5);
    CHECK_THROWS_AS(reference::integrate_master_equation(DensityMatrix(big.geometry), big, TimeGrid(1.0, 10)),
                    std::invalid_argument);
    const auto stiff = network(6, CouplingMatrix(1), 0.0, 1e4, 0.0);
    const std::vector<int> top{5};
    CHECK_THROWS_AS(reference::integrate_master_equation(DensityMatrix::pure(MultiModeState::basis(stiff.geometry, top)),
                                                         stiff, TimeGrid(1.0, 20)),
                    NumericalFailure);
    CHECK_THROWS(DensityMatrix(FockGeometry(1, 3), Eigen::MatrixXcd::Identity(4, 4)));
  }

  TEST_CASE("density-matrix readout matches the state-vector readout") {
    std::mt19937_64 rng(62);
    const FockGeometry g(3, 4);
    const auto& t = hermite_half_table(4);
    const auto psi = dense::random_state(g, rng);
    const auto rho = DensityMatrix::pure(psi);
    CHECK(rho.purity() == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t idx = 0; idx < 8; ++idx) {
      const auto cfg = config_from_index(idx, 3);
      CHECK(rho.config_probability(cfg, t) == doctest::Approx(config_probability_raw(psi, cfg, t)).epsilon(1e-12));
    }
    for (int mode = 0; mode < 3; ++mode) {
      CHECK(rho.mean_photon(mode) == doctest::Approx(mean_photon(psi, mode)).epsilon(1e-12));
      CHECK(rho.sign_probability(mode, t) == doctest::Approx(sign_probability(psi, mode, t)).epsilon(1e-12));
    }
  }

  TEST_CASE("mean-field fixed point") {
    const auto model = network(2, CouplingMatrix(1), 2.4, 1.0, 0.6);
    const std::vector<cplx> start{0.3};
    const TimeGrid grid(40.0, 8000, 8000);
    const auto traj = reference::integrate_mean_field(start, model, grid);
    const cplx alpha = traj.back()[0];
    CHECK(std::abs(alpha * alpha - 1.4 / 0.36) < 1e-6);
    CHECK(std::abs((alpha * alpha).real() - 3.889) < 1e-3);
    CHECK(std::abs(reference::mean_field_rhs(traj.back(), model, 40.0)[0]) < 1e-10);
  }

  TEST_CASE("mean-field decay below threshold") {
    const auto model = network(2, CouplingMatrix(1), 0.5, 1.0, 0.6);
    const std::vector<cplx> start{1.0};
    const auto traj = reference::integrate_mean_field(start, model, TimeGrid(30.0, 3000, 3000));
    CHECK(std::abs(traj.back()[0]) < 1e-5);
  }

  TEST_CASE("mean-field ring settles into a ground state") {
    const auto ring = ring_instance(3);
    const auto model = network(2, ring.J, 2.4, 1.0, 0.6);
    std::mt19937_64 rng(63);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (int rep = 0; rep < 10; ++rep) {
      const std::vector<cplx> start{noise(rng), noise(rng), noise(rng)};
      const auto final = reference::integrate_mean_field(start, model, TimeGrid(30.0, 3000, 3000)).back();
      SpinConfig spins;
      for (const auto& a : final) spins.push_back(a.real() >= 0 ? 1 : -1);
      CHECK(std::find(ring.ground_set.begin(), ring.ground_set.end(), spins) != ring.ground_set.end());
    }
  }

  TEST_CASE("mean-field divergence guard") {
    const auto model = network(2, CouplingMatrix(1), 5.0, 1.0, 0.0);
    const std::vector<cplx> start{1.0};
    CHECK_THROWS_AS(reference::integrate_mean_field(start, model, TimeGrid(10.0, 1000)), NumericalFailure);
  }

  TEST_CASE("quadrature oracle") {
    const std::vector<cplx> ground{1.0};
    CHECK(reference::quadrature_oracle(ground, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(reference::overlap_oracle(0, 1, 1) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-12));
    const std::vector<cplx> mix{1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
    CHECK(reference::quadrature_oracle(mix, 1) ==
          doctest::Approx(0.5 + 1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-12));

    std::mt19937_64 rng(64);
    for (int N : {8, 16, 40}) {
      const auto psi = dense::random_state(FockGeometry(1, N), rng);
      const double up = reference::quadrature_oracle(psi.amplitudes(), 1);
      const double down = reference::quadrature_oracle(psi.amplitudes(), -1);
      CHECK(up + down == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(std::abs(up - config_probability(psi, {1}, hermite_half_table(N))) < 1e-8);
    }
    const std::vector<cplx> too_long(65, 0.1);
    CHECK_THROWS(reference::quadrature_oracle(too_long, 1));
  }
}
