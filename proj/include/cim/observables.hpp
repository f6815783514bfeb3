// Quadrature-sign readout (success rates), quadrature densities, purity and
// photon-number moments.
//
// Quadrature convention: dimensionless x with oscillator eigenfunctions
//   psi_n(x) = (2^n n! sqrt(pi))^(-1/2) H_n(x) exp(-x^2 / 2),
// so a coherent state |alpha> with real alpha is centred at x = sqrt(2) alpha.
// x = 0 is assigned to spin up.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cim/fock.hpp"

namespace cim {

// Half-line overlap integrals of oscillator eigenfunctions:
//   plus(m, m')  = int_0^inf  psi_m psi_m' dx
//   minus(m, m') = int_-inf^0 psi_m psi_m' dx
class HermiteHalfTable {
 public:
  explicit HermiteHalfTable(int cutoff);

  int cutoff() const { return cutoff_; }
  double plus(int m, int mp) const { return plus_[static_cast<std::size_t>(m) * cutoff_ + mp]; }
  double minus(int m, int mp) const { return minus_[static_cast<std::size_t>(m) * cutoff_ + mp]; }
  // Row-major cutoff x cutoff matrix for the given spin.
  std::span<const double> matrix(int sign) const { return sign >= 0 ? plus_ : minus_; }

 private:
  int cutoff_;
  std::vector<double> plus_;
  std::vector<double> minus_;
};

// Closed-form entry from the eigenfunction values and slopes at the origin.
double hermite_half_integral(int m, int mp, int sign);

// Same entry via the explicit Hermite series and half-line Gaussian moments,
// summed in log space. Alternating terms cancel catastrophically beyond
// levels of about 20; kept as an independent cross-check for small levels.
double hermite_half_series(int m, int mp, int sign);

// Shared immutable table for a cutoff.
const HermiteHalfTable& hermite_half_table(int cutoff);

using SpinConfig = std::vector<int>;  // entries +1 / -1

// <psi| (x)_i Lambda^{sigma_i} |psi> by sequential per-mode contraction, clamped
// to [0, 1]. Throws std::invalid_argument for unnormalized states.
double config_probability(const MultiModeState& state, const SpinConfig& config, const HermiteHalfTable& table);
// Unclamped value.
double config_probability_raw(const MultiModeState& state, const SpinConfig& config,
                              const HermiteHalfTable& table);

double success_rate(const MultiModeState& state, std::span<const SpinConfig> ground_set,
                    const HermiteHalfTable& table);

// P(x_mode >= 0).
double sign_probability(const MultiModeState& state, int mode, const HermiteHalfTable& table);

// Oscillator eigenfunctions psi_0..psi_{count-1} at x (stable recurrence).
std::vector<double> oscillator_eigenfunctions(int count, double x);

// Marginal quadrature density of one mode on the given grid.
std::vector<double> quadrature_distribution(const MultiModeState& state, int mode, std::span<const double> xs);

double mean_photon(const MultiModeState& state, int mode);

struct PurityEstimate {
  double value;
  std::optional<double> standard_error;  // set when the ensemble was subsampled
  bool exact;
};

struct PurityOptions {
  // Exact Gram evaluation up to this many states. Above it, every pair among the
  // leading m states is used, with m the smallest value giving pair_budget pairs.
  std::size_t exact_limit = 2000;
  std::size_t pair_budget = 1000000;
};

// How many leading states of an ensemble of this size the estimator reads.
std::size_t purity_sample_size(std::size_t ensemble_size, const PurityOptions& options = {});

// Tr(rho^2) for rho = (1/N) sum_i |psi_i><psi_i| over normalized states.
PurityEstimate purity(std::span<const MultiModeState> states, const PurityOptions& options = {});
// Same, given only the leading purity_sample_size(ensemble_size) states.
PurityEstimate purity(std::span<const MultiModeState> leading, std::size_t ensemble_size,
                      const PurityOptions& options = {});

}  // namespace cim
