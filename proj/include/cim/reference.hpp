// Independent oracles for the test suites: a dense master-equation integrator,
// the classical mean-field equations and numeric half-line quadrature.
//
// The master-equation right-hand side is assembled term by term from ladder
// operators and does not reuse the jump set or the effective generator.
#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cim/fock.hpp"
#include "cim/mcwf.hpp"
#include "cim/model.hpp"
#include "cim/observables.hpp"

namespace cim::reference {

inline constexpr std::size_t kMaxDenseDimension = 4096;

class DensityMatrix {
 public:
  explicit DensityMatrix(FockGeometry geometry);
  DensityMatrix(FockGeometry geometry, Eigen::MatrixXcd entries);
  static DensityMatrix pure(const MultiModeState& state);

  const FockGeometry& geometry() const { return geometry_; }
  const Eigen::MatrixXcd& entries() const { return entries_; }
  Eigen::MatrixXcd& entries() { return entries_; }

  cplx trace() const { return entries_.trace(); }
  double purity() const;
  double hermiticity_error() const;
  double min_eigenvalue() const;

  // Row-major cutoff x cutoff reduced density of one mode.
  Eigen::MatrixXcd reduced(int mode) const;
  double mean_photon(int mode) const;
  double sign_probability(int mode, const HermiteHalfTable& table) const;
  double config_probability(const SpinConfig& config, const HermiteHalfTable& table) const;

 private:
  FockGeometry geometry_;
  Eigen::MatrixXcd entries_;
};

// Classical RK4 on the full master equation; returns rho at every checkpoint.
// Throws std::invalid_argument above kMaxDenseDimension and NumericalFailure
// when the trace drifts by more than 1e-6.
std::vector<DensityMatrix> integrate_master_equation(const DensityMatrix& initial, const NetworkModel& model,
                                                     const TimeGrid& grid);

// da_i/dt for the mean-field equations at time t.
std::vector<cplx> mean_field_rhs(std::span<const cplx> alpha, const NetworkModel& model, double t);

// RK4 on the mean-field equations; amplitudes at every checkpoint. Throws
// NumericalFailure once any |alpha| exceeds 1e6.
std::vector<std::vector<cplx>> integrate_mean_field(std::span<const cplx> initial, const NetworkModel& model,
                                                    const TimeGrid& grid);

// Adaptive Gauss-Kronrod value of the half-line integral of |sum_n c_n psi_n(x)|^2
// (sign > 0: x >= 0, sign < 0: x <= 0). Cutoff at most 64.
double quadrature_oracle(std::span<const cplx> amplitudes, int sign);

// Half-line integral of psi_m psi_m' by the same quadrature.
double overlap_oracle(int m, int mp, int sign);

}  // namespace cim::reference
