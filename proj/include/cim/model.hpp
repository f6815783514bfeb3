// Network model of coherently coupled degenerate parametric oscillators:
// parameter schedules, collapse operators and the non-Hermitian generator.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cim/fock.hpp"

namespace cim {

// Scalar parameter as a function of time on [0, horizon].
class Schedule {
 public:
  enum class Kind { constant, linear, tanh_ramp };

  Schedule() = default;
  static Schedule constant(double value);
  static Schedule linear(double start, double end, double horizon);
  // start + (end - start) * tanh(s t / horizon): rapid initial change, within
  // 1% of the end value's distance for s >= 3.
  static Schedule tanh_ramp(double start, double end, double horizon, double sharpness);

  double operator()(double t) const;

  Kind kind() const { return kind_; }
  double start() const { return start_; }
  double end() const { return end_; }
  double horizon() const { return horizon_; }
  double sharpness() const { return sharpness_; }
  bool is_constant() const { return kind_ == Kind::constant || start_ == end_; }
  // Smallest value attained on [0, horizon].
  double minimum() const;

  friend bool operator==(const Schedule&, const Schedule&) = default;

 private:
  Kind kind_ = Kind::constant;
  double start_ = 0.0;
  double end_ = 0.0;
  double horizon_ = 0.0;
  double sharpness_ = 0.0;
};

// Symmetric coupling matrix with zero diagonal, row-major.
class CouplingMatrix {
 public:
  CouplingMatrix() = default;
  explicit CouplingMatrix(int size);
  CouplingMatrix(int size, std::vector<double> entries);

  int size() const { return size_; }
  double operator()(int i, int j) const { return entries_[static_cast<std::size_t>(i) * size_ + j]; }
  void set(int i, int j, double value);  // sets (i,j) and (j,i)
  std::span<const double> entries() const { return entries_; }
  // Throws std::invalid_argument unless symmetric with zero diagonal.
  void validate() const;

  friend bool operator==(const CouplingMatrix&, const CouplingMatrix&) = default;

 private:
  int size_ = 0;
  std::vector<double> entries_;
};

struct InstantRates {
  double pump;       // lambda
  double gamma;      // one-photon loss
  double g;          // two-photon loss amplitude
  double coupling;   // J_coef
};

struct NetworkModel {
  FockGeometry geometry;
  CouplingMatrix coupling;
  Schedule pump = Schedule::constant(0.0);
  Schedule gamma = Schedule::constant(0.0);
  Schedule two_photon = Schedule::constant(0.0);
  Schedule coupling_gain = Schedule::constant(1.0);
  std::vector<double> detuning;  // empty means zero for every mode
  // When set, the pump follows (alpha_lock * g(t))^2 so sqrt(lambda)/g is fixed.
  std::optional<double> alpha_lock;

  InstantRates rates(double t) const;
  double detuning_of(int mode) const { return detuning.empty() ? 0.0 : detuning[mode]; }
  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

enum class JumpKind { one_photon, two_photon, coupling };

// C = amplitude * a_i (one_photon), amplitude * a_i^2 (two_photon) or
// amplitude * (a_i - sign a_j) (coupling).
struct JumpOperator {
  JumpKind kind;
  int i;
  int j = -1;
  double sign = 0.0;
  double amplitude;

  std::string tag() const;
};

class JumpOperatorSet {
 public:
  explicit JumpOperatorSet(std::vector<JumpOperator> ops) : ops_(std::move(ops)) {}

  const std::vector<JumpOperator>& operators() const { return ops_; }
  std::size_t size() const { return ops_.size(); }

  // <psi|C_n^dag C_n|psi> for every operator (psi need not be normalized).
  std::vector<double> weights(std::span<const cplx> psi, const FockGeometry& geometry) const;
  // C_n psi, unnormalized.
  MultiModeState apply(std::size_t n, const MultiModeState& psi) const;

 private:
  std::vector<JumpOperator> ops_;
};

// One-photon: sqrt(2 gamma) a_i; two-photon: g a_i^2; coupling: one operator per
// ordered pair (i, j), i != j, with J_ij != 0. Zero-rate channels are omitted.
JumpOperatorSet build_jump_set(const NetworkModel& model, double t);

// Applies G = -i H_eff (hbar = 1):
//   G = sum_i [(-i Delta_i - gamma - J_coef sum_j |J_ij|) n_i - g^2/2 n_i(n_i-1)]
//     + lambda/2 sum_i (a_i^dag2 - a_i^2) + J_coef sum_{i<j} J_ij (a_i^dag a_j + a_j^dag a_i)
// in one pass over the state.
// Spaces up to this dimension use a precomputed sparse form of the generator.
inline constexpr std::size_t kSparseGeneratorLimit = std::size_t{1} << 17;

class EffectiveGenerator {
 public:
  enum class Form { automatic, structured };
  explicit EffectiveGenerator(const NetworkModel& model, Form form = Form::automatic);

  // out = G(t) in. `out` must not alias `in`.
  void apply(std::span<const cplx> in, std::span<cplx> out, double t) const;
  const NetworkModel& model() const { return model_; }

 private:
  struct Pair {
    int i, j;
    double coupling;
  };
  struct Csr {
    std::vector<std::uint32_t> row_ptr, col;
    std::vector<double> val;
  };
  // Precomputed form for small spaces, where the row kernel's per-row overhead
  // dominates: G = -(gamma A + J_coef B + g^2/2 C) - i E + lambda/2 P + J_coef H.
  struct SparseForm {
    std::vector<double> number, weighted, pair_count, detuned;  // A, B, C, E per basis state
    Csr pump, hop;
  };
  void apply_sparse(std::span<const cplx> in, std::span<cplx> out, double t) const;

  NetworkModel model_;
  std::shared_ptr<const SparseForm> sparse_;
  std::vector<Pair> pairs_;
  std::vector<double> loss_weight_;  // sum_j |J_ij|
  std::vector<double> sqrt_int_;     // sqrt(n), n <= cutoff + 1
  std::vector<double> up2_;          // sqrt(n (n-1))
  std::vector<double> down2_;        // sqrt((n+1)(n+2)), zero where n+2 >= cutoff
};

MultiModeState apply_effective_hamiltonian(const MultiModeState& state, const NetworkModel& model,
                                           double t);

// Characteristic coherent amplitude sqrt(lambda) / g.
double alpha_from(double lambda, double g);

struct ReducedParameters {
  double lambda;
  double g;
};
// lambda = |gbar epsilon| / (gamma1 gamma2), g = sqrt(gbar^2 / (2 gamma1 gamma2)).
ReducedParameters physical_to_reduced(double gbar, double epsilon, double gamma1, double gamma2);

}  // namespace cim
