// Truncated multi-mode Fock space and strided application of mode operators.
//
// Basis ordering: a flat index k encodes occupation digits (n_0, ..., n_{M-1})
// with mode 0 the slowest-varying digit, so
//     k = sum_i n_i * N^(M-1-i).
// Raising operators annihilate any component pushed above level N-1.
#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace cim {

using cplx = std::complex<double>;

class FockGeometry {
 public:
  FockGeometry(int modes, int cutoff);

  int modes() const { return modes_; }
  int cutoff() const { return cutoff_; }
  std::size_t dimension() const { return dimension_; }
  // Distance in the flat index between neighbouring levels of `mode`.
  std::size_t stride(int mode) const { return strides_[mode]; }

  int digit(std::size_t index, int mode) const {
    return static_cast<int>((index / strides_[mode]) % cutoff_);
  }
  std::vector<int> decode(std::size_t index) const;
  std::size_t encode(std::span<const int> digits) const;

  friend bool operator==(const FockGeometry&, const FockGeometry&) = default;

 private:
  int modes_;
  int cutoff_;
  std::size_t dimension_;
  std::vector<std::size_t> strides_;
};

// Amplitude vector over a FockGeometry. The cached squared norm is dropped
// whenever mutable access to the amplitudes is taken.
class MultiModeState {
 public:
  explicit MultiModeState(FockGeometry geometry);
  MultiModeState(FockGeometry geometry, std::vector<cplx> amplitudes);

  static MultiModeState basis(const FockGeometry& geometry, std::span<const int> digits);
  static MultiModeState vacuum(const FockGeometry& geometry);

  const FockGeometry& geometry() const { return geometry_; }
  std::size_t size() const { return amplitudes_.size(); }

  std::span<const cplx> amplitudes() const { return amplitudes_; }
  std::span<cplx> amplitudes() {
    norm2_.reset();
    return amplitudes_;
  }
  const cplx& operator[](std::size_t k) const { return amplitudes_[k]; }

  double norm2() const;
  bool is_normalized(double tol = 1e-10) const;
  // Rescales to unit norm; throws on a zero vector.
  void normalize();
  MultiModeState normalized() const;

 private:
  FockGeometry geometry_;
  std::vector<cplx> amplitudes_;
  mutable std::optional<double> norm2_;
};

// Single-mode truncated amplitudes plus the probability mass the untruncated
// state carried at levels >= cutoff.
struct SingleModeVector {
  std::vector<cplx> amplitudes;
  double leakage = 0.0;

  static constexpr double kLeakageWarning = 1e-2;
  bool leakage_warning() const { return leakage > kLeakageWarning; }
};

SingleModeVector coherent_state(cplx alpha, int cutoff);
// Normalized |alpha> + |-alpha>; odd levels are exactly zero.
SingleModeVector cat_state(cplx alpha, int cutoff);
SingleModeVector number_state(int n, int cutoff);

MultiModeState product_state(std::span<const SingleModeVector> factors);
MultiModeState product_state(std::span<const std::vector<cplx>> factors);

enum class SingleModeKind { lower, raise, number, lower2, raise2, number_falling };

struct SingleModeOp {
  SingleModeKind kind;
  int mode;
};

MultiModeState apply_single_mode(const MultiModeState& state, SingleModeOp op);

enum class TwoModeKind {
  hop,        // a_i^dag a_j
  exchange,   // a_i^dag a_j + a_j^dag a_i
  loss,       // L^dag L with L = a_i - sign * a_j
};

struct TwoModeOp {
  TwoModeKind kind;
  int i;
  int j;
  double sign = 1.0;
};

MultiModeState apply_two_mode(const MultiModeState& state, TwoModeOp op);

// <a|b>, conjugate-linear in the first argument.
cplx inner(const MultiModeState& a, const MultiModeState& b);
cplx inner(std::span<const cplx> a, std::span<const cplx> b);
double norm2(std::span<const cplx> v);

// <psi| a_i^dag a_j |psi> without forming the image vector.
cplx expect_hop(std::span<const cplx> psi, const FockGeometry& geometry, int i, int j);

// Per-mode <n_i> and <n_i (n_i - 1)> (unnormalized expectation sums).
struct PhotonMoments {
  std::vector<double> number;
  std::vector<double> falling;
};
PhotonMoments photon_moments(std::span<const cplx> psi, const FockGeometry& geometry);

// Reduced density matrix of one mode, cutoff x cutoff, row-major.
std::vector<cplx> reduced_density(const MultiModeState& state, int mode);

}  // namespace cim
