#include "cim/fock.hpp"

#include <cmath>
#include <string>

namespace cim {

namespace {

void require_same_geometry(const FockGeometry& a, const FockGeometry& b) {
  if (!(a == b)) throw std::invalid_argument("geometry mismatch");
}

void require_mode(const FockGeometry& g, int mode) {
  if (mode < 0 || mode >= g.modes())
    throw std::out_of_range("mode index " + std::to_string(mode) + " outside [0, " +
                            std::to_string(g.modes()) + ")");
}

// Visits every fiber along `mode`: fiber element n sits at start + n * stride.
template <typename F>
void for_each_fiber(const FockGeometry& g, int mode, F&& f) {
  const std::size_t s = g.stride(mode);
  const std::size_t block = s * static_cast<std::size_t>(g.cutoff());
  for (std::size_t outer = 0; outer < g.dimension(); outer += block)
    for (std::size_t inner = 0; inner < s; ++inner) f(outer + inner, s);
}

}  // namespace

FockGeometry::FockGeometry(int modes, int cutoff) : modes_(modes), cutoff_(cutoff) {
  if (modes < 1) throw std::invalid_argument("mode count must be >= 1");
  if (cutoff < 2) throw std::invalid_argument("cutoff must be >= 2");
  strides_.assign(static_cast<std::size_t>(modes), 1);
  dimension_ = 1;
  for (int i = modes - 1; i >= 0; --i) {
    strides_[i] = dimension_;
    const std::size_t next = dimension_ * static_cast<std::size_t>(cutoff);
    if (next / static_cast<std::size_t>(cutoff) != dimension_)
      throw std::overflow_error("Fock dimension overflows size_t");
    dimension_ = next;
  }
}

std::vector<int> FockGeometry::decode(std::size_t index) const {
  if (index >= dimension_) throw std::out_of_range("Fock index out of range");
  std::vector<int> digits(static_cast<std::size_t>(modes_));
  for (int i = 0; i < modes_; ++i) digits[i] = digit(index, i);
  return digits;
}

std::size_t FockGeometry::encode(std::span<const int> digits) const {
  if (digits.size() != static_cast<std::size_t>(modes_))
    throw std::invalid_argument("digit count does not match mode count");
  std::size_t k = 0;
  for (int i = 0; i < modes_; ++i) {
    if (digits[i] < 0 || digits[i] >= cutoff_) throw std::out_of_range("occupation outside cutoff");
    k += static_cast<std::size_t>(digits[i]) * strides_[i];
  }
  return k;
}

MultiModeState::MultiModeState(FockGeometry geometry)
    : geometry_(std::move(geometry)), amplitudes_(geometry_.dimension()) {}

MultiModeState::MultiModeState(FockGeometry geometry, std::vector<cplx> amplitudes)
    : geometry_(std::move(geometry)), amplitudes_(std::move(amplitudes)) {
  if (amplitudes_.size() != geometry_.dimension())
    throw std::invalid_argument("amplitude count does not match Fock dimension");
}

MultiModeState MultiModeState::basis(const FockGeometry& geometry, std::span<const int> digits) {
  MultiModeState s(geometry);
  s.amplitudes_[geometry.encode(digits)] = 1.0;
  return s;
}

MultiModeState MultiModeState::vacuum(const FockGeometry& geometry) {
  MultiModeState s(geometry);
  s.amplitudes_[0] = 1.0;
  return s;
}

double MultiModeState::norm2() const {
  if (!norm2_) norm2_ = cim::norm2(amplitudes_);
  return *norm2_;
}

bool MultiModeState::is_normalized(double tol) const { return std::abs(norm2() - 1.0) < tol; }

void MultiModeState::normalize() {
  const double n2 = norm2();
  if (!(n2 > 0.0)) throw std::domain_error("cannot normalize a zero state");
  const double scale = 1.0 / std::sqrt(n2);
  for (auto& a : amplitudes_) a *= scale;
  norm2_.reset();
}

MultiModeState MultiModeState::normalized() const {
  MultiModeState copy = *this;
  copy.normalize();
  return copy;
}

namespace {

// Coherent-state coefficients exp(-|a|^2/2) a^n / sqrt(n!) for n < cutoff, and
// the probability mass at n >= cutoff summed directly from the series.
std::pair<std::vector<cplx>, double> coherent_series(cplx alpha, int cutoff) {
  std::vector<cplx> c(static_cast<std::size_t>(cutoff));
  const double mean = std::norm(alpha);
  cplx term = std::exp(-0.5 * mean);
  c[0] = term;
  for (int n = 1; n < cutoff; ++n) {
    term *= alpha / std::sqrt(static_cast<double>(n));
    c[n] = term;
  }
  double tail = 0.0;
  for (int n = cutoff;; ++n) {
    term *= alpha / std::sqrt(static_cast<double>(n));
    const double p = std::norm(term);
    tail += p;
    if (n > mean + 10.0 && p <= 1e-30 * (tail + 1e-300)) break;
    if (p == 0.0 && n > mean) break;
  }
  return {std::move(c), tail};
}

}  // namespace

SingleModeVector coherent_state(cplx alpha, int cutoff) {
  if (cutoff < 2) throw std::invalid_argument("cutoff must be >= 2");
  auto [c, tail] = coherent_series(alpha, cutoff);
  const double kept = norm2(c);
  const double scale = 1.0 / std::sqrt(kept);
  for (auto& x : c) x *= scale;
  return {std::move(c), tail / (kept + tail)};
}

SingleModeVector cat_state(cplx alpha, int cutoff) {
  if (cutoff < 2) throw std::invalid_argument("cutoff must be >= 2");
  auto c = coherent_series(alpha, cutoff).first;
  // |a> + |-a> doubles even levels and cancels odd ones.
  double kept = 0.0;
  for (int n = 0; n < cutoff; ++n) {
    if (n % 2 == 1) {
      c[n] = 0.0;
    } else {
      c[n] *= 2.0;
      kept += std::norm(c[n]);
    }
  }
  // Untruncated norm^2 of |a> + |-a> is 2(1 + exp(-2|a|^2)).
  const double total = 2.0 * (1.0 + std::exp(-2.0 * std::norm(alpha)));
  const double tail = std::max(0.0, total - kept);
  const double scale = 1.0 / std::sqrt(kept);
  for (auto& x : c) x *= scale;
  return {std::move(c), tail / total};
}

SingleModeVector number_state(int n, int cutoff) {
  if (n < 0 || n >= cutoff) throw std::out_of_range("number state outside cutoff");
  SingleModeVector v;
  v.amplitudes.assign(static_cast<std::size_t>(cutoff), 0.0);
  v.amplitudes[n] = 1.0;
  return v;
}

MultiModeState product_state(std::span<const std::vector<cplx>> factors) {
  if (factors.empty()) throw std::invalid_argument("product_state needs at least one factor");
  const auto cutoff = factors.front().size();
  for (const auto& f : factors)
    if (f.size() != cutoff) throw std::invalid_argument("factors have different cutoffs");
  FockGeometry g(static_cast<int>(factors.size()), static_cast<int>(cutoff));
  // Build by successive Kronecker products; mode 0 ends up slowest.
  std::vector<cplx> acc{1.0};
  for (const auto& f : factors) {
    std::vector<cplx> next(acc.size() * cutoff);
    for (std::size_t a = 0; a < acc.size(); ++a)
      for (std::size_t n = 0; n < cutoff; ++n) next[a * cutoff + n] = acc[a] * f[n];
    acc = std::move(next);
  }
  return MultiModeState(g, std::move(acc));
}

MultiModeState product_state(std::span<const SingleModeVector> factors) {
  std::vector<std::vector<cplx>> raw;
  raw.reserve(factors.size());
  for (const auto& f : factors) raw.push_back(f.amplitudes);
  return product_state(std::span<const std::vector<cplx>>(raw));
}

MultiModeState apply_single_mode(const MultiModeState& state, SingleModeOp op) {
  const auto& g = state.geometry();
  require_mode(g, op.mode);
  const int N = g.cutoff();
  MultiModeState out(g);
  auto dst = out.amplitudes();
  auto src = state.amplitudes();
  for_each_fiber(g, op.mode, [&](std::size_t start, std::size_t s) {
    for (int n = 0; n < N; ++n) {
      const std::size_t k = start + n * s;
      const double dn = n;
      switch (op.kind) {
        case SingleModeKind::lower:
          if (n + 1 < N) dst[k] = std::sqrt(dn + 1.0) * src[k + s];
          break;
        case SingleModeKind::raise:
          if (n >= 1) dst[k] = std::sqrt(dn) * src[k - s];
          break;
        case SingleModeKind::number:
          dst[k] = dn * src[k];
          break;
        case SingleModeKind::lower2:
          if (n + 2 < N) dst[k] = std::sqrt((dn + 1.0) * (dn + 2.0)) * src[k + 2 * s];
          break;
        case SingleModeKind::raise2:
          if (n >= 2) dst[k] = std::sqrt(dn * (dn - 1.0)) * src[k - 2 * s];
          break;
        case SingleModeKind::number_falling:
          dst[k] = dn * (dn - 1.0) * src[k];
          break;
      }
    }
  });
  return out;
}

namespace {

// (a_i^dag a_j psi)_k accumulated into out with weight w.
void accumulate_hop(std::span<const cplx> src, std::span<cplx> dst, const FockGeometry& g, int i,
                    int j, cplx w) {
  const int N = g.cutoff();
  const std::size_t si = g.stride(i), sj = g.stride(j);
  for (std::size_t k = 0; k < g.dimension(); ++k) {
    const int ni = g.digit(k, i), nj = g.digit(k, j);
    if (ni >= 1 && nj + 1 < N)
      dst[k] += w * std::sqrt(static_cast<double>(ni) * (nj + 1)) * src[k - si + sj];
  }
}

}  // namespace

MultiModeState apply_two_mode(const MultiModeState& state, TwoModeOp op) {
  const auto& g = state.geometry();
  require_mode(g, op.i);
  require_mode(g, op.j);
  if (op.i == op.j) throw std::invalid_argument("two-mode operator needs distinct modes");
  MultiModeState out(g);
  auto dst = out.amplitudes();
  auto src = state.amplitudes();
  switch (op.kind) {
    case TwoModeKind::hop:
      accumulate_hop(src, dst, g, op.i, op.j, 1.0);
      break;
    case TwoModeKind::exchange:
      accumulate_hop(src, dst, g, op.i, op.j, 1.0);
      accumulate_hop(src, dst, g, op.j, op.i, 1.0);
      break;
    case TwoModeKind::loss: {
      // (a_i^dag - s a_j^dag)(a_i - s a_j) = n_i + n_j - s (a_i^dag a_j + a_j^dag a_i)
      for (std::size_t k = 0; k < g.dimension(); ++k)
        dst[k] = static_cast<double>(g.digit(k, op.i) + g.digit(k, op.j)) * src[k];
      accumulate_hop(src, dst, g, op.i, op.j, -op.sign);
      accumulate_hop(src, dst, g, op.j, op.i, -op.sign);
      break;
    }
  }
  return out;
}

cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw std::invalid_argument("vector length mismatch");
  cplx acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += std::conj(a[k]) * b[k];
  return acc;
}

cplx inner(const MultiModeState& a, const MultiModeState& b) {
  require_same_geometry(a.geometry(), b.geometry());
  return inner(a.amplitudes(), b.amplitudes());
}

double norm2(std::span<const cplx> v) {
  // Fixed-size blocks keep the summation order independent of any threading.
  constexpr std::size_t kBlock = 4096;
  double total = 0.0;
  for (std::size_t b = 0; b < v.size(); b += kBlock) {
    const std::size_t e = std::min(v.size(), b + kBlock);
    double part = 0.0;
    for (std::size_t k = b; k < e; ++k) part += v[k].real() * v[k].real() + v[k].imag() * v[k].imag();
    total += part;
  }
  return total;
}

cplx expect_hop(std::span<const cplx> psi, const FockGeometry& g, int i, int j) {
  require_mode(g, i);
  require_mode(g, j);
  if (i == j) throw std::invalid_argument("expect_hop needs distinct modes");
  const int N = g.cutoff();
  const std::size_t si = g.stride(i), sj = g.stride(j);
  cplx acc = 0.0;
  for (std::size_t k = 0; k < g.dimension(); ++k) {
    const int ni = g.digit(k, i), nj = g.digit(k, j);
    if (ni >= 1 && nj + 1 < N)
      acc += std::conj(psi[k]) * std::sqrt(static_cast<double>(ni) * (nj + 1)) * psi[k - si + sj];
  }
  return acc;
}

PhotonMoments photon_moments(std::span<const cplx> psi, const FockGeometry& g) {
  const int M = g.modes();
  PhotonMoments m{std::vector<double>(M, 0.0), std::vector<double>(M, 0.0)};
  for (int i = 0; i < M; ++i) {
    // Marginal level populations, then the two moments.
    std::vector<double> pop(g.cutoff(), 0.0);
    for_each_fiber(g, i, [&](std::size_t start, std::size_t s) {
      for (int n = 0; n < g.cutoff(); ++n) pop[n] += std::norm(psi[start + n * s]);
    });
    for (int n = 0; n < g.cutoff(); ++n) {
      m.number[i] += n * pop[n];
      m.falling[i] += n * (n - 1.0) * pop[n];
    }
  }
  return m;
}

std::vector<cplx> reduced_density(const MultiModeState& state, int mode) {
  const auto& g = state.geometry();
  require_mode(g, mode);
  const int N = g.cutoff();
  std::vector<cplx> rho(static_cast<std::size_t>(N) * N);
  auto psi = state.amplitudes();
  for_each_fiber(g, mode, [&](std::size_t start, std::size_t s) {
    for (int n = 0; n < N; ++n)
      for (int m = 0; m < N; ++m) rho[n * N + m] += psi[start + n * s] * std::conj(psi[start + m * s]);
  });
  return rho;
}

}  // namespace cim
