#include "cim/observables.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>


namespace cim {

namespace {

long double log_factorial(int n) { return std::lgamma(static_cast<long double>(n) + 1.0L); }

void require_normalized(const MultiModeState& state) {
  if (!state.is_normalized(1e-8)) throw std::invalid_argument("state must be normalized");
}

// out = (I (x) ... (x) A (x) ... (x) I) in, with A acting on `mode`.
void apply_mode_matrix(std::span<const cplx> in, std::span<cplx> out, const FockGeometry& g, int mode,
                       std::span<const double> A) {
  const int N = g.cutoff();
  const std::size_t s = g.stride(mode);
  const std::size_t block = s * static_cast<std::size_t>(N);
  std::fill(out.begin(), out.end(), cplx{0.0});
  for (std::size_t outer = 0; outer < g.dimension(); outer += block)
    for (int n = 0; n < N; ++n) {
      cplx* y = out.data() + outer + n * s;
      for (int m = 0; m < N; ++m) {
        const double a = A[static_cast<std::size_t>(n) * N + m];
        if (a == 0.0) continue;
        const cplx* x = in.data() + outer + m * s;
        for (std::size_t k = 0; k < s; ++k) y[k] += a * x[k];
      }
    }
}

}  // namespace

double hermite_half_series(int m, int mp, int sign) {
  if (m < 0 || mp < 0) throw std::invalid_argument("negative level");
  if (m > 170 || mp > 170) throw std::overflow_error("Hermite series limited to levels <= 170");
  const long double ln2 = std::numbers::ln2_v<long double>;
  const long double prefactor = 0.5L * (log_factorial(m) + log_factorial(mp)) - 0.5L * (m + mp) * ln2 -
                                0.5L * std::log(std::numbers::pi_v<long double>) - ln2;
  long double sum = 0.0L;
  for (int p = 0; 2 * p <= m; ++p)
    for (int l = 0; 2 * l <= mp; ++l) {
      const int k = m + mp - 2 * p - 2 * l;
      const long double log_term = prefactor + k * ln2 - log_factorial(p) - log_factorial(m - 2 * p) -
                                   log_factorial(l) - log_factorial(mp - 2 * l) +
                                   std::lgamma(0.5L * (k + 1));
      int parity = (p + l) % 2;
      if (sign < 0 && k % 2 == 1) parity ^= 1;
      const long double term = std::exp(log_term);
      sum += parity ? -term : term;
    }
  return static_cast<double>(sum);
}

namespace {

// psi_n(0) and psi_n'(0) for n < count.
std::pair<std::vector<long double>, std::vector<long double>> origin_values(int count) {
  std::vector<long double> value(static_cast<std::size_t>(count) + 1, 0.0L), slope(count, 0.0L);
  value[0] = std::pow(std::numbers::pi_v<long double>, -0.25L);
  for (int n = 2; n <= count; n += 2) value[n] = -std::sqrt(static_cast<long double>(n - 1) / n) * value[n - 2];
  for (int n = 0; n < count; ++n)
    slope[n] = (n > 0 ? std::sqrt(n / 2.0L) * value[n - 1] : 0.0L) - std::sqrt((n + 1) / 2.0L) * value[n + 1];
  return {std::move(value), std::move(slope)};
}

long double half_line_entry(int m, int mp, int sign, const std::vector<long double>& value,
                            const std::vector<long double>& slope) {
  // Even products integrate to half the full-line overlap; odd ones follow from
  // psi_n'' = (x^2 - 2n - 1) psi_n integrated over [0, inf).
  if ((m + mp) % 2 == 0) return m == mp ? 0.5L : 0.0L;
  const long double plus = -(value[m] * slope[mp] - value[mp] * slope[m]) / (2.0L * (m - mp));
  return sign >= 0 ? plus : -plus;
}

}  // namespace

double hermite_half_integral(int m, int mp, int sign) {
  if (m < 0 || mp < 0) throw std::invalid_argument("negative level");
  const auto [value, slope] = origin_values(std::max(m, mp) + 1);
  return static_cast<double>(half_line_entry(m, mp, sign, value, slope));
}

HermiteHalfTable::HermiteHalfTable(int cutoff) : cutoff_(cutoff) {
  if (cutoff < 1) throw std::invalid_argument("cutoff must be >= 1");
  const std::size_t n2 = static_cast<std::size_t>(cutoff) * cutoff;
  plus_.resize(n2);
  minus_.resize(n2);
  const auto [value, slope] = origin_values(cutoff);
  for (int m = 0; m < cutoff; ++m)
    for (int mp = m; mp < cutoff; ++mp) {
      const auto a = static_cast<double>(half_line_entry(m, mp, +1, value, slope));
      const auto b = static_cast<double>(half_line_entry(m, mp, -1, value, slope));
      plus_[m * cutoff + mp] = plus_[mp * cutoff + m] = a;
      minus_[m * cutoff + mp] = minus_[mp * cutoff + m] = b;
    }
}

const HermiteHalfTable& hermite_half_table(int cutoff) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<HermiteHalfTable>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[cutoff];
  if (!slot) slot = std::make_unique<HermiteHalfTable>(cutoff);
  return *slot;
}

double config_probability_raw(const MultiModeState& state, const SpinConfig& config, const HermiteHalfTable& table) {
  const auto& g = state.geometry();
  if (config.size() != static_cast<std::size_t>(g.modes()))
    throw std::invalid_argument("spin configuration length does not match mode count");
  if (table.cutoff() != g.cutoff()) throw std::invalid_argument("Hermite table cutoff does not match state");
  require_normalized(state);
  std::vector<cplx> a(state.amplitudes().begin(), state.amplitudes().end());
  std::vector<cplx> b(a.size());
  for (int i = 0; i < g.modes(); ++i) {
    if (config[i] != 1 && config[i] != -1) throw std::invalid_argument("spins must be +1 or -1");
    apply_mode_matrix(a, b, g, i, table.matrix(config[i]));
    a.swap(b);
  }
  return inner(state.amplitudes(), std::span<const cplx>(a)).real();
}

double config_probability(const MultiModeState& state, const SpinConfig& config, const HermiteHalfTable& table) {
  return std::clamp(config_probability_raw(state, config, table), 0.0, 1.0);
}

double success_rate(const MultiModeState& state, std::span<const SpinConfig> ground_set,
                    const HermiteHalfTable& table) {
  if (ground_set.empty()) throw std::invalid_argument("ground set is empty");
  double total = 0.0;
  for (const auto& c : ground_set) total += config_probability(state, c, table);
  return std::min(total, 1.0);
}

double sign_probability(const MultiModeState& state, int mode, const HermiteHalfTable& table) {
  require_normalized(state);
  const int N = state.geometry().cutoff();
  if (table.cutoff() != N) throw std::invalid_argument("Hermite table cutoff does not match state");
  const auto rho = reduced_density(state, mode);
  double p = 0.0;
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < N; ++m) p += (rho[n * N + m] * table.plus(m, n)).real();
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> oscillator_eigenfunctions(int count, double x) {
  std::vector<double> psi(static_cast<std::size_t>(std::max(count, 0)));
  if (count <= 0) return psi;
  psi[0] = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * x * x);
  if (count > 1) psi[1] = std::sqrt(2.0) * x * psi[0];
  for (int n = 1; n + 1 < count; ++n)
    psi[n + 1] = std::sqrt(2.0 / (n + 1)) * x * psi[n] - std::sqrt(static_cast<double>(n) / (n + 1)) * psi[n - 1];
  return psi;
}

std::vector<double> quadrature_distribution(const MultiModeState& state, int mode, std::span<const double> xs) {
  require_normalized(state);
  const int N = state.geometry().cutoff();
  const auto rho = reduced_density(state, mode);
  std::vector<double> density;
  density.reserve(xs.size());
  for (double x : xs) {
    const auto psi = oscillator_eigenfunctions(N, x);
    double p = 0.0;
    for (int n = 0; n < N; ++n)
      for (int m = 0; m < N; ++m) p += rho[n * N + m].real() * psi[n] * psi[m];
    density.push_back(p);
  }
  return density;
}

double mean_photon(const MultiModeState& state, int mode) {
  const int N = state.geometry().cutoff();
  const auto rho = reduced_density(state, mode);
  double n = 0.0, total = 0.0;
  for (int k = 0; k < N; ++k) {
    n += k * rho[k * N + k].real();
    total += rho[k * N + k].real();
  }
  return total > 0.0 ? n / total : 0.0;
}

std::size_t purity_sample_size(std::size_t ensemble_size, const PurityOptions& options) {
  if (ensemble_size <= options.exact_limit) return ensemble_size;
  const double budget = static_cast<double>(std::max<std::size_t>(options.pair_budget, 1));
  auto m = static_cast<std::size_t>(std::ceil(0.5 + std::sqrt(0.25 + 2.0 * budget)));
  while (m > 2 && (m - 1) * (m - 2) / 2 >= options.pair_budget) --m;
  return std::min(std::max<std::size_t>(m, 2), ensemble_size);
}

PurityEstimate purity(std::span<const MultiModeState> states, const PurityOptions& options) {
  return purity(states.first(std::min(states.size(), purity_sample_size(states.size(), options))), states.size(),
                options);
}

PurityEstimate purity(std::span<const MultiModeState> leading, std::size_t ensemble_size,
                      const PurityOptions& options) {
  const std::size_t m = leading.size();
  if (m == 0) throw std::invalid_argument("purity needs at least one state");
  if (m != purity_sample_size(ensemble_size, options))
    throw std::invalid_argument("purity expects the leading " +
                                std::to_string(purity_sample_size(ensemble_size, options)) + " states");
  for (const auto& s : leading)
    if (!(s.geometry() == leading[0].geometry())) throw std::invalid_argument("states differ in geometry");

  // Overlaps |<i|j>|^2 for j > i, computed once; row sums cover j != i.
  std::vector<double> overlap(m * m, 0.0), diag(m);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t i = 0; i < m; ++i) {
    diag[i] = std::norm(inner(leading[i], leading[i]));
    for (std::size_t j = i + 1; j < m; ++j) overlap[i * m + j] = std::norm(inner(leading[i], leading[j]));
  }
  std::vector<double> rows(m, 0.0);
  double diag_sum = 0.0, off = 0.0, off_sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    diag_sum += diag[i];
    for (std::size_t j = i + 1; j < m; ++j) {
      const double o = overlap[i * m + j];
      rows[i] += o;
      rows[j] += o;
      off += 2.0 * o;
      off_sq += 2.0 * o * o;
    }
  }
  const double mm = static_cast<double>(m);
  if (m == ensemble_size) return {(diag_sum + off) / (mm * mm), std::nullopt, true};

  // U-statistic over the pairs of the sample: mean overlap and its variance to
  // first and second order.
  const double nn = static_cast<double>(ensemble_size);
  const double pairs = mm * (mm - 1.0);
  const double u = off / pairs;
  double row_var = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = rows[i] / (mm - 1.0) - u;
    row_var += d * d;
  }
  row_var /= mm - 1.0;
  const double pair_var = std::max(0.0, (off_sq - pairs * u * u) / (pairs - 1.0));
  const double var_u = 4.0 * row_var / mm + 2.0 * pair_var / pairs;
  const double frac = (nn - 1.0) / nn;
  return {diag_sum / mm / nn + frac * u, frac * std::sqrt(var_u), false};
}

}  // namespace cim
