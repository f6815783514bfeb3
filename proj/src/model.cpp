#include "cim/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace cim {

Schedule Schedule::constant(double value) {
  Schedule s;
  s.kind_ = Kind::constant;
  s.start_ = s.end_ = value;
  return s;
}

Schedule Schedule::linear(double start, double end, double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("schedule horizon must be positive");
  Schedule s;
  s.kind_ = Kind::linear;
  s.start_ = start;
  s.end_ = end;
  s.horizon_ = horizon;
  return s;
}

Schedule Schedule::tanh_ramp(double start, double end, double horizon, double sharpness) {
  if (!(horizon > 0.0)) throw std::invalid_argument("schedule horizon must be positive");
  if (!(sharpness > 0.0)) throw std::invalid_argument("tanh sharpness must be positive");
  Schedule s;
  s.kind_ = Kind::tanh_ramp;
  s.start_ = start;
  s.end_ = end;
  s.horizon_ = horizon;
  s.sharpness_ = sharpness;
  return s;
}

double Schedule::operator()(double t) const {
  switch (kind_) {
    case Kind::constant:
      return start_;
    case Kind::linear:
      return start_ + (end_ - start_) * (t / horizon_);
    case Kind::tanh_ramp:
      return start_ + (end_ - start_) * std::tanh(sharpness_ * t / horizon_);
  }
  return start_;
}

double Schedule::minimum() const {
  if (kind_ == Kind::constant) return start_;
  return std::min(start_, (*this)(horizon_));
}

CouplingMatrix::CouplingMatrix(int size)
    : size_(size), entries_(static_cast<std::size_t>(size) * size, 0.0) {}

CouplingMatrix::CouplingMatrix(int size, std::vector<double> entries)
    : size_(size), entries_(std::move(entries)) {
  if (entries_.size() != static_cast<std::size_t>(size) * size)
    throw std::invalid_argument("coupling matrix needs size*size entries");
}

void CouplingMatrix::set(int i, int j, double value) {
  entries_[static_cast<std::size_t>(i) * size_ + j] = value;
  entries_[static_cast<std::size_t>(j) * size_ + i] = value;
}

void CouplingMatrix::validate() const {
  for (int i = 0; i < size_; ++i) {
    if ((*this)(i, i) != 0.0) throw std::invalid_argument("coupling matrix diagonal must be zero");
    for (int j = 0; j < i; ++j)
      if ((*this)(i, j) != (*this)(j, i)) throw std::invalid_argument("coupling matrix must be symmetric");
  }
}

InstantRates NetworkModel::rates(double t) const {
  InstantRates r{pump(t), gamma(t), two_photon(t), coupling_gain(t)};
  if (alpha_lock) r.pump = (*alpha_lock * r.g) * (*alpha_lock * r.g);
  return r;
}

void NetworkModel::validate() const {
  if (coupling.size() != geometry.modes())
    throw std::invalid_argument("coupling matrix size does not match mode count");
  coupling.validate();
  if (!detuning.empty() && detuning.size() != static_cast<std::size_t>(geometry.modes()))
    throw std::invalid_argument("detuning needs one value per mode");
  const std::pair<const char*, const Schedule*> schedules[] = {
      {"pump", &pump}, {"gamma", &gamma}, {"g", &two_photon}, {"j_coef", &coupling_gain}};
  for (const auto& [name, s] : schedules)
    if (s->minimum() < 0.0) throw std::invalid_argument(std::string(name) + " must stay non-negative");
  if (alpha_lock && *alpha_lock < 0.0) throw std::invalid_argument("alpha lock must be non-negative");
}

std::string JumpOperator::tag() const {
  switch (kind) {
    case JumpKind::one_photon:
      return "a" + std::to_string(i);
    case JumpKind::two_photon:
      return "aa" + std::to_string(i);
    case JumpKind::coupling:
      return "L" + std::to_string(i) + "," + std::to_string(j);
  }
  return "?";
}

JumpOperatorSet build_jump_set(const NetworkModel& model, double t) {
  const auto r = model.rates(t);
  const int M = model.geometry.modes();
  std::vector<JumpOperator> ops;
  if (r.gamma > 0.0)
    for (int i = 0; i < M; ++i) ops.push_back({JumpKind::one_photon, i, -1, 0.0, std::sqrt(2.0 * r.gamma)});
  if (r.g > 0.0)
    for (int i = 0; i < M; ++i) ops.push_back({JumpKind::two_photon, i, -1, 0.0, r.g});
  if (r.coupling > 0.0)
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) {
        const double J = model.coupling(i, j);
        if (i == j || J == 0.0) continue;
        ops.push_back({JumpKind::coupling, i, j, J > 0.0 ? 1.0 : -1.0, std::sqrt(r.coupling * std::abs(J))});
      }
  return JumpOperatorSet(std::move(ops));
}

std::vector<double> JumpOperatorSet::weights(std::span<const cplx> psi, const FockGeometry& geometry) const {
  const auto moments = photon_moments(psi, geometry);
  std::map<std::pair<int, int>, double> hop_cache;
  std::vector<double> w;
  w.reserve(ops_.size());
  for (const auto& op : ops_) {
    const double a2 = op.amplitude * op.amplitude;
    switch (op.kind) {
      case JumpKind::one_photon:
        w.push_back(a2 * moments.number[op.i]);
        break;
      case JumpKind::two_photon:
        w.push_back(a2 * moments.falling[op.i]);
        break;
      case JumpKind::coupling: {
        const auto key = std::minmax(op.i, op.j);
        auto it = hop_cache.find(key);
        if (it == hop_cache.end())
          it = hop_cache.emplace(key, expect_hop(psi, geometry, key.first, key.second).real()).first;
        const double v = moments.number[op.i] + moments.number[op.j] - 2.0 * op.sign * it->second;
        w.push_back(a2 * std::max(0.0, v));
        break;
      }
    }
  }
  return w;
}

MultiModeState JumpOperatorSet::apply(std::size_t n, const MultiModeState& psi) const {
  const auto& op = ops_.at(n);
  MultiModeState out = [&] {
    switch (op.kind) {
      case JumpKind::one_photon:
        return apply_single_mode(psi, {SingleModeKind::lower, op.i});
      case JumpKind::two_photon:
        return apply_single_mode(psi, {SingleModeKind::lower2, op.i});
      case JumpKind::coupling:
      default: {
        auto a = apply_single_mode(psi, {SingleModeKind::lower, op.i});
        const auto b = apply_single_mode(psi, {SingleModeKind::lower, op.j});
        auto dst = a.amplitudes();
        auto src = b.amplitudes();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= op.sign * src[k];
        return a;
      }
    }
  }();
  for (auto& x : out.amplitudes()) x *= op.amplitude;
  return out;
}

EffectiveGenerator::EffectiveGenerator(const NetworkModel& model, Form form) : model_(model) {
  model.validate();
  if (model.geometry.modes() > 64) throw std::invalid_argument("generator supports at most 64 modes");
  const int M = model.geometry.modes();
  const int N = model.geometry.cutoff();
  loss_weight_.assign(M, 0.0);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) {
      const double J = model.coupling(i, j);
      if (i == j || J == 0.0) continue;
      loss_weight_[i] += std::abs(J);
      if (i < j) pairs_.push_back({i, j, J});
    }
  sqrt_int_.resize(N + 2);
  for (int n = 0; n < N + 2; ++n) sqrt_int_[n] = std::sqrt(static_cast<double>(n));
  up2_.assign(N, 0.0);
  down2_.assign(N, 0.0);
  for (int n = 0; n < N; ++n) {
    up2_[n] = std::sqrt(static_cast<double>(n) * (n - 1));
    if (n + 2 < N) down2_[n] = std::sqrt((n + 1.0) * (n + 2.0));
  }

  const auto& geo = model.geometry;
  const std::size_t D = geo.dimension();
  if (form == Form::structured || D > kSparseGeneratorLimit) return;
  auto sparse = std::make_shared<SparseForm>();
  sparse->number.resize(D);
  sparse->weighted.resize(D);
  sparse->pair_count.resize(D);
  sparse->detuned.resize(D);
  sparse->pump.row_ptr.reserve(D + 1);
  sparse->hop.row_ptr.reserve(D + 1);
  sparse->pump.row_ptr.push_back(0);
  sparse->hop.row_ptr.push_back(0);
  auto put = [](Csr& m, std::size_t col, double v) {
    m.col.push_back(static_cast<std::uint32_t>(col));
    m.val.push_back(v);
  };
  for (std::size_t k = 0; k < D; ++k) {
    const auto n = geo.decode(k);
    double A = 0.0, B = 0.0, C = 0.0, E = 0.0;
    for (int i = 0; i < M; ++i) {
      A += n[i];
      B += loss_weight_[i] * n[i];
      C += n[i] * (n[i] - 1.0);
      E += model.detuning_of(i) * n[i];
      const std::size_t s = geo.stride(i);
      if (n[i] >= 2) put(sparse->pump, k - 2 * s, up2_[n[i]]);
      if (n[i] + 2 < N) put(sparse->pump, k + 2 * s, -down2_[n[i]]);
    }
    sparse->number[k] = A;
    sparse->weighted[k] = B;
    sparse->pair_count[k] = C;
    sparse->detuned[k] = E;
    for (const auto& pr : pairs_) {
      const int ni = n[pr.i], nj = n[pr.j];
      const std::size_t si = geo.stride(pr.i), sj = geo.stride(pr.j);
      // a_i^dag a_j: source has n_i - 1, n_j + 1.
      if (ni >= 1 && nj + 1 < N) put(sparse->hop, k - si + sj, pr.coupling * sqrt_int_[ni] * sqrt_int_[nj + 1]);
      // a_j^dag a_i: source has n_i + 1, n_j - 1.
      if (ni + 1 < N && nj >= 1) put(sparse->hop, k + si - sj, pr.coupling * sqrt_int_[ni + 1] * sqrt_int_[nj]);
    }
    sparse->pump.row_ptr.push_back(static_cast<std::uint32_t>(sparse->pump.col.size()));
    sparse->hop.row_ptr.push_back(static_cast<std::uint32_t>(sparse->hop.col.size()));
  }
  sparse_ = std::move(sparse);
}

void EffectiveGenerator::apply_sparse(std::span<const cplx> in, std::span<cplx> out, double t) const {
  const auto r = model_.rates(t);
  const double p = 0.5 * r.pump, c = r.coupling, gamma = r.gamma, half_g2 = 0.5 * r.g * r.g;
  const auto& f = *sparse_;
  const std::size_t D = in.size();
  const double* __restrict x = reinterpret_cast<const double*>(in.data());
  double* __restrict y = reinterpret_cast<double*>(out.data());
  const double* __restrict number = f.number.data();
  const double* __restrict weighted = f.weighted.data();
  const double* __restrict pair_count = f.pair_count.data();
  const double* __restrict detuned = f.detuned.data();
  const std::uint32_t* __restrict pump_ptr = f.pump.row_ptr.data();
  const std::uint32_t* __restrict pump_col = f.pump.col.data();
  const double* __restrict pump_val = f.pump.val.data();
  const std::uint32_t* __restrict hop_ptr = f.hop.row_ptr.data();
  const std::uint32_t* __restrict hop_col = f.hop.col.data();
  const double* __restrict hop_val = f.hop.val.data();

  auto rows = [=](std::size_t k0, std::size_t k1) {
    for (std::size_t k = k0; k < k1; ++k) {
      const double dr = -(gamma * number[k] + c * weighted[k] + half_g2 * pair_count[k]);
      const double di = -detuned[k];
      const double xr = x[2 * k], xi = x[2 * k + 1];
      double pr = 0.0, pi = 0.0;
      for (std::uint32_t e = pump_ptr[k], end = pump_ptr[k + 1]; e < end; ++e) {
        const double* src = x + 2 * pump_col[e];
        pr += pump_val[e] * src[0];
        pi += pump_val[e] * src[1];
      }
      double hr = 0.0, hi = 0.0;
      for (std::uint32_t e = hop_ptr[k], end = hop_ptr[k + 1]; e < end; ++e) {
        const double* src = x + 2 * hop_col[e];
        hr += hop_val[e] * src[0];
        hi += hop_val[e] * src[1];
      }
      y[2 * k] = dr * xr - di * xi + p * pr + c * hr;
      y[2 * k + 1] = dr * xi + di * xr + p * pi + c * hi;
    }
  };
  if (D < (std::size_t{1} << 16)) {
    rows(0, D);
    return;
  }
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (D + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < blocks; ++b) rows(b * kBlock, std::min(D, (b + 1) * kBlock));
}

namespace {

// Row kernel helpers over interleaved (re, im) doubles of length 2N.
inline void axpy_row(double* __restrict out, const double* __restrict in, double c, int len2) {
  for (int x = 0; x < len2; ++x) out[x] += c * in[x];
}

}  // namespace

void EffectiveGenerator::apply(std::span<const cplx> in, std::span<cplx> out, double t) const {
  const auto& model = model_;
  const auto& geo = model.geometry;
  const int M = geo.modes();
  const int N = geo.cutoff();
  const int last = M - 1;
  const std::size_t D = geo.dimension();
  if (in.size() != D || out.size() != D) throw std::invalid_argument("generator: vector size mismatch");
  if (sparse_) return apply_sparse(in, out, t);

  const auto r = model.rates(t);
  const double p = 0.5 * r.pump;
  const double half_g2 = 0.5 * r.g * r.g;

  // Diagonal per mode and level: re = -(gamma + J_coef w_i) n - g^2/2 n(n-1), im = -Delta_i n.
  std::vector<double> dre(static_cast<std::size_t>(M) * N), dim(static_cast<std::size_t>(M) * N);
  for (int i = 0; i < M; ++i) {
    const double lin = r.gamma + r.coupling * loss_weight_[i];
    const double det = model.detuning_of(i);
    for (int n = 0; n < N; ++n) {
      dre[i * N + n] = -lin * n - half_g2 * n * (n - 1.0);
      dim[i * N + n] = -det * n;
    }
  }

  struct PairTerm {
    int i, j;
    double c;
  };
  std::vector<PairTerm> slow_pairs, last_pairs;
  for (const auto& pr : pairs_) {
    const double c = r.coupling * pr.coupling;
    if (c == 0.0) continue;
    (pr.j == last ? last_pairs : slow_pairs).push_back({pr.i, pr.j, c});
  }

  const std::size_t rows = D / static_cast<std::size_t>(N);
  std::vector<std::size_t> row_stride(M, 0);
  for (int i = 0; i < last; ++i) row_stride[i] = geo.stride(i) / static_cast<std::size_t>(N);

  const double* src = reinterpret_cast<const double*>(in.data());
  double* dst = reinterpret_cast<double*>(out.data());
  const int len2 = 2 * N;
  const double* dre_last = dre.data() + static_cast<std::size_t>(last) * N;
  const double* dim_last = dim.data() + static_cast<std::size_t>(last) * N;

  constexpr std::size_t kRowBlock = 128;
  const std::size_t blocks = (rows + kRowBlock - 1) / kRowBlock;
  const bool parallel = D >= (std::size_t{1} << 16);

#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t r0 = b * kRowBlock;
    const std::size_t r1 = std::min(rows, r0 + kRowBlock);
    int digits[64];
    for (int i = 0; i < last; ++i) digits[i] = static_cast<int>((r0 / row_stride[i]) % N);

    for (std::size_t row = r0; row < r1; ++row) {
      double base_re = 0.0, base_im = 0.0;
      for (int i = 0; i < last; ++i) {
        base_re += dre[i * N + digits[i]];
        base_im += dim[i * N + digits[i]];
      }
      const double* x = src + row * len2;
      double* y = dst + row * len2;

      for (int m = 0; m < N; ++m) {
        const double cr = base_re + dre_last[m], ci = base_im + dim_last[m];
        const double xr = x[2 * m], xi = x[2 * m + 1];
        y[2 * m] = cr * xr - ci * xi;
        y[2 * m + 1] = cr * xi + ci * xr;
      }

      if (p != 0.0) {
        // Pump on the fastest mode stays within the row.
        for (int m = 2; m < N; ++m) {
          const double c = p * up2_[m];
          y[2 * m] += c * x[2 * (m - 2)];
          y[2 * m + 1] += c * x[2 * (m - 2) + 1];
        }
        for (int m = 0; m + 2 < N; ++m) {
          const double c = p * down2_[m];
          y[2 * m] -= c * x[2 * (m + 2)];
          y[2 * m + 1] -= c * x[2 * (m + 2) + 1];
        }
        for (int i = 0; i < last; ++i) {
          const int n = digits[i];
          const std::size_t rs = 2 * row_stride[i] * len2;
          if (n >= 2) axpy_row(y, x - rs, p * up2_[n], len2);
          if (n + 2 < N) axpy_row(y, x + rs, -p * down2_[n], len2);
        }
      }

      for (const auto& pt : slow_pairs) {
        const int ni = digits[pt.i], nj = digits[pt.j];
        const std::ptrdiff_t shift =
            (static_cast<std::ptrdiff_t>(row_stride[pt.j]) - static_cast<std::ptrdiff_t>(row_stride[pt.i])) * len2;
        // a_i^dag a_j: source has n_i - 1, n_j + 1.
        if (ni >= 1 && nj + 1 < N) axpy_row(y, x + shift, pt.c * sqrt_int_[ni] * sqrt_int_[nj + 1], len2);
        // a_j^dag a_i: source has n_i + 1, n_j - 1.
        if (ni + 1 < N && nj >= 1) axpy_row(y, x - shift, pt.c * sqrt_int_[ni + 1] * sqrt_int_[nj], len2);
      }

      for (const auto& pt : last_pairs) {
        const int ni = digits[pt.i];
        const std::size_t rs = row_stride[pt.i] * len2;
        if (ni >= 1) {
          // a_i^dag a_last: source row has n_i - 1, level m + 1.
          const double* xs = x - rs;
          const double ci = pt.c * sqrt_int_[ni];
          for (int m = 0; m + 1 < N; ++m) {
            const double c = ci * sqrt_int_[m + 1];
            y[2 * m] += c * xs[2 * (m + 1)];
            y[2 * m + 1] += c * xs[2 * (m + 1) + 1];
          }
        }
        if (ni + 1 < N) {
          // a_last^dag a_i: source row has n_i + 1, level m - 1.
          const double* xs = x + rs;
          const double ci = pt.c * sqrt_int_[ni + 1];
          for (int m = 1; m < N; ++m) {
            const double c = ci * sqrt_int_[m];
            y[2 * m] += c * xs[2 * (m - 1)];
            y[2 * m + 1] += c * xs[2 * (m - 1) + 1];
          }
        }
      }

      for (int i = last - 1; i >= 0; --i) {
        if (++digits[i] < N) break;
        digits[i] = 0;
      }
    }
  }
}

MultiModeState apply_effective_hamiltonian(const MultiModeState& state, const NetworkModel& model, double t) {
  if (!(state.geometry() == model.geometry)) throw std::invalid_argument("state and model geometry differ");
  EffectiveGenerator gen(model);
  MultiModeState out(model.geometry);
  gen.apply(state.amplitudes(), out.amplitudes(), t);
  return out;
}

double alpha_from(double lambda, double g) {
  if (!(g > 0.0)) throw std::invalid_argument("alpha_from: g must be positive");
  if (lambda < 0.0) throw std::invalid_argument("alpha_from: lambda must be non-negative");
  return std::sqrt(lambda) / g;
}

ReducedParameters physical_to_reduced(double gbar, double epsilon, double gamma1, double gamma2) {
  if (!(gamma1 > 0.0) || !(gamma2 > 0.0)) throw std::invalid_argument("decay rates must be positive");
  return {std::abs(gbar * epsilon) / (gamma1 * gamma2), std::sqrt(gbar * gbar / (2.0 * gamma1 * gamma2))};
}

}  // namespace cim
