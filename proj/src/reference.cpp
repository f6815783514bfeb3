#include "cim/reference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace cim::reference {

namespace {

using Sparse = Eigen::SparseMatrix<cplx>;

Sparse lowering(const FockGeometry& g, int mode) {
  std::vector<Eigen::Triplet<cplx>> t;
  const std::size_t s = g.stride(mode);
  for (std::size_t k = 0; k < g.dimension(); ++k) {
    const int n = g.digit(k, mode);
    if (n > 0) t.emplace_back(static_cast<int>(k - s), static_cast<int>(k), std::sqrt(static_cast<double>(n)));
  }
  Sparse a(static_cast<int>(g.dimension()), static_cast<int>(g.dimension()));
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

Sparse adjoint(const Sparse& m) { return Sparse(m.adjoint()); }

// 2 C rho C^dag - C^dag C rho - rho C^dag C
Eigen::MatrixXcd dissipator(const Sparse& c, const Sparse& cd, const Sparse& cdc, const Eigen::MatrixXcd& rho) {
  Eigen::MatrixXcd c_rho = c * rho;
  Eigen::MatrixXcd out = 2.0 * (c_rho * cd);
  out -= cdc * rho;
  out -= rho * cdc;
  return out;
}

struct Channel {
  Sparse c, cd, cdc;
  explicit Channel(Sparse op) : c(std::move(op)), cd(adjoint(c)), cdc(cd * c) {}
};

class MasterEquation {
 public:
  explicit MasterEquation(const NetworkModel& model) : model_(model) {
    const auto& g = model.geometry;
    const int M = g.modes();
    for (int i = 0; i < M; ++i) {
      Sparse a = lowering(g, i);
      Sparse ad = adjoint(a);
      Sparse a2 = a * a;
      number_.push_back(ad * a);
      squeeze_.push_back(Sparse(ad * ad - a2));
      one_photon_.emplace_back(a);
      two_photon_.emplace_back(a2);
      ladders_.push_back(std::move(a));
    }
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) {
        const double J = i == j ? 0.0 : model.coupling(i, j);
        if (J == 0.0) continue;
        const double sign = J > 0 ? 1.0 : -1.0;
        couplings_.push_back({i, j, std::abs(J), Channel(Sparse(ladders_[i] - sign * ladders_[j]))});
      }
  }

  Eigen::MatrixXcd operator()(double t, const Eigen::MatrixXcd& rho) const {
    const auto r = model_.rates(t);
    const cplx I(0.0, 1.0);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(rho.rows(), rho.cols());
    for (std::size_t i = 0; i < ladders_.size(); ++i) {
      const double delta = model_.detuning_of(static_cast<int>(i));
      if (delta != 0.0) out -= I * delta * (number_[i] * rho - rho * number_[i]);
      if (r.pump != 0.0) out += (r.pump / 2.0) * (squeeze_[i] * rho - rho * squeeze_[i]);
      const auto& c1 = one_photon_[i];
      if (r.gamma != 0.0) out += r.gamma * dissipator(c1.c, c1.cd, c1.cdc, rho);
      const auto& c2 = two_photon_[i];
      if (r.g != 0.0) out += (r.g * r.g / 2.0) * dissipator(c2.c, c2.cd, c2.cdc, rho);
    }
    for (const auto& p : couplings_)
      out += (r.coupling * p.magnitude / 2.0) * dissipator(p.channel.c, p.channel.cd, p.channel.cdc, rho);
    return out;
  }

 private:
  struct Pair {
    int i, j;
    double magnitude;
    Channel channel;
  };
  const NetworkModel& model_;
  std::vector<Sparse> ladders_, number_, squeeze_;
  std::vector<Channel> one_photon_, two_photon_;
  std::vector<Pair> couplings_;
};

void check_dimension(const FockGeometry& g) {
  if (g.dimension() > kMaxDenseDimension)
    throw std::invalid_argument("dense oracle limited to dimension " + std::to_string(kMaxDenseDimension) +
                                ", got " + std::to_string(g.dimension()));
}

}  // namespace

DensityMatrix::DensityMatrix(FockGeometry geometry)
    : geometry_(geometry),
      entries_(Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(geometry.dimension()),
                                      static_cast<Eigen::Index>(geometry.dimension()))) {
  check_dimension(geometry_);
}

DensityMatrix::DensityMatrix(FockGeometry geometry, Eigen::MatrixXcd entries)
    : geometry_(geometry), entries_(std::move(entries)) {
  check_dimension(geometry_);
  const auto d = static_cast<Eigen::Index>(geometry_.dimension());
  if (entries_.rows() != d || entries_.cols() != d) throw std::invalid_argument("density matrix shape mismatch");
}

DensityMatrix DensityMatrix::pure(const MultiModeState& state) {
  const auto amps = state.amplitudes();
  Eigen::Map<const Eigen::VectorXcd> v(amps.data(), static_cast<Eigen::Index>(amps.size()));
  return DensityMatrix(state.geometry(), v * v.adjoint());
}

double DensityMatrix::purity() const { return (entries_ * entries_).trace().real(); }

double DensityMatrix::hermiticity_error() const { return (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff(); }

double DensityMatrix::min_eigenvalue() const {
  const Eigen::MatrixXcd h = 0.5 * (entries_ + entries_.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

Eigen::MatrixXcd DensityMatrix::reduced(int mode) const {
  const int N = geometry_.cutoff();
  const std::size_t s = geometry_.stride(mode);
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(N, N);
  for (std::size_t k = 0; k < geometry_.dimension(); ++k) {
    const int n = geometry_.digit(k, mode);
    const std::size_t base = k - n * s;
    for (int m = 0; m < N; ++m)
      r(n, m) += entries_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(base + m * s));
  }
  return r;
}

double DensityMatrix::mean_photon(int mode) const {
  const auto r = reduced(mode);
  double n = 0.0;
  for (int k = 0; k < r.rows(); ++k) n += k * r(k, k).real();
  return n;
}

double DensityMatrix::sign_probability(int mode, const HermiteHalfTable& table) const {
  const auto r = reduced(mode);
  double p = 0.0;
  for (int n = 0; n < r.rows(); ++n)
    for (int m = 0; m < r.cols(); ++m) p += (r(n, m) * table.plus(m, n)).real();
  return p;
}

double DensityMatrix::config_probability(const SpinConfig& config, const HermiteHalfTable& table) const {
  const int M = geometry_.modes();
  if (config.size() != static_cast<std::size_t>(M)) throw std::invalid_argument("configuration length mismatch");
  const int N = geometry_.cutoff();
  Eigen::MatrixXd projector = Eigen::MatrixXd::Ones(1, 1);
  for (int i = 0; i < M; ++i) {
    const auto lam = table.matrix(config[i]);
    Eigen::MatrixXd next(projector.rows() * N, projector.cols() * N);
    for (Eigen::Index r = 0; r < projector.rows(); ++r)
      for (Eigen::Index c = 0; c < projector.cols(); ++c)
        for (int n = 0; n < N; ++n)
          for (int m = 0; m < N; ++m) next(r * N + n, c * N + m) = projector(r, c) * lam[n * N + m];
    projector = std::move(next);
  }
  return (projector.cast<cplx>() * entries_).trace().real();
}

std::vector<DensityMatrix> integrate_master_equation(const DensityMatrix& initial, const NetworkModel& model,
                                                     const TimeGrid& grid) {
  model.validate();
  if (!(initial.geometry() == model.geometry)) throw std::invalid_argument("initial state geometry mismatch");
  check_dimension(model.geometry);
  const MasterEquation rhs(model);
  const double dt = grid.dt();
  Eigen::MatrixXcd rho = initial.entries();
  const cplx trace0 = rho.trace();
  std::vector<DensityMatrix> out;
  const auto& checkpoints = grid.checkpoint_steps();
  std::size_t next = 0;
  for (int step = 0;; ++step) {
    if (next < checkpoints.size() && checkpoints[next] == step) {
      out.emplace_back(model.geometry, rho);
      ++next;
    }
    if (step == grid.steps()) break;
    const double t = grid.time_at(step);
    const Eigen::MatrixXcd k1 = rhs(t, rho);
    const Eigen::MatrixXcd k2 = rhs(t + dt / 2, rho + (dt / 2) * k1);
    const Eigen::MatrixXcd k3 = rhs(t + dt / 2, rho + (dt / 2) * k2);
    const Eigen::MatrixXcd k4 = rhs(t + dt, rho + dt * k3);
    rho += (dt / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double drift = std::abs(rho.trace() - trace0);
    if (!(drift <= 1e-6))
      throw NumericalFailure("master-equation trace drifted by " + std::to_string(drift) + " at t=" +
                             std::to_string(t + dt));
  }
  return out;
}

std::vector<cplx> mean_field_rhs(std::span<const cplx> alpha, const NetworkModel& model, double t) {
  const auto r = model.rates(t);
  const int M = static_cast<int>(alpha.size());
  std::vector<cplx> d(alpha.size());
  for (int i = 0; i < M; ++i) {
    cplx coupling = 0.0;
    for (int k = 0; k < M; ++k) {
      if (k == i) continue;
      const double J = model.coupling(i, k);
      coupling += J * alpha[k] - std::abs(J) * alpha[i];
    }
    d[i] = -r.gamma * alpha[i] + r.coupling * coupling + std::conj(alpha[i]) * (r.pump - r.g * r.g * alpha[i] * alpha[i]);
  }
  return d;
}

std::vector<std::vector<cplx>> integrate_mean_field(std::span<const cplx> initial, const NetworkModel& model,
                                                    const TimeGrid& grid) {
  if (initial.size() != static_cast<std::size_t>(model.coupling.size()))
    throw std::invalid_argument("amplitude count does not match coupling matrix");
  const double dt = grid.dt();
  std::vector<cplx> a(initial.begin(), initial.end());
  const auto shifted = [&](const std::vector<cplx>& base, const std::vector<cplx>& k, double h) {
    std::vector<cplx> v(base);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += h * k[i];
    return v;
  };
  std::vector<std::vector<cplx>> out;
  const auto& checkpoints = grid.checkpoint_steps();
  std::size_t next = 0;
  for (int step = 0;; ++step) {
    if (next < checkpoints.size() && checkpoints[next] == step) {
      out.push_back(a);
      ++next;
    }
    if (step == grid.steps()) break;
    const double t = grid.time_at(step);
    const auto k1 = mean_field_rhs(a, model, t);
    const auto k2 = mean_field_rhs(shifted(a, k1, dt / 2), model, t + dt / 2);
    const auto k3 = mean_field_rhs(shifted(a, k2, dt / 2), model, t + dt / 2);
    const auto k4 = mean_field_rhs(shifted(a, k3, dt), model, t + dt);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] += (dt / 6) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!(std::abs(a[i]) <= 1e6))
        throw NumericalFailure("mean-field amplitude diverged at t=" + std::to_string(t + dt));
    }
  }
  return out;
}

namespace {

template <class F>
double half_line(F f, int cutoff, int sign) {
  // Eigenfunctions below the cutoff are negligible beyond the classical turning point plus 12.
  const double L = std::sqrt(2.0 * cutoff + 1.0) + 12.0;
  double error = 0.0, l1 = 0.0;
  const double a = sign >= 0 ? 0.0 : -L, b = sign >= 0 ? L : 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 25, 1e-14, &error, &l1);
  if (!(error <= 1e-11 * std::max(1.0, l1))) throw std::runtime_error("half-line quadrature did not converge");
  return v;
}

}  // namespace

double quadrature_oracle(std::span<const cplx> amplitudes, int sign) {
  const int N = static_cast<int>(amplitudes.size());
  if (N < 1 || N > 64) throw std::invalid_argument("quadrature oracle supports 1..64 levels");
  return half_line(
      [&](double x) {
        const auto psi = oscillator_eigenfunctions(N, x);
        cplx s = 0.0;
        for (int n = 0; n < N; ++n) s += amplitudes[n] * psi[n];
        return std::norm(s);
      },
      N, sign);
}

double overlap_oracle(int m, int mp, int sign) {
  const int N = std::max(m, mp) + 1;
  if (m < 0 || mp < 0 || N > 64) throw std::invalid_argument("overlap oracle supports levels 0..63");
  return half_line(
      [&](double x) {
        const auto psi = oscillator_eigenfunctions(N, x);
        return psi[m] * psi[mp];
      },
      N, sign);
}

}  // namespace cim::reference
