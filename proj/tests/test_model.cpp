#include <doctest.h>

#include <cmath>
#include <random>

#include "cim/ising.hpp"
#include "cim/model.hpp"
#include "dense.hpp"

using namespace cim;

namespace {

NetworkModel make_model(int N, CouplingMatrix J, double pump, double gamma, double g, double gain = 1.0) {
  const int M = J.size();
  return NetworkModel{.geometry = FockGeometry(M, N),
                      .coupling = std::move(J),
                      .pump = Schedule::constant(pump),
                      .gamma = Schedule::constant(gamma),
                      .two_photon = Schedule::constant(g),
                      .coupling_gain = Schedule::constant(gain),
                      .detuning = {},
                      .alpha_lock = std::nullopt};
}

CouplingMatrix pair_coupling(double j12) {
  CouplingMatrix J(2);
  J.set(0, 1, j12);
  return J;
}

// Columns are images of basis vectors.
template <class Apply>
dense::Mat as_matrix(const FockGeometry& g, Apply&& apply) {
  const auto D = static_cast<Eigen::Index>(g.dimension());
  dense::Mat out(D, D);
  for (Eigen::Index k = 0; k < D; ++k) {
    MultiModeState e(g);
    e.amplitudes()[k] = 1.0;
    out.col(k) = dense::to_vec(apply(e));
  }
  return out;
}

dense::Mat generator_matrix(const NetworkModel& model, double t,
                            EffectiveGenerator::Form form = EffectiveGenerator::Form::automatic) {
  const EffectiveGenerator gen(model, form);
  return as_matrix(model.geometry, [&](const MultiModeState& e) {
    MultiModeState out(model.geometry);
    gen.apply(e.amplitudes(), out.amplitudes(), t);
    return out;
  });
}

// The master equation written out term by term.
dense::Mat master_rhs(const NetworkModel& model, double t, const dense::Mat& rho) {
  const auto& geo = model.geometry;
  const auto r = model.rates(t);
  const auto D = static_cast<Eigen::Index>(geo.dimension());
  auto dissipator = [&](const dense::Mat& C) {
    const dense::Mat CdC = C.adjoint() * C;
    return dense::Mat(2.0 * C * rho * C.adjoint() - CdC * rho - rho * CdC);
  };
  dense::Mat out = dense::Mat::Zero(D, D);
  for (int i = 0; i < geo.modes(); ++i) {
    const dense::Mat a = dense::ladder(geo, i);
    const dense::Mat ad = a.adjoint();
    const dense::Mat n = ad * a;
    const dense::Mat pump = ad * ad - a * a;
    out += -cplx(0, 1) * model.detuning_of(i) * (n * rho - rho * n);
    out += r.pump / 2.0 * (pump * rho - rho * pump);
    out += r.gamma * dissipator(a);
    out += r.g * r.g / 2.0 * dissipator(a * a);
    for (int j = 0; j < geo.modes(); ++j) {
      const double Jij = model.coupling(i, j);
      if (i == j || Jij == 0.0) continue;
      const dense::Mat L = a - (Jij > 0 ? 1.0 : -1.0) * dense::ladder(geo, j);
      out += r.coupling * std::abs(Jij) / 2.0 * dissipator(L);
    }
  }
  return out;
}

double lindblad_mismatch(const NetworkModel& model, double t) {
  const auto& geo = model.geometry;
  const dense::Mat G = generator_matrix(model, t);
  // Both kernels must realize the same operator.
  const double forms_differ = (G - generator_matrix(model, t, EffectiveGenerator::Form::structured)).cwiseAbs().maxCoeff();
  const auto jumps = build_jump_set(model, t);
  std::vector<dense::Mat> C;
  for (std::size_t n = 0; n < jumps.size(); ++n)
    C.push_back(as_matrix(geo, [&](const MultiModeState& e) { return jumps.apply(n, e); }));
  const auto D = static_cast<Eigen::Index>(geo.dimension());
  double worst = 0.0;
  for (Eigen::Index a = 0; a < D; ++a)
    for (Eigen::Index b = 0; b < D; ++b) {
      dense::Mat rho = dense::Mat::Zero(D, D);
      rho(a, b) = 1.0;
      dense::Mat lhs = G * rho + rho * G.adjoint();
      for (const auto& c : C) lhs += c * rho * c.adjoint();
      worst = std::max(worst, (lhs - master_rhs(model, t, rho)).cwiseAbs().maxCoeff());
    }
  return std::max(worst, forms_differ);
}

double decay_rate(const NetworkModel& model, const MultiModeState& psi, double t) {
  const EffectiveGenerator gen(model);
  MultiModeState out(model.geometry);
  gen.apply(psi.amplitudes(), out.amplitudes(), t);
  return 2.0 * inner(psi, out).real();
}

double total_weight(const NetworkModel& model, const MultiModeState& psi, double t) {
  double sum = 0.0;
  for (double w : build_jump_set(model, t).weights(psi.amplitudes(), model.geometry)) sum += w;
  return sum;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("schedule endpoints and shape") {
    const auto c = Schedule::constant(2.4);
    CHECK(c(0.0) == 2.4);
    CHECK(c(8.0) == 2.4);

    const auto lin = Schedule::linear(0.0, 2.4, 8.0);
    CHECK(lin(0.0) == 0.0);
    CHECK(lin(8.0) == doctest::Approx(2.4).epsilon(1e-15));
    CHECK(lin(2.0) - lin(0.0) == doctest::Approx(lin(6.0) - lin(4.0)));
    CHECK(lin(3.0) == doctest::Approx(0.9));

    for (double s : {3.0, 4.0, 8.0}) {
      const auto th = Schedule::tanh_ramp(0.5, 2.4, 8.0, s);
      CHECK(th(0.0) == 0.5);
      CHECK(std::abs(th(8.0) - 2.4) <= 0.01 * 1.9);
      CHECK(th(1.0) > lin(1.0) * 0.5);
    }
    CHECK(Schedule::tanh_ramp(1.0, 0.2, 8.0, 3.0).minimum() == doctest::Approx(1.0 + (0.2 - 1.0) * std::tanh(3.0)));
    CHECK(Schedule::linear(1.0, 0.0, 4.0).minimum() == 0.0);
  }

  TEST_CASE("coupling matrix validation") {
    CouplingMatrix J(3);
    J.set(0, 2, -0.5);
    CHECK(J(2, 0) == -0.5);
    CHECK_NOTHROW(J.validate());
    CHECK_THROWS_AS(CouplingMatrix(2, {0.0, 1.0, 0.5, 0.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(CouplingMatrix(2, {1.0, 0.0, 0.0, 0.0}).validate(), std::invalid_argument);
    CHECK_THROWS(CouplingMatrix(2, {0.0, 1.0, 1.0}));

    auto model = make_model(4, CouplingMatrix(2), 1.0, 1.0, 0.5);
    CHECK_NOTHROW(model.validate());
    model.detuning = {0.1};
    CHECK_THROWS_AS(model.validate(), std::invalid_argument);
    model.detuning.clear();
    model.gamma = Schedule::linear(1.0, -1.0, 1.0);
    CHECK_THROWS_AS(model.validate(), std::invalid_argument);
  }

  TEST_CASE("jump set: single damped mode") {
    const auto model = make_model(6, CouplingMatrix(1), 0.0, 1.0, 0.0);
    const auto set = build_jump_set(model, 0.0);
    REQUIRE(set.size() == 1);
    CHECK(set.operators()[0].kind == JumpKind::one_photon);
    CHECK(set.operators()[0].amplitude == doctest::Approx(std::sqrt(2.0)));
    const std::vector<int> one{1};
    const auto out = set.apply(0, MultiModeState::basis(model.geometry, one));
    CHECK(out[0].real() == doctest::Approx(std::sqrt(2.0)));
  }

  TEST_CASE("jump set: antiferro pair without losses") {
    const auto model = make_model(4, pair_coupling(-1.0), 0.0, 0.0, 0.0);
    const auto set = build_jump_set(model, 0.0);
    REQUIRE(set.size() == 2);
    for (const auto& op : set.operators()) {
      CHECK(op.kind == JumpKind::coupling);
      CHECK(op.amplitude == doctest::Approx(1.0));
      CHECK(op.sign == -1.0);  // a_i + a_j
    }
    CHECK(set.operators()[0].i == set.operators()[1].j);
    CHECK(set.operators()[0].tag() == "L0,1");
    const std::vector<int> d01{0, 1}, d10{1, 0};
    const auto out = set.apply(0, MultiModeState::basis(model.geometry, d10));
    CHECK(out[model.geometry.encode(std::vector<int>{0, 0})] == cplx(1.0));
    const auto out2 = set.apply(1, MultiModeState::basis(model.geometry, d01));
    CHECK(out2[0] == cplx(1.0));
  }

  TEST_CASE("jump set: three-mode ring has twelve operators") {
    const auto ring = ring_instance(3);
    const auto model = make_model(3, ring.J, 2.4, 1.0, 0.6);
    const auto set = build_jump_set(model, 0.0);
    CHECK(set.size() == 12);
    int counts[3] = {0, 0, 0};
    for (const auto& op : set.operators()) ++counts[static_cast<int>(op.kind)];
    CHECK(counts[0] == 3);
    CHECK(counts[1] == 3);
    CHECK(counts[2] == 6);
    // Zero-rate channels disappear.
    CHECK(build_jump_set(make_model(3, ring.J, 2.4, 0.0, 0.0, 0.0), 0.0).size() == 0);
  }

  TEST_CASE("effective generator examples") {
    const auto quiet = make_model(8, CouplingMatrix(2), 0.0, 0.0, 0.0);
    const auto vac = MultiModeState::vacuum(quiet.geometry);
    CHECK(apply_effective_hamiltonian(vac, quiet, 0.0).norm2() == 0.0);

    const auto pumped = make_model(16, CouplingMatrix(1), 2.4, 0.0, 0.0);
    const auto out = apply_effective_hamiltonian(MultiModeState::vacuum(pumped.geometry), pumped, 0.0);
    CHECK(out[2].real() == doctest::Approx(std::sqrt(2.0) * 1.2).epsilon(1e-14));
    CHECK(std::abs(out[2].imag()) == 0.0);
    CHECK(out.norm2() == doctest::Approx(2.0 * 1.2 * 1.2));

    // Dense -i H_eff with H_eff = i (lambda/2)(a^dag2 - a^2) - (i/2) sum C^dag C.
    const dense::Mat a = dense::lower(16);
    const dense::Mat Heff = cplx(0, 1) * 1.2 * (a.adjoint() * a.adjoint() - a * a);
    const dense::Mat G = generator_matrix(pumped, 0.0);
    CHECK((G - (-cplx(0, 1)) * Heff).cwiseAbs().maxCoeff() < 1e-13);
  }

  TEST_CASE("generator plus jumps reproduce the master equation") {
    CouplingMatrix J1(1);
    SUBCASE("single mode with every term") {
      auto model = make_model(6, J1, 2.4, 1.0, 0.6);
      model.detuning = {0.3};
      CHECK(lindblad_mismatch(model, 0.0) < 1e-12);
    }
    SUBCASE("ferro and antiferro pairs") {
      for (double j : {0.7, -1.0}) {
        auto model = make_model(5, pair_coupling(j), 1.1, 0.8, 0.4, 1.3);
        model.detuning = {0.2, -0.4};
        CHECK(lindblad_mismatch(model, 0.0) < 1e-12);
      }
    }
    SUBCASE("time-dependent schedules") {
      auto model = make_model(4, pair_coupling(-0.5), 0.0, 1.0, 0.6);
      model.pump = Schedule::linear(0.0, 2.4, 8.0);
      model.coupling_gain = Schedule::tanh_ramp(0.0, 1.0, 8.0, 3.0);
      model.two_photon = Schedule::linear(0.2, 0.8, 8.0);
      CHECK(lindblad_mismatch(model, 3.7) < 1e-12);
    }
  }

  TEST_CASE("sparse and structured kernels agree on a four-mode space") {
    std::mt19937_64 rng(23);
    auto model = make_model(6, frustrated4_instance().J, 1.1, 0.9, 0.7);
    model.pump = Schedule::tanh_ramp(0.2, 1.5, 3.0, 4.0);
    model.coupling_gain = Schedule::linear(0.3, 1.2, 3.0);
    model.detuning = {0.1, -0.2, 0.0, 0.3};
    const auto psi = dense::random_state(model.geometry, rng);
    const EffectiveGenerator sparse(model), structured(model, EffectiveGenerator::Form::structured);
    for (double t : {0.0, 1.3, 3.0}) {
      MultiModeState a(model.geometry), b(model.geometry);
      sparse.apply(psi.amplitudes(), a.amplitudes(), t);
      structured.apply(psi.amplitudes(), b.amplitudes(), t);
      double worst = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
      CHECK(worst < 1e-12);
    }
  }

  TEST_CASE("norm decay equals total jump weight") {
    std::mt19937_64 rng(21);
    const auto ring = ring_instance(3);
    auto model = make_model(5, ring.J, 2.4, 1.0, 0.6, 0.8);
    model.detuning = {0.1, 0.0, -0.2};
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const auto psi = dense::random_state(model.geometry, rng);
      worst = std::max(worst, std::abs(decay_rate(model, psi, 0.0) + total_weight(model, psi, 0.0)));
    }
    CHECK(worst < 1e-8);
  }

  TEST_CASE("finite-difference norm decay for a coupled pair") {
    std::mt19937_64 rng(22);
    const auto model = make_model(8, pair_coupling(-1.0), 2.4, 1.0, 0.6);
    const auto psi = dense::random_state(model.geometry, rng);
    const EffectiveGenerator gen(model);
    const double dt = 1e-5;
    // One RK4 step of d psi/dt = G psi.
    auto G = [&](const std::vector<cplx>& v) {
      std::vector<cplx> out(v.size());
      gen.apply(v, out, 0.0);
      return out;
    };
    const std::vector<cplx> y0(psi.amplitudes().begin(), psi.amplitudes().end());
    auto axpy = [](std::vector<cplx> y, const std::vector<cplx>& k, double h) {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += h * k[i];
      return y;
    };
    const auto k1 = G(y0), k2 = G(axpy(y0, k1, dt / 2)), k3 = G(axpy(y0, k2, dt / 2)), k4 = G(axpy(y0, k3, dt));
    std::vector<cplx> y1 = y0;
    for (std::size_t i = 0; i < y1.size(); ++i) y1[i] += dt / 6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    const double fd = (norm2(y1) - 1.0) / dt;
    const double rate = -total_weight(model, psi, 0.0);
    // Forward difference: error of order dt times the second derivative.
    CHECK(std::abs(fd - rate) < 1e-3 * std::max(1.0, std::abs(rate)));
  }

  TEST_CASE("alpha lock keeps the amplitude fixed") {
    auto model = make_model(4, CouplingMatrix(1), 0.0, 1.0, 0.0);
    model.two_photon = Schedule::tanh_ramp(0.9, 0.3, 8.0, 3.0);
    model.alpha_lock = 2.582;
    double worst = 0.0;
    for (int k = 0; k <= 80; ++k) {
      const auto r = model.rates(0.1 * k);
      worst = std::max(worst, std::abs(alpha_from(r.pump, r.g) - 2.582));
    }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("alpha_from") {
    CHECK(alpha_from(2.4, 0.6) == doctest::Approx(2.582).epsilon(2e-4));
    CHECK(alpha_from(1.125, 0.75) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(alpha_from(0.0, 1.0) == 0.0);
    CHECK_THROWS_AS(alpha_from(1.0, 0.0), std::invalid_argument);
  }

  TEST_CASE("physical_to_reduced") {
    auto r = physical_to_reduced(0.0, 3.0, 1.0, 1.0);
    CHECK(r.lambda == 0.0);
    CHECK(r.g == 0.0);
    r = physical_to_reduced(1.0, 1.0, 1.0, 1.0);
    CHECK(r.lambda == doctest::Approx(1.0));
    CHECK(r.g == doctest::Approx(1.0 / std::sqrt(2.0)));
    const double gbar = 0.6 * std::sqrt(2.0);
    r = physical_to_reduced(gbar, 2.4 / gbar, 1.0, 1.0);
    CHECK(r.lambda == doctest::Approx(2.4).epsilon(1e-14));
    CHECK(r.g == doctest::Approx(0.6).epsilon(1e-14));
    CHECK_THROWS_AS(physical_to_reduced(1.0, 1.0, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(physical_to_reduced(1.0, 1.0, 1.0, -1.0), std::invalid_argument);
  }
}
