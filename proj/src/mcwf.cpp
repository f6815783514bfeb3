#include "cim/mcwf.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

namespace cim {

TimeGrid::TimeGrid(double t_max, int steps, int checkpoint_stride)
    : t_max_(t_max), steps_(steps), stride_(checkpoint_stride) {
  if (!(t_max > 0.0)) throw std::invalid_argument("t_max must be positive");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (checkpoint_stride < 1) throw std::invalid_argument("checkpoint stride must be >= 1");
  for (int s = 0; s < steps; s += checkpoint_stride) checkpoints_.push_back(s);
  checkpoints_.push_back(steps);
}

std::vector<double> TimeGrid::checkpoint_times() const {
  std::vector<double> t;
  t.reserve(checkpoints_.size());
  for (int s : checkpoints_) t.push_back(time_at(s));
  return t;
}

TimeGrid TimeGrid::refined() const { return TimeGrid(t_max_, 2 * steps_, 2 * stride_); }

namespace {

using Vec = std::vector<cplx>;

// Threaded elementwise loops for large states; each element is written by one
// thread only, so results do not depend on the thread count.
constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

void combine(Vec& out, const Vec& a, double ca, const Vec& b, double cb) {
  const std::size_t n = out.size();
  double* o = reinterpret_cast<double*>(out.data());
  const double* x = reinterpret_cast<const double*>(a.data());
  const double* y = reinterpret_cast<const double*>(b.data());
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
  for (std::size_t k = 0; k < 2 * n; ++k) o[k] = ca * x[k] + cb * y[k];
}

void accumulate(Vec& out, const Vec& a, double ca) {
  const std::size_t n = out.size();
  double* o = reinterpret_cast<double*>(out.data());
  const double* x = reinterpret_cast<const double*>(a.data());
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
  for (std::size_t k = 0; k < 2 * n; ++k) o[k] += ca * x[k];
}

struct HermiteWeights {
  double h00, h10, h01, h11;
};

HermiteWeights hermite(double s) {
  const double s2 = s * s, s3 = s2 * s;
  return {2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2};
}

class TrajectoryIntegrator {
 public:
  TrajectoryIntegrator(const MultiModeState& initial, const NetworkModel& model, const TimeGrid& grid,
                       RandomStream& stream, const StepControl& control, std::vector<JumpEvent>* log)
      : model_(model),
        gen_(model),
        grid_(grid),
        stream_(stream),
        control_(control),
        log_(log),
        psi_(initial.amplitudes().begin(), initial.amplitudes().end()) {
    if (!(initial.geometry() == model.geometry))
      throw std::invalid_argument("initial state geometry differs from the model");
    if (!initial.is_normalized(1e-8)) throw std::invalid_argument("initial state must be normalized");
    const std::size_t D = psi_.size();
    psi0_.resize(D);
    k1_.resize(D);
    k_.resize(D);
    tmp_.resize(D);
  }

  TrajectorySummary run(const CheckpointVisitor& visit) {
    threshold_ = stream_.uniform();
    const auto& checkpoints = grid_.checkpoint_steps();
    std::size_t next = 0;
    if (checkpoints[next] == 0) emit(visit, next++, 0.0);
    for (int step = 0; step < grid_.steps(); ++step) {
      advance(grid_.time_at(step), grid_.time_at(step + 1));
      if (next < checkpoints.size() && checkpoints[next] == step + 1) emit(visit, next++, grid_.time_at(step + 1));
    }
    summary_.jumps = jumps_;
    return summary_;
  }

  double norm2_now() const { return norm2(psi_); }

 private:
  void emit(const CheckpointVisitor& visit, std::size_t index, double t) {
    if (!visit) return;
    MultiModeState s(model_.geometry, psi_);
    s.normalize();
    visit(index, t, s);
  }

  // Classical RK4 from psi0_ (with k1_ = G(ta) psi0_ already computed) into psi_.
  void rk4(double ta, double h) {
    const double mid = ta + 0.5 * h;
    combine(psi_, psi0_, 1.0, k1_, h / 6.0);
    combine(tmp_, psi0_, 1.0, k1_, 0.5 * h);
    gen_.apply(tmp_, k_, mid);
    accumulate(psi_, k_, h / 3.0);
    combine(tmp_, psi0_, 1.0, k_, 0.5 * h);
    gen_.apply(tmp_, k_, mid);
    accumulate(psi_, k_, h / 3.0);
    combine(tmp_, psi0_, 1.0, k_, h);
    gen_.apply(tmp_, k_, ta + h);
    accumulate(psi_, k_, h / 6.0);
  }

  void advance(double ta, const double tb) {
    while (tb - ta > 1e-13 * std::max(1.0, tb)) {
      const double h = tb - ta;
      psi0_.swap(psi_);
      const double n0 = norm2(psi0_);
      gen_.apply(psi0_, k1_, ta);
      rk4(ta, h);
      const double n1 = norm2(psi_);

      const double loss = 1.0 - n1 / n0;
      summary_.max_step_loss = std::max(summary_.max_step_loss, loss);
      if (loss > control_.loss_error)
        throw NumericalFailure("norm loss " + std::to_string(loss) + " in one step at t=" + std::to_string(ta) +
                               "; reduce the time step");
      // The exact flow never increases the norm; growth means RK4 left its stability region.
      if (!(loss > -control_.growth_tolerance))
        throw NumericalFailure("norm grew by " + std::to_string(-loss) + " in one step at t=" + std::to_string(ta) +
                               "; reduce the time step");
      if (loss > control_.loss_warning) ++summary_.loss_warnings;
      if (n1 > threshold_) return;
      if (control_.placement == JumpPlacement::boundary) {
        tmp_.swap(psi_);
        jump(tb);
        return;
      }

      // The norm crossed the jump threshold inside the step: locate the
      // crossing on the cubic Hermite interpolant and jump there.
      gen_.apply(psi_, k_, tb);
      const double d0 = 2.0 * inner(psi0_, k1_).real() * h;
      const double d1 = 2.0 * inner(psi_, k_).real() * h;
      auto norm_at = [&](double s) {
        const auto w = hermite(s);
        return w.h00 * n0 + w.h10 * d0 + w.h01 * n1 + w.h11 * d1;
      };
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (lo + hi);
        (norm_at(m) > threshold_ ? lo : hi) = m;
      }
      const double s = hi;
      const auto w = hermite(s);
      // tmp = interpolated state at ta + s h.
      combine(tmp_, psi0_, w.h00, k1_, w.h10 * h);
      accumulate(tmp_, psi_, w.h01);
      accumulate(tmp_, k_, w.h11 * h);
      const double tj = ta + s * h;
      jump(tj);
      ta = tj;
    }
  }

  void jump(double t) {
    MultiModeState at(model_.geometry, tmp_);
    if (!(at.norm2() > control_.underflow)) throw NumericalFailure("norm underflow at t=" + std::to_string(t));
    const auto ops = build_jump_set(model_, t);
    const auto w = ops.weights(at.amplitudes(), model_.geometry);
    double total = 0.0;
    for (double x : w) total += x;
    if (!(total > 0.0)) throw NumericalFailure("jump requested but every jump weight is zero");
    const double r = stream_.uniform() * total;
    std::size_t chosen = w.size() - 1;
    double cum = 0.0;
    for (std::size_t n = 0; n < w.size(); ++n) {
      cum += w[n];
      if (cum >= r && w[n] > 0.0) {
        chosen = n;
        break;
      }
    }
    auto next = ops.apply(chosen, at);
    const double nn = next.norm2();
    if (!(nn > 0.0)) throw NumericalFailure("jump operator " + ops.operators()[chosen].tag() + " annihilated the state");
    next.normalize();
    auto amps = next.amplitudes();
    std::copy(amps.begin(), amps.end(), psi_.begin());
    threshold_ = stream_.uniform();
    ++jumps_;
    if (log_) log_->push_back({t, chosen, ops.operators()[chosen].tag()});
  }

  const NetworkModel& model_;
  EffectiveGenerator gen_;
  const TimeGrid& grid_;
  RandomStream& stream_;
  const StepControl& control_;
  std::vector<JumpEvent>* log_;
  Vec psi_, psi0_, k1_, k_, tmp_;
  double threshold_ = 0.0;
  std::size_t jumps_ = 0;
  TrajectorySummary summary_;
};

}  // namespace

TrajectorySummary integrate_trajectory(const MultiModeState& initial, const NetworkModel& model,
                                       const TimeGrid& grid, RandomStream& stream, const CheckpointVisitor& visit,
                                       const StepControl& control, std::vector<JumpEvent>* jump_log) {
  TrajectoryIntegrator integrator(initial, model, grid, stream, control, jump_log);
  return integrator.run(visit);
}

TrajectoryResult evolve_trajectory(const MultiModeState& initial, const NetworkModel& model, const TimeGrid& grid,
                                   RandomStream stream, const StepControl& control) {
  TrajectoryResult result;
  TrajectoryIntegrator integrator(initial, model, grid, stream, control, &result.jumps);
  const auto summary =
      integrator.run([&](std::size_t, double, const MultiModeState& s) { result.checkpoints.push_back(s); });
  result.final_norm2 = integrator.norm2_now();
  result.max_step_loss = summary.max_step_loss;
  result.loss_warnings = summary.loss_warnings;
  return result;
}

void RunningStat::add(double x) {
  ++count;
  const double delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (x - mean);
}

void RunningStat::merge(const RunningStat& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count), nb = static_cast<double>(other.count);
  const double n = na + nb;
  const double delta = other.mean - mean;
  mean += delta * nb / n;
  m2 += other.m2 + delta * delta * na * nb / n;
  count += other.count;
}

std::optional<double> RunningStat::standard_error() const {
  if (count < 2) return std::nullopt;
  return std::sqrt(variance() / static_cast<double>(count));
}

const std::vector<RunningStat>& EnsembleStats::series(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return stats[i];
  throw std::out_of_range("no observable named " + name);
}

void EnsembleStats::merge(const EnsembleStats& other) {
  if (names != other.names || times != other.times)
    throw std::invalid_argument("cannot merge ensembles with different observables or grids");
  for (std::size_t o = 0; o < stats.size(); ++o)
    for (std::size_t c = 0; c < stats[o].size(); ++c) stats[o][c].merge(other.stats[o][c]);
  trajectories += other.trajectories;
  if (stored_checkpoints == other.stored_checkpoints)
    for (std::size_t s = 0; s < stored_states.size(); ++s)
      stored_states[s].insert(stored_states[s].end(), other.stored_states[s].begin(), other.stored_states[s].end());
  jumps_per_trajectory.merge(other.jumps_per_trajectory);
  max_step_loss = std::max(max_step_loss, other.max_step_loss);
  loss_warnings += other.loss_warnings;
}

EnsembleStats run_ensemble(const MultiModeState& initial, const NetworkModel& model, const TimeGrid& grid,
                           const std::vector<Observable>& observables, const EnsembleOptions& options) {
  if (options.trajectories < 1) throw std::invalid_argument("ensemble needs at least one trajectory");
  const std::size_t N = options.trajectories;
  const std::size_t C = grid.checkpoint_count();
  const std::size_t K = observables.size();
  const int workers = options.workers > 0 ? options.workers : omp_get_max_threads();

  std::vector<std::size_t> store = options.store_checkpoints;
  std::sort(store.begin(), store.end());
  store.erase(std::unique(store.begin(), store.end()), store.end());
  for (auto c : store)
    if (c >= C) throw std::out_of_range("stored checkpoint index beyond the grid");
  std::vector<int> store_slot(C, -1);
  for (std::size_t s = 0; s < store.size(); ++s) store_slot[store[s]] = static_cast<int>(s);

  std::vector<double> values(N * C * K, 0.0);
  std::vector<std::vector<std::optional<MultiModeState>>> kept(store.size(), std::vector<std::optional<MultiModeState>>(N));
  std::vector<TrajectorySummary> summaries(N);

  std::mutex failure_mutex;
  std::size_t failed_index = std::numeric_limits<std::size_t>::max();
  std::string failure_message;

  auto run_one = [&](std::size_t k) {
    try {
      RandomStream stream(options.seed, options.first_trajectory + k);
      summaries[k] = integrate_trajectory(
          initial, model, grid, stream,
          [&](std::size_t c, double, const MultiModeState& s) {
            double* row = values.data() + (k * C + c) * K;
            for (std::size_t o = 0; o < K; ++o) row[o] = observables[o].evaluate(s);
            if (store_slot[c] >= 0 && options.first_trajectory + k < options.store_limit) kept[store_slot[c]][k] = s;
          },
          options.control);
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_mutex);
      if (k < failed_index) {
        failed_index = k;
        failure_message = e.what();
      }
    }
  };

  const bool per_trajectory = workers > 1 && N > 1;
  if (per_trajectory) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::size_t k = 0; k < N; ++k) run_one(k);
  } else {
    // A single trajectory (or a single worker): let the state kernels thread.
    const int saved = omp_get_max_threads();
    omp_set_num_threads(workers);
    for (std::size_t k = 0; k < N; ++k) run_one(k);
    omp_set_num_threads(saved);
  }
  if (failed_index != std::numeric_limits<std::size_t>::max())
    throw TrajectoryFailure(options.first_trajectory + failed_index, failure_message);

  EnsembleStats stats;
  for (const auto& o : observables) stats.names.push_back(o.name);
  stats.times = grid.checkpoint_times();
  stats.stats.assign(K, std::vector<RunningStat>(C));
  stats.trajectories = N;
  stats.seed = options.seed;
  for (std::size_t k = 0; k < N; ++k) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t o = 0; o < K; ++o) stats.stats[o][c].add(values[(k * C + c) * K + o]);
    stats.jumps_per_trajectory.add(static_cast<double>(summaries[k].jumps));
    stats.max_step_loss = std::max(stats.max_step_loss, summaries[k].max_step_loss);
    stats.loss_warnings += summaries[k].loss_warnings;
  }
  stats.stored_checkpoints = store;
  stats.stored_states.resize(store.size());
  for (std::size_t s = 0; s < store.size(); ++s) {
    for (auto& st : kept[s])
      if (st) stats.stored_states[s].push_back(std::move(*st));
  }
  return stats;
}

TimestepError compare_ensembles(EnsembleStats coarse, EnsembleStats fine) {
  if (coarse.names != fine.names || coarse.times.size() != fine.times.size())
    throw std::invalid_argument("ensembles are not comparable");
  TimestepError err;
  err.names = coarse.names;
  err.times = coarse.times;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t o = 0; o < coarse.names.size(); ++o) {
    std::vector<double> rel(coarse.times.size(), nan);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < coarse.times.size(); ++c) {
      const double f = fine.stats[o][c].mean;
      if (std::abs(f) <= 1e-12) continue;
      rel[c] = std::abs(coarse.stats[o][c].mean - f) / std::abs(f);
      sum += rel[c] * rel[c];
      ++n;
    }
    err.relative.push_back(std::move(rel));
    err.rms.push_back(n ? std::sqrt(sum / static_cast<double>(n)) : 0.0);
  }
  err.coarse = std::move(coarse);
  err.fine = std::move(fine);
  return err;
}

TimestepError estimate_timestep_error(const MultiModeState& initial, const NetworkModel& model,
                                      const TimeGrid& grid, const std::vector<Observable>& observables,
                                      const EnsembleOptions& options) {
  auto coarse = run_ensemble(initial, model, grid, observables, options);
  auto fine = run_ensemble(initial, model, grid.refined(), observables, options);
  return compare_ensembles(std::move(coarse), std::move(fine));
}

}  // namespace cim
