// Monte Carlo wave-function integration: single trajectories under the
// effective generator with stochastic jumps, and seeded ensembles.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cim/fock.hpp"
#include "cim/model.hpp"
#include "cim/rng.hpp"

namespace cim {

// Raised when a trajectory cannot be continued (step too large, norm
// underflow, inconsistent jump set).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TimeGrid {
 public:
  TimeGrid(double t_max, int steps, int checkpoint_stride = 1);

  double t_max() const { return t_max_; }
  int steps() const { return steps_; }
  int stride() const { return stride_; }
  double dt() const { return t_max_ / steps_; }
  double time_at(int step) const { return step == steps_ ? t_max_ : t_max_ * step / steps_; }

  // Step indices of the checkpoints: 0, stride, 2 stride, ..., steps.
  const std::vector<int>& checkpoint_steps() const { return checkpoints_; }
  std::size_t checkpoint_count() const { return checkpoints_.size(); }
  std::vector<double> checkpoint_times() const;
  // Same checkpoint times with every step split in two.
  TimeGrid refined() const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double t_max_;
  int steps_;
  int stride_;
  std::vector<int> checkpoints_;
};

// Where a jump happens once the norm crosses its threshold during a step:
// at the interpolated crossing time, or at the end of the step.
enum class JumpPlacement { interpolated, boundary };

struct StepControl {
  JumpPlacement placement = JumpPlacement::interpolated;
  // Fractional norm loss over one step without a jump.
  double loss_warning = 0.01;
  double loss_error = 0.95;
  // Relative norm growth over one step that signals an unstable step size.
  double growth_tolerance = 1e-10;
  double underflow = 1e-30;
};

struct JumpEvent {
  double time;
  std::size_t op;
  std::string tag;
};

struct TrajectoryResult {
  std::vector<MultiModeState> checkpoints;  // normalized copies
  std::vector<JumpEvent> jumps;
  double final_norm2 = 1.0;   // unnormalized norm^2 at t_max since the last jump
  double max_step_loss = 0.0;
  std::size_t loss_warnings = 0;
};

struct TrajectorySummary {
  std::size_t jumps = 0;
  double max_step_loss = 0.0;
  std::size_t loss_warnings = 0;
};

// Called at each checkpoint with its index, time and the normalized state.
using CheckpointVisitor = std::function<void(std::size_t, double, const MultiModeState&)>;

TrajectorySummary integrate_trajectory(const MultiModeState& initial, const NetworkModel& model,
                                       const TimeGrid& grid, RandomStream& stream,
                                       const CheckpointVisitor& visit, const StepControl& control = {},
                                       std::vector<JumpEvent>* jump_log = nullptr);

TrajectoryResult evolve_trajectory(const MultiModeState& initial, const NetworkModel& model,
                                   const TimeGrid& grid, RandomStream stream,
                                   const StepControl& control = {});

// Running mean / variance with pairwise merge.
struct RunningStat {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  void merge(const RunningStat& other);
  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
  // Absent for fewer than two samples.
  std::optional<double> standard_error() const;
};

struct Observable {
  std::string name;
  std::function<double(const MultiModeState&)> evaluate;
};

struct EnsembleStats {
  std::vector<std::string> names;
  std::vector<double> times;
  std::vector<std::vector<RunningStat>> stats;  // [observable][checkpoint]
  std::size_t trajectories = 0;
  std::uint64_t seed = 0;
  // Normalized states at the requested checkpoints, [checkpoint][trajectory],
  // for the trajectories under the store limit.
  std::vector<std::size_t> stored_checkpoints;
  std::vector<std::vector<MultiModeState>> stored_states;
  // Jump statistics.
  RunningStat jumps_per_trajectory;
  double max_step_loss = 0.0;
  std::size_t loss_warnings = 0;

  const std::vector<RunningStat>& series(const std::string& name) const;
  // Folds a disjoint ensemble over the same grid and observables into this one.
  void merge(const EnsembleStats& other);
};

class TrajectoryFailure : public NumericalFailure {
 public:
  TrajectoryFailure(std::size_t index, const std::string& what)
      : NumericalFailure("trajectory " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

struct EnsembleOptions {
  std::size_t trajectories = 1;
  std::uint64_t seed = 1;
  int workers = 0;  // 0: use every available thread
  std::size_t first_trajectory = 0;
  // Checkpoint indices whose states are kept for cross-trajectory quantities.
  std::vector<std::size_t> store_checkpoints;
  // Only trajectories with global index below this keep their states.
  std::size_t store_limit = std::numeric_limits<std::size_t>::max();
  StepControl control;
};

// Trajectory k draws from RandomStream(seed, first_trajectory + k). Results are
// reduced in trajectory order and do not depend on the worker count.
EnsembleStats run_ensemble(const MultiModeState& initial, const NetworkModel& model, const TimeGrid& grid,
                           const std::vector<Observable>& observables, const EnsembleOptions& options);

struct TimestepError {
  std::vector<std::string> names;
  std::vector<double> times;
  std::vector<std::vector<double>> relative;  // [observable][checkpoint], NaN where undefined
  std::vector<double> rms;                    // per observable
  EnsembleStats coarse;
  EnsembleStats fine;
};

// Reruns the ensemble with the step halved and identical random streams; the
// RMS is taken over checkpoints where the fine mean is nonzero.
TimestepError estimate_timestep_error(const MultiModeState& initial, const NetworkModel& model,
                                      const TimeGrid& grid, const std::vector<Observable>& observables,
                                      const EnsembleOptions& options);

TimestepError compare_ensembles(EnsembleStats coarse, EnsembleStats fine);

}  // namespace cim
