#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>

#include "mdiqkd/polarization.hpp"
#include "mdiqkd/types.hpp"

namespace mdiqkd {

struct StateCounts {
  std::uint64_t n_err = 0;
  std::uint64_t n_max = 0;
};

/// Recycled-singles counts for one collection window, indexed by the
/// transmitted BB84 label (H, V count toward Z; D, A toward X).
struct EstimatorWindow {
  double duration_s = 0.0;
  std::array<StateCounts, 4> by_label{};

  StateCounts& at(Bb84Label l) { return by_label[static_cast<std::size_t>(l)]; }
  const StateCounts& at(Bb84Label l) const {
    return by_label[static_cast<std::size_t>(l)];
  }
  StateCounts pooled(Basis b) const;
  void validate() const;  // n_err <= n_max for every label
};

struct MisalignmentEstimate {
  std::optional<double> theta_z;
  std::optional<double> theta_x;
  StateCounts counts_z;
  StateCounts counts_x;
  std::uint64_t window = 0;
  double timestamp_s = 0.0;

  std::optional<double> theta(Basis b) const {
    return b == Basis::Z ? theta_z : theta_x;
  }
  bool any() const { return theta_z.has_value() || theta_x.has_value(); }
  // Mean of the available angles; the controller's error signal.
  double error_signal() const;
};

/// Pools each basis's labels and returns arcsin(sqrt(sum N_err / sum N_max)).
/// A basis with no reference counts is left unavailable.
MisalignmentEstimate estimate_theta(const EstimatorWindow& window);

/// Replaces estimates for bases that were not measured with the previous
/// values, so each side carries the most recent reading.
MisalignmentEstimate carry_forward(const MisalignmentEstimate& latest,
                                   const MisalignmentEstimate& previous);

struct CollectionPlan {
  std::uint64_t n_min = 0;
  double t_min_s = 0.0;
};

/// Two-sided multiplicative Chernoff sizing:
/// 2 exp(-N p eps^2 / (2 + eps)) <= delta.
CollectionPlan plan_collection(double p_hat, double epsilon, double delta,
                               double rate_per_s);

struct ControllerConfig {
  double alpha = 0.55;
  double threshold_rad = 0.13;
  double collection_s = 15.0;
  double max_step_rad = 1.0;  // per-window retardance step cap
  bool enabled = true;
  void validate() const;
};

struct ControllerState {
  std::size_t active = 0;
  std::optional<double> last_error;
  std::array<int, SqueezerBank::kCount> direction{1, 1, 1, 1};
  // Most recent move, so a move that made things worse can be taken back.
  std::size_t last_squeezer = 0;
  double last_step_rad = 0.0;
};

bool should_trigger(const MisalignmentEstimate& est, const ControllerConfig& cfg);

struct ControlStep {
  ControllerState state;
  SqueezerBank bank;
  std::size_t squeezer = 0;  // squeezer that moved
  double step_rad = 0.0;     // signed retardance change applied
  double undone_rad = 0.0;   // previous move taken back (on a reversal)
  bool reversed = false;     // error worsened: undone, flipped, advanced
  bool saturated = false;    // hit the retardance limit: advanced
};

/// One hill-climbing move: a retardance change of alpha * error on the
/// active squeezer in its remembered direction. When the error grew since
/// the previous move, that move is taken back, the squeezer's direction
/// flips, and the next squeezer (cyclic) takes over.
ControlStep control_step(const ControllerState& state,
                         const MisalignmentEstimate& est,
                         const ControllerConfig& cfg, const SqueezerBank& bank);

/// Called for windows without a trigger; forgets the stale error reference.
ControllerState controller_idle(const ControllerState& state);

/// Trailing per-slot singles rate for one (label, intensity) pair, used to
/// form the intensity-dependent reference count N_max.
class ReferenceRate {
 public:
  explicit ReferenceRate(std::size_t history = 4) : history_(history) {}

  void record(std::uint64_t singles, std::uint64_t slots);
  // Expected singles for `slots`; nullopt before any data.
  std::optional<double> expected(std::uint64_t slots) const;

 private:
  std::size_t history_;
  std::deque<std::pair<std::uint64_t, std::uint64_t>> entries_;
};

}  // namespace mdiqkd
