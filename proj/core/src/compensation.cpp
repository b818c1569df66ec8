#include "mdiqkd/compensation.hpp"

#include <algorithm>
#include <cmath>

namespace mdiqkd {

StateCounts EstimatorWindow::pooled(Basis b) const {
  StateCounts total;
  for (std::size_t i = 0; i < by_label.size(); ++i) {
    if (basis_of(static_cast<Bb84Label>(i)) != b) continue;
    total.n_err += by_label[i].n_err;
    total.n_max += by_label[i].n_max;
  }
  return total;
}

void EstimatorWindow::validate() const {
  for (const auto& c : by_label) {
    if (c.n_err > c.n_max) throw InvalidInput("N_err exceeds N_max");
  }
}

double MisalignmentEstimate::error_signal() const {
  if (theta_z && theta_x) return 0.5 * (*theta_z + *theta_x);
  if (theta_z) return *theta_z;
  if (theta_x) return *theta_x;
  return 0.0;
}

MisalignmentEstimate estimate_theta(const EstimatorWindow& window) {
  MisalignmentEstimate est;
  est.counts_z = window.pooled(Basis::Z);
  est.counts_x = window.pooled(Basis::X);
  auto theta = [](const StateCounts& c) -> std::optional<double> {
    if (c.n_max == 0) return std::nullopt;
    const double ratio = std::clamp(
        static_cast<double>(c.n_err) / static_cast<double>(c.n_max), 0.0, 1.0);
    return std::asin(std::sqrt(ratio));
  };
  est.theta_z = theta(est.counts_z);
  est.theta_x = theta(est.counts_x);
  return est;
}

MisalignmentEstimate carry_forward(const MisalignmentEstimate& latest,
                                   const MisalignmentEstimate& previous) {
  MisalignmentEstimate out = latest;
  if (!out.theta_z) {
    out.theta_z = previous.theta_z;
    out.counts_z = previous.counts_z;
  }
  if (!out.theta_x) {
    out.theta_x = previous.theta_x;
    out.counts_x = previous.counts_x;
  }
  return out;
}

CollectionPlan plan_collection(double p_hat, double epsilon, double delta,
                               double rate_per_s) {
  if (!(p_hat > 0.0 && p_hat < 1.0)) throw InvalidInput("p_hat must be in (0,1)");
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("delta must be in (0,1)");
  if (!(rate_per_s > 0.0)) throw InvalidInput("rate must be positive");
  const double n = (2.0 + epsilon) * std::log(2.0 / delta) / (p_hat * epsilon * epsilon);
  CollectionPlan plan;
  plan.n_min = static_cast<std::uint64_t>(std::ceil(n));
  plan.t_min_s = static_cast<double>(plan.n_min) / rate_per_s;
  return plan;
}

void ControllerConfig::validate() const {
  if (!(alpha >= 0.0)) throw InvalidInput("alpha must be nonnegative");
  if (!(threshold_rad > 0.0)) throw InvalidInput("threshold must be positive");
  if (!(collection_s > 0.0)) throw InvalidInput("collection time must be positive");
  if (!(max_step_rad > 0.0)) throw InvalidInput("max step must be positive");
}

bool should_trigger(const MisalignmentEstimate& est, const ControllerConfig& cfg) {
  return (est.theta_z && *est.theta_z > cfg.threshold_rad) ||
         (est.theta_x && *est.theta_x > cfg.threshold_rad);
}

ControlStep control_step(const ControllerState& state,
                         const MisalignmentEstimate& est,
                         const ControllerConfig& cfg, const SqueezerBank& bank) {
  ControlStep out{state, bank};
  const double error = est.error_signal();
  if (state.last_error && error > *state.last_error) {
    if (state.last_step_rad != 0.0) {
      const std::size_t prev = state.last_squeezer;
      const double before = out.bank.retardance(prev);
      out.bank.adjust(prev, -state.last_step_rad);
      out.undone_rad = out.bank.retardance(prev) - before;
    }
    out.state.direction[out.state.active] = -out.state.direction[out.state.active];
    out.state.active = (out.state.active + 1) % SqueezerBank::kCount;
    out.reversed = true;
  }
  const std::size_t k = out.state.active;
  const double magnitude = std::min(cfg.alpha * error, cfg.max_step_rad);
  out.squeezer = k;
  out.step_rad = magnitude * out.state.direction[k];
  if (magnitude > 0.0) {
    const double before = out.bank.retardance(k);
    out.saturated = out.bank.adjust(k, out.step_rad);
    out.step_rad = out.bank.retardance(k) - before;
    if (out.saturated) {
      out.state.direction[k] = -out.state.direction[k];
      out.state.active = (k + 1) % SqueezerBank::kCount;
    }
  }
  out.state.last_squeezer = k;
  out.state.last_step_rad = out.step_rad;
  out.state.last_error = error;
  return out;
}

ControllerState controller_idle(const ControllerState& state) {
  ControllerState out = state;
  out.last_error.reset();
  out.last_step_rad = 0.0;
  return out;
}

void ReferenceRate::record(std::uint64_t singles, std::uint64_t slots) {
  if (slots == 0) return;
  entries_.emplace_back(singles, slots);
  while (entries_.size() > history_) entries_.pop_front();
}

std::optional<double> ReferenceRate::expected(std::uint64_t slots) const {
  std::uint64_t singles = 0;
  std::uint64_t total = 0;
  for (const auto& [s, n] : entries_) {
    singles += s;
    total += n;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(singles) / static_cast<double>(total) *
         static_cast<double>(slots);
}

}  // namespace mdiqkd
