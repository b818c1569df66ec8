#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "mdiqkd/compensation.hpp"
#include "mdiqkd/polarization.hpp"

namespace mdiqkd::testing {

// Polarization angle a such that a rotation about `axis` by sphere angle 2a
// has mean misalignment (theta_z + theta_x) / 2 equal to `target`.
inline ChannelUnitary rotation_with_mean_error(const StokesAxis& axis, double target) {
  double lo = 0.0, hi = 1.5;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    const auto a = misalignment_angles(ChannelUnitary::rotation(axis, 2 * mid));
    ((a.theta_z + a.theta_x) / 2 < target ? lo : hi) = mid;
  }
  return ChannelUnitary::rotation(axis, lo + hi);
}

inline StokesAxis random_axis(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double x = n(rng), y = n(rng), z = n(rng);
  const double r = std::sqrt(x * x + y * y + z * z);
  return {x / r, y / r, z / r};
}

struct LoopTrace {
  std::vector<MisalignmentAngles> truth;  // per window, before that window's move
};

// Windows alternate Z and X. Each window measures one basis with
// `singles_per_window` reference counts; the error count is binomial in the
// true cross-projection probability. The other basis is carried forward.
inline LoopTrace run_static_loop(const ChannelUnitary& fiber, const ControllerConfig& cfg,
                                 int windows, std::uint64_t singles_per_window, Rng& rng) {
  SqueezerBank bank;
  ControllerState state;
  MisalignmentEstimate prev;
  LoopTrace trace;
  for (int w = 0; w < windows; ++w) {
    const ChannelUnitary total = fiber * squeezer_unitary(bank).unitary;
    const auto truth = misalignment_angles(total);
    trace.truth.push_back(truth);
    const auto e = error_rates(total);
    const Basis b = w % 2 == 0 ? Basis::Z : Basis::X;
    std::binomial_distribution<std::uint64_t> draw(singles_per_window,
                                                   b == Basis::Z ? e.e_z : e.e_x);
    EstimatorWindow win;
    win.duration_s = cfg.collection_s;
    const Bb84Label l = bb84_label(b, 0);
    win.at(l).n_max = singles_per_window;
    win.at(l).n_err = draw(rng);
    const auto est = carry_forward(estimate_theta(win), prev);
    prev = est;
    if (should_trigger(est, cfg)) {
      const auto step = control_step(state, est, cfg, bank);
      state = step.state;
      bank = step.bank;
    } else {
      state = controller_idle(state);
    }
  }
  return trace;
}

}  // namespace mdiqkd::testing
