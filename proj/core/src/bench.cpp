#include "mdiqkd/bench.hpp"

#include <algorithm>
#include <random>

namespace mdiqkd {

template <std::size_t N>
std::array<std::uint64_t, N> sample_multinomial(std::uint64_t n,
                                                const std::array<double, N>& p,
                                                Rng& rng) {
  std::array<std::uint64_t, N> out{};
  double remaining_p = 0.0;
  for (double x : p) remaining_p += x;
  std::uint64_t remaining = n;
  for (std::size_t i = 0; i + 1 < N && remaining > 0; ++i) {
    if (remaining_p <= 0.0) break;
    const double q = std::clamp(p[i] / remaining_p, 0.0, 1.0);
    std::uint64_t k = 0;
    if (q >= 1.0) {
      k = remaining;
    } else if (q > 0.0) {
      std::binomial_distribution<std::uint64_t> binom(remaining, q);
      k = binom(rng);
    }
    out[i] = k;
    remaining -= k;
    remaining_p -= p[i];
  }
  out[N - 1] += remaining;
  return out;
}

template std::array<std::uint64_t, 4> sample_multinomial<4>(
    std::uint64_t, const std::array<double, 4>&, Rng&);
template std::array<std::uint64_t, kCellCount> sample_multinomial<kCellCount>(
    std::uint64_t, const std::array<double, kCellCount>&, Rng&);

std::array<OutcomeProbabilities, kCellCount> cell_probabilities(
    const ArmLight& alice, const ArmLight& bob, Basis basis,
    const DetectorParams& detectors) {
  std::array<OutcomeProbabilities, kCellCount> probs;
  std::array<PolarizationState, kSettingCount> arrived_a;
  std::array<PolarizationState, kSettingCount> arrived_b;
  for (std::size_t s = 0; s < kSettingCount; ++s) {
    const auto label = setting_from_index(s).label();
    arrived_a[s] = alice.channel.apply(bb84_state(label));
    arrived_b[s] = bob.channel.apply(bb84_state(label));
  }
  for (std::size_t sa = 0; sa < kSettingCount; ++sa) {
    const double mean_a = alice.table.mean_photons(setting_from_index(sa).intensity);
    for (std::size_t sb = 0; sb < kSettingCount; ++sb) {
      const double mean_b = bob.table.mean_photons(setting_from_index(sb).intensity);
      probs[cell_index(sa, sb)] = phase_averaged_outcomes(
          arrived_a[sa], mean_a, arrived_b[sb], mean_b, basis, detectors);
    }
  }
  return probs;
}

WindowCounts sample_window(const ArmLight& alice, const ArmLight& bob,
                           Basis basis, const DetectorParams& detectors,
                           std::uint64_t slots, Rng& rng) {
  const auto probs = cell_probabilities(alice, bob, basis, detectors);
  std::array<double, kCellCount> weights{};
  for (std::size_t sa = 0; sa < kSettingCount; ++sa) {
    for (std::size_t sb = 0; sb < kSettingCount; ++sb) {
      weights[cell_index(sa, sb)] = setting_probability(sa, alice.table) *
                                    setting_probability(sb, bob.table);
    }
  }
  const auto cell_slots = sample_multinomial(slots, weights, rng);
  WindowCounts counts;
  for (std::size_t c = 0; c < kCellCount; ++c) {
    counts[c].slots = cell_slots[c];
    const auto& p = probs[c];
    counts[c].outcomes = sample_multinomial<4>(
        cell_slots[c], {p.psi_plus, p.single_h, p.single_v, p.no_click}, rng);
  }
  return counts;
}

}  // namespace mdiqkd
