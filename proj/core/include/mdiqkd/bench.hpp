#pragma once

#include <array>
#include <cstdint>

#include "mdiqkd/bsm.hpp"
#include "mdiqkd/polarization.hpp"
#include "mdiqkd/rng.hpp"
#include "mdiqkd/transmitter.hpp"

namespace mdiqkd {

inline constexpr std::size_t kCellCount = kSettingCount * kSettingCount;

constexpr std::size_t cell_index(std::size_t setting_a, std::size_t setting_b) {
  return setting_a * kSettingCount + setting_b;
}

/// Slot and outcome counts for one (Alice setting, Bob setting) pair.
struct CellCounts {
  std::uint64_t slots = 0;
  std::array<std::uint64_t, 4> outcomes{};  // indexed by OutcomeClass 0..3

  std::uint64_t of(OutcomeClass c) const {
    return c == OutcomeClass::DoubleOther ? 0 : outcomes[static_cast<std::size_t>(c)];
  }
  std::uint64_t singles() const { return outcomes[1] + outcomes[2]; }
};

using WindowCounts = std::array<CellCounts, kCellCount>;

/// What one user's light looks like at the measurement node for a window.
struct ArmLight {
  ChannelUnitary channel;  // user EPC followed by fibre, frozen for the window
  IntensityTable table;
};

/// Phase-averaged outcome probabilities for every setting pair.
std::array<OutcomeProbabilities, kCellCount> cell_probabilities(
    const ArmLight& alice, const ArmLight& bob, Basis basis,
    const DetectorParams& detectors);

/// Aggregate sampling of `slots` i.i.d. slots with the channel frozen:
/// multinomial split across setting pairs, then across outcome classes.
WindowCounts sample_window(const ArmLight& alice, const ArmLight& bob,
                           Basis basis, const DetectorParams& detectors,
                           std::uint64_t slots, Rng& rng);

/// Draws a multinomial sample with sequential conditional binomials.
template <std::size_t N>
std::array<std::uint64_t, N> sample_multinomial(std::uint64_t n,
                                                const std::array<double, N>& p,
                                                Rng& rng);

}  // namespace mdiqkd
