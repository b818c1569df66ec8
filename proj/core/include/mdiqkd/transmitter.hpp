#pragma once

#include <array>
#include <cstdint>

#include "mdiqkd/polarization.hpp"
#include "mdiqkd/types.hpp"

namespace mdiqkd {

/// Signal/decoy mean photon numbers and their selection probabilities.
struct IntensityTable {
  double mu = 0.28;
  double nu = 0.07;
  double omega = 0.001;
  double p_mu = 1.0 / 3.0;
  double p_nu = 1.0 / 3.0;
  double p_omega = 1.0 / 3.0;

  double mean_photons(Intensity i) const;
  double probability(Intensity i) const;

  // Throws InvalidInput unless mu > nu > omega >= 0 and the probabilities
  // are nonnegative and sum to one.
  void validate() const;
};

IntensityTable optimized_decoy_table();  // P = (0.52, 0.33, 0.15)
IntensityTable uniform_decoy_table();    // P = (1/3, 1/3, 1/3)

struct PulseDecision {
  int bit = 0;
  Basis basis = Basis::Z;
  Intensity intensity = Intensity::Mu;
  std::uint64_t slot = 0;

  Bb84Label label() const { return bb84_label(basis, bit); }
  bool operator==(const PulseDecision&) const = default;
};

/// One of the 12 (bit, basis, intensity) settings a user can choose per slot.
/// Index layout: intensity * 4 + basis * 2 + bit.
inline constexpr std::size_t kSettingCount = 12;
struct Setting {
  int bit;
  Basis basis;
  Intensity intensity;
  Bb84Label label() const { return bb84_label(basis, bit); }
};
Setting setting_from_index(std::size_t index);
std::size_t setting_index(int bit, Basis basis, Intensity intensity);
double setting_probability(std::size_t index, const IntensityTable& table);

/// Reproducible per (seed, slot). With `pattern_length` > 0 the decisions
/// repeat with that period, emulating a finite stored random pattern.
PulseDecision draw_decision(std::uint64_t slot, const IntensityTable& table,
                            std::uint64_t seed, std::uint64_t pattern_length = 0);

/// Fraction of pulse pairs usable for key: both Z, both mu, anticorrelated.
double key_fraction(double p_mu);

struct RecyclableFraction {
  double per_user = 0.0;
  double total = 0.0;
};
/// Pairs where exactly one user sends omega and the other a non-omega state.
RecyclableFraction recyclable_fraction(double p_omega);

struct CoherentPulse {
  PolarizationState state;
  double mean_photons = 0.0;
  double phase = 0.0;  // rad, uniform on [0, 2pi)
};

CoherentPulse prepare_pulse(const PulseDecision& decision,
                            const IntensityTable& table, std::uint64_t seed);

}  // namespace mdiqkd
