#include "mdiqkd/transmitter.hpp"

#include <cmath>
#include <numbers>

#include "mdiqkd/rng.hpp"

namespace mdiqkd {

double IntensityTable::mean_photons(Intensity i) const {
  switch (i) {
    case Intensity::Mu: return mu;
    case Intensity::Nu: return nu;
    case Intensity::Omega: return omega;
  }
  return 0.0;
}

double IntensityTable::probability(Intensity i) const {
  switch (i) {
    case Intensity::Mu: return p_mu;
    case Intensity::Nu: return p_nu;
    case Intensity::Omega: return p_omega;
  }
  return 0.0;
}

void IntensityTable::validate() const {
  if (!(mu > nu && nu > omega && omega >= 0.0) || !std::isfinite(mu)) {
    throw InvalidInput("intensities must satisfy mu > nu > omega >= 0");
  }
  if (!(p_mu >= 0.0 && p_nu >= 0.0 && p_omega >= 0.0)) {
    throw InvalidInput("intensity probabilities must be nonnegative");
  }
  if (std::abs(p_mu + p_nu + p_omega - 1.0) > 1e-12) {
    throw InvalidInput("intensity probabilities must sum to 1");
  }
}

IntensityTable optimized_decoy_table() {
  return {0.28, 0.07, 0.001, 0.52, 0.33, 0.15};
}

IntensityTable uniform_decoy_table() {
  return {0.28, 0.07, 0.001, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
}

Setting setting_from_index(std::size_t index) {
  if (index >= kSettingCount) throw InvalidInput("setting index out of range");
  return {static_cast<int>(index % 2), static_cast<Basis>((index / 2) % 2),
          static_cast<Intensity>(index / 4)};
}

std::size_t setting_index(int bit, Basis basis, Intensity intensity) {
  return mdiqkd::index(intensity) * 4 + mdiqkd::index(basis) * 2 +
         static_cast<std::size_t>(bit & 1);
}

double setting_probability(std::size_t index, const IntensityTable& table) {
  return 0.25 * table.probability(setting_from_index(index).intensity);
}

PulseDecision draw_decision(std::uint64_t slot, const IntensityTable& table,
                            std::uint64_t seed, std::uint64_t pattern_length) {
  const std::uint64_t key = pattern_length > 0 ? slot % pattern_length : slot;
  PulseDecision d;
  d.slot = slot;
  d.bit = hash_uniform(seed, key, 0) < 0.5 ? 0 : 1;
  d.basis = hash_uniform(seed, key, 1) < 0.5 ? Basis::Z : Basis::X;
  const double u = hash_uniform(seed, key, 2);
  if (u < table.p_mu) {
    d.intensity = Intensity::Mu;
  } else if (u < table.p_mu + table.p_nu) {
    d.intensity = Intensity::Nu;
  } else {
    d.intensity = Intensity::Omega;
  }
  return d;
}

double key_fraction(double p_mu) {
  if (!(p_mu >= 0.0 && p_mu <= 1.0)) throw InvalidInput("P_mu must be in [0,1]");
  return p_mu * p_mu / 8.0;
}

RecyclableFraction recyclable_fraction(double p_omega) {
  if (!(p_omega >= 0.0 && p_omega <= 1.0)) {
    throw InvalidInput("P_omega must be in [0,1]");
  }
  const double per_user = p_omega * (1.0 - p_omega);
  return {per_user, 2.0 * per_user};
}

CoherentPulse prepare_pulse(const PulseDecision& decision,
                            const IntensityTable& table, std::uint64_t seed) {
  CoherentPulse p;
  p.state = bb84_state(decision.label());
  p.mean_photons = table.mean_photons(decision.intensity);
  p.phase = 2.0 * std::numbers::pi * hash_uniform(seed, decision.slot, 3);
  return p;
}

}  // namespace mdiqkd
