#pragma once

#include <array>
#include <cstdint>

#include "mdiqkd/polarization.hpp"
#include "mdiqkd/rng.hpp"
#include "mdiqkd/transmitter.hpp"
#include "mdiqkd/types.hpp"

namespace mdiqkd {

/// Threshold detector model. `efficiency` folds in channel loss; dark clicks
/// are per-slot Bernoulli, independent across the two detectors.
struct DetectorParams {
  double efficiency = 0.0;
  double dark_probability = 0.0;
  void validate() const;
};

/// Measurement basis alternates Z, X, Z, ... every `period_s` seconds.
struct BasisSchedule {
  double period_s = 15.0;
  double origin_s = 0.0;
  void validate() const;
};

Basis basis_at(double t, const BasisSchedule& schedule);
std::uint64_t window_index(double t, const BasisSchedule& schedule);

/// The two detectors behind the PBS on the monitored beam-splitter port. In
/// the X basis the PBS is rotated, so the H arm projects on D and the V arm
/// on A.
enum class Arm : std::uint8_t { H = 0, V = 1 };

enum class OutcomeClass : std::uint8_t {
  PsiPlus = 0,   // both detectors clicked
  SingleH = 1,   // H arm only
  SingleV = 2,   // V arm only
  NoClick = 3,
  DoubleOther = 4,  // reserved for layouts with more detectors
};
inline constexpr std::array<OutcomeClass, 4> kTwoDetectorClasses = {
    OutcomeClass::PsiPlus, OutcomeClass::SingleH, OutcomeClass::SingleV,
    OutcomeClass::NoClick};

std::string_view to_string(OutcomeClass c);
std::optional<OutcomeClass> parse_outcome_class(std::string_view s);
constexpr bool is_single(OutcomeClass c) {
  return c == OutcomeClass::SingleH || c == OutcomeClass::SingleV;
}

OutcomeClass classify(bool click_h, bool click_v);

struct OutcomeRecord {
  std::uint64_t slot = 0;
  Basis basis = Basis::Z;
  OutcomeClass cls = OutcomeClass::NoClick;
  bool click_h = false;
  bool click_v = false;
};

/// Mean photon numbers reaching the two monitored detectors.
struct ModeIntensities {
  double h = 0.0;  // basis-aligned arm (H or D)
  double v = 0.0;  // orthogonal arm (V or A)
};

/// Mode amplitudes a_m = (<m|psi_A> sqrt(mu_A) + e^{i phi} <m|psi_B> sqrt(mu_B)) / sqrt2
/// on the monitored port; returns |a_m|^2.
ModeIntensities mode_intensities(const CoherentPulse& a, const CoherentPulse& b,
                                 Basis basis, double phi);

/// Both beam-splitter ports: {monitored H, monitored V, discarded H, discarded V}.
std::array<double, 4> all_output_intensities(const CoherentPulse& a,
                                             const CoherentPulse& b,
                                             Basis basis, double phi);

/// 1 - (1 - d) exp(-eta I)
double click_probability(double mean_photons, const DetectorParams& params);

OutcomeRecord sample_outcome(const ModeIntensities& intensities,
                             const DetectorParams& params, Rng& rng,
                             std::uint64_t slot = 0, Basis basis = Basis::Z);

/// Outcome probabilities averaged over the uniformly random relative phase.
struct OutcomeProbabilities {
  double psi_plus = 0.0;
  double single_h = 0.0;
  double single_v = 0.0;
  double no_click = 1.0;

  double of(OutcomeClass c) const;
};

/// Closed form: with I_m(phi) = A_m + Re(c_m e^{i phi}) the phase average of
/// exp(-eta I_m) is exp(-eta A_m) I0(eta |c_m|).
OutcomeProbabilities phase_averaged_outcomes(const PolarizationState& a,
                                             double mean_a,
                                             const PolarizationState& b,
                                             double mean_b, Basis basis,
                                             const DetectorParams& params);

/// I0(x) - 1, accurate for small x.
double bessel_i0_minus_one(double x);

}  // namespace mdiqkd
