#include "mdiqkd/bsm.hpp"

#include <cmath>

namespace mdiqkd {
namespace {

const PolarizationState& arm_state(Basis basis, Arm arm) {
  static const PolarizationState h = bb84_state(Bb84Label::H);
  static const PolarizationState v = bb84_state(Bb84Label::V);
  static const PolarizationState d = bb84_state(Bb84Label::D);
  static const PolarizationState a = bb84_state(Bb84Label::A);
  if (basis == Basis::Z) return arm == Arm::H ? h : v;
  return arm == Arm::H ? d : a;
}

Complex overlap(const PolarizationState& m, const PolarizationState& s) {
  return std::conj(m.h()) * s.h() + std::conj(m.v()) * s.v();
}

// log of the phase-averaged no-click probability for one or both detectors:
// log((1-d)^k) - eta A + log I0(eta |c|)
double log_no_click(double a, Complex c, int detectors,
                    const DetectorParams& p) {
  const double log_dark = detectors * std::log1p(-p.dark_probability);
  return log_dark - p.efficiency * a +
         std::log1p(bessel_i0_minus_one(p.efficiency * std::abs(c)));
}

}  // namespace

void DetectorParams::validate() const {
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) {
    throw InvalidInput("detector efficiency must be in [0,1]");
  }
  if (!(dark_probability >= 0.0 && dark_probability < 1.0)) {
    throw InvalidInput("dark-click probability must be in [0,1)");
  }
}

void BasisSchedule::validate() const {
  if (!(period_s > 0.0) || !std::isfinite(period_s)) {
    throw InvalidInput("basis switching period must be positive");
  }
}

std::uint64_t window_index(double t, const BasisSchedule& schedule) {
  if (!(t >= schedule.origin_s)) throw InvalidInput("time precedes schedule origin");
  return static_cast<std::uint64_t>(std::floor((t - schedule.origin_s) / schedule.period_s));
}

Basis basis_at(double t, const BasisSchedule& schedule) {
  return window_index(t, schedule) % 2 == 0 ? Basis::Z : Basis::X;
}

std::string_view to_string(OutcomeClass c) {
  switch (c) {
    case OutcomeClass::PsiPlus: return "psi_plus";
    case OutcomeClass::SingleH: return "single_h";
    case OutcomeClass::SingleV: return "single_v";
    case OutcomeClass::NoClick: return "no_click";
    case OutcomeClass::DoubleOther: return "double_other";
  }
  return "?";
}

std::optional<OutcomeClass> parse_outcome_class(std::string_view s) {
  if (s == "psi_plus") return OutcomeClass::PsiPlus;
  if (s == "single_h") return OutcomeClass::SingleH;
  if (s == "single_v") return OutcomeClass::SingleV;
  if (s == "no_click") return OutcomeClass::NoClick;
  if (s == "double_other") return OutcomeClass::DoubleOther;
  return std::nullopt;
}

OutcomeClass classify(bool click_h, bool click_v) {
  if (click_h && click_v) return OutcomeClass::PsiPlus;
  if (click_h) return OutcomeClass::SingleH;
  if (click_v) return OutcomeClass::SingleV;
  return OutcomeClass::NoClick;
}

std::array<double, 4> all_output_intensities(const CoherentPulse& a,
                                             const CoherentPulse& b,
                                             Basis basis, double phi) {
  const Complex phase = std::polar(1.0, phi);
  const double sa = std::sqrt(a.mean_photons);
  const double sb = std::sqrt(b.mean_photons);
  std::array<double, 4> out{};
  for (int arm = 0; arm < 2; ++arm) {
    const auto& m = arm_state(basis, static_cast<Arm>(arm));
    const Complex x = overlap(m, a.state) * sa;
    const Complex y = overlap(m, b.state) * sb * phase;
    out[arm] = 0.5 * std::norm(x + y);
    out[2 + arm] = 0.5 * std::norm(x - y);
  }
  return out;
}

ModeIntensities mode_intensities(const CoherentPulse& a, const CoherentPulse& b,
                                 Basis basis, double phi) {
  const auto all = all_output_intensities(a, b, basis, phi);
  return {all[0], all[1]};
}

double click_probability(double mean_photons, const DetectorParams& params) {
  // 1 - (1-d) e^{-eta I}, written to stay accurate for tiny probabilities
  return -std::expm1(std::log1p(-params.dark_probability) -
                     params.efficiency * mean_photons);
}

OutcomeRecord sample_outcome(const ModeIntensities& intensities,
                             const DetectorParams& params, Rng& rng,
                             std::uint64_t slot, Basis basis) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  OutcomeRecord r;
  r.slot = slot;
  r.basis = basis;
  r.click_h = uniform(rng) < click_probability(intensities.h, params);
  r.click_v = uniform(rng) < click_probability(intensities.v, params);
  r.cls = classify(r.click_h, r.click_v);
  return r;
}

double OutcomeProbabilities::of(OutcomeClass c) const {
  switch (c) {
    case OutcomeClass::PsiPlus: return psi_plus;
    case OutcomeClass::SingleH: return single_h;
    case OutcomeClass::SingleV: return single_v;
    case OutcomeClass::NoClick: return no_click;
    case OutcomeClass::DoubleOther: return 0.0;
  }
  return 0.0;
}

double bessel_i0_minus_one(double x) {
  if (std::abs(x) >= 1.0) return std::cyl_bessel_i(0.0, std::abs(x)) - 1.0;
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 0.0;
  for (int k = 1; k < 30; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

OutcomeProbabilities phase_averaged_outcomes(const PolarizationState& a,
                                             double mean_a,
                                             const PolarizationState& b,
                                             double mean_b, Basis basis,
                                             const DetectorParams& params) {
  const double sa = std::sqrt(mean_a);
  const double sb = std::sqrt(mean_b);
  double avg[2];
  Complex cross[2];
  for (int arm = 0; arm < 2; ++arm) {
    const auto& m = arm_state(basis, static_cast<Arm>(arm));
    const Complex x = overlap(m, a) * sa;
    const Complex y = overlap(m, b) * sb;
    avg[arm] = 0.5 * (std::norm(x) + std::norm(y));
    cross[arm] = std::conj(x) * y;  // I_m = avg + Re(cross e^{i phi})
  }
  // eps_* = 1 - P(no click on the given detector set)
  const double eps_h = -std::expm1(log_no_click(avg[0], cross[0], 1, params));
  const double eps_v = -std::expm1(log_no_click(avg[1], cross[1], 1, params));
  const double eps_hv =
      -std::expm1(log_no_click(avg[0] + avg[1], cross[0] + cross[1], 2, params));
  OutcomeProbabilities p;
  p.no_click = 1.0 - eps_hv;
  p.single_h = eps_hv - eps_v;
  p.single_v = eps_hv - eps_h;
  p.psi_plus = std::max(0.0, eps_h + eps_v - eps_hv);
  return p;
}

}  // namespace mdiqkd
