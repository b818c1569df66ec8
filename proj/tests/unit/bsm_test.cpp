#include <cmath>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>

#include "mdiqkd/bench.hpp"
#include "mdiqkd/bsm.hpp"
#include "optics_oracle.hpp"

namespace mdiqkd {
namespace {

constexpr double kPi = std::numbers::pi;

CoherentPulse pulse(char label, double mean) { return {bb84_state(label), mean, 0.0}; }

TEST(ModeIntensities, SingleSourcePassThrough) {
  const auto m = mode_intensities(pulse('H', 0.28), pulse('H', 0.0), Basis::Z, 1.3);
  EXPECT_NEAR(m.h, 0.14, 1e-15);
  EXPECT_NEAR(m.v, 0.0, 1e-15);
}

TEST(ModeIntensities, DestructiveInterference) {
  const auto m = mode_intensities(pulse('H', 0.28), pulse('H', 0.28), Basis::Z, kPi);
  EXPECT_NEAR(m.h, 0.0, 1e-15);
  EXPECT_NEAR(m.v, 0.0, 1e-15);
}

TEST(ModeIntensities, EnergyConservation) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const CoherentPulse a{random_unitary(rng).apply(bb84_state('H')), u(rng), 0.0};
    const CoherentPulse b{random_unitary(rng).apply(bb84_state('D')), u(rng), 0.0};
    for (Basis basis : kBases) {
      const auto all = all_output_intensities(a, b, basis, 2 * kPi * u(rng));
      const double sum = std::accumulate(all.begin(), all.end(), 0.0);
      EXPECT_NEAR(sum, a.mean_photons + b.mean_photons, 1e-12);
    }
  }
}

TEST(PhaseAveraged, MatchesQuadrature) {
  // D against A in the X basis, midpoint rule over phi.
  const DetectorParams det{0.3, 1e-4};
  const double mu = 0.4;
  const auto p = phase_averaged_outcomes(bb84_state('D'), mu, bb84_state('A'), mu, Basis::X, det);
  constexpr int n = 20000;
  double coinc = 0.0, sh = 0.0, sv = 0.0;
  for (int k = 0; k < n; ++k) {
    const double phi = 2 * kPi * (k + 0.5) / n;
    const auto m = mode_intensities(pulse('D', mu), pulse('A', mu), Basis::X, phi);
    const double ph = click_probability(m.h, det), pv = click_probability(m.v, det);
    coinc += ph * pv;
    sh += ph * (1 - pv);
    sv += (1 - ph) * pv;
  }
  EXPECT_NEAR(p.psi_plus, coinc / n, 1e-12);
  EXPECT_NEAR(p.single_h, sh / n, 1e-12);
  EXPECT_NEAR(p.single_v, sv / n, 1e-12);
  EXPECT_NEAR(p.psi_plus + p.single_h + p.single_v + p.no_click, 1.0, 1e-14);
}

TEST(PhaseAveraged, BesselSmallArgument) {
  EXPECT_NEAR(bessel_i0_minus_one(1e-8), 2.5e-17, 1e-30);
  EXPECT_NEAR(bessel_i0_minus_one(1.0), std::cyl_bessel_i(0.0, 1.0) - 1.0, 1e-14);
  EXPECT_NEAR(bessel_i0_minus_one(20.0), std::cyl_bessel_i(0.0, 20.0) - 1.0, 1e-14 * 4e7);
}

TEST(SampleOutcome, NoLightNoDark) {
  Rng rng(1);
  const DetectorParams det{0.5, 0.0};
  for (int i = 0; i < 10000; ++i) {
    EXPECT_EQ(sample_outcome({0.0, 0.0}, det, rng).cls, OutcomeClass::NoClick);
  }
}

TEST(SampleOutcome, CoincidenceClosedForm) {
  Rng rng(2);
  const DetectorParams det{1.0, 0.0};
  constexpr int n = 1000000;
  int c = 0;
  for (int i = 0; i < n; ++i) c += sample_outcome({1.0, 1.0}, det, rng).cls == OutcomeClass::PsiPlus;
  const double p = std::pow(1 - std::exp(-1.0), 2);
  EXPECT_NEAR(p, 0.3996, 1e-4);
  EXPECT_LE(std::abs(double(c) / n - p), 3 * std::sqrt(p * (1 - p) / n));
}

TEST(SampleOutcome, ClassIsFunctionOfClicks) {
  EXPECT_EQ(classify(true, true), OutcomeClass::PsiPlus);
  EXPECT_EQ(classify(true, false), OutcomeClass::SingleH);
  EXPECT_EQ(classify(false, true), OutcomeClass::SingleV);
  EXPECT_EQ(classify(false, false), OutcomeClass::NoClick);
}

TEST(PhaseAveraged, VacuumPairGainNegligible) {
  const DetectorParams det{0.054, 1e-6};
  const auto p = phase_averaged_outcomes(bb84_state('H'), 0.001, bb84_state('V'), 0.001,
                                         Basis::Z, det);
  EXPECT_LT(p.psi_plus, 1e-9);
}

TEST(PhaseAveraged, SinglesErrorFollowsMisalignment) {
  const DetectorParams det{0.054, 1e-6};
  const double mu = 0.28;
  double prev = -1.0;
  for (double th = 0.0; th <= 0.6; th += 0.05) {
    const auto u = ChannelUnitary::rotation(kAxisS3, 2 * th);
    const auto p = phase_averaged_outcomes(u.apply(bb84_state('H')), mu, bb84_state('H'), 0.0,
                                           Basis::Z, det);
    const double orth = click_probability(mu * std::pow(std::sin(th), 2) / 2, det);
    const double para = click_probability(mu * std::pow(std::cos(th), 2) / 2, det);
    EXPECT_NEAR(p.single_v, orth * (1 - para), 1e-15);
    EXPECT_GT(p.single_v, prev);
    prev = p.single_v;
  }
}

TEST(Schedule, BasisAlternates) {
  const BasisSchedule s{15.0, 0.0};
  EXPECT_EQ(basis_at(0.0, s), Basis::Z);
  EXPECT_EQ(basis_at(14.999, s), Basis::Z);
  EXPECT_EQ(basis_at(15.0, s), Basis::X);
  EXPECT_EQ(basis_at(29.9, s), Basis::X);
  EXPECT_EQ(basis_at(100.0, s), Basis::Z);
  EXPECT_EQ(window_index(100.0, s), 6u);
  int z = 0, x = 0;
  for (int w = 0; w < 960; ++w) (basis_at((w + 0.5) * 15.0, s) == Basis::Z ? z : x)++;
  EXPECT_EQ(z, 480);
  EXPECT_EQ(x, 480);
  EXPECT_THROW((BasisSchedule{0.0, 0.0}.validate()), InvalidInput);
}

TEST(Detector, Validation) {
  EXPECT_THROW((DetectorParams{1.5, 0.0}.validate()), InvalidInput);
  EXPECT_THROW((DetectorParams{0.5, 1.0}.validate()), InvalidInput);
  EXPECT_NO_THROW((DetectorParams{0.5, 0.0}.validate()));
}

TEST(MonteCarlo, GainsMatchClosedForm) {
  // 10^5 trials per pair here; the acceptance run uses 10^6.
  const DetectorParams det{0.3, 1e-4};
  const auto t = uniform_decoy_table();
  Rng rng(12);
  const auto ua = ChannelUnitary::rotation(kAxisS3, 0.2);
  for (Basis users : kBases) {
    for (Intensity a : kIntensities) {
      for (Intensity b : kIntensities) {
        const auto c = testing::compare_pair(Basis::Z, users, a, b, t, det, ua,
                                             ChannelUnitary::identity(), 100000, rng);
        EXPECT_LE(std::abs(c.mc_gain - c.analytic_gain), 3 * c.sigma + 1e-12)
            << to_string(users) << " " << to_string(a) << to_string(b);
      }
    }
  }
}

TEST(Window, MultinomialConservesSlots) {
  const DetectorParams det{0.054, 1e-6};
  const ArmLight a{ChannelUnitary::identity(), uniform_decoy_table()};
  Rng rng(4);
  const auto counts = sample_window(a, a, Basis::Z, det, 150000000ULL, rng);
  std::uint64_t slots = 0;
  for (const auto& c : counts) {
    slots += c.slots;
    std::uint64_t o = 0;
    for (auto k : c.outcomes) o += k;
    EXPECT_EQ(o, c.slots);
  }
  EXPECT_EQ(slots, 150000000ULL);
}

TEST(Window, SymmetricGains) {
  // Q_ab and Q_ba agree within statistics on a symmetric channel.
  const DetectorParams det{0.054, 1e-6};
  const ArmLight a{ChannelUnitary::identity(), uniform_decoy_table()};
  Rng rng(5);
  const auto counts = sample_window(a, a, Basis::Z, det, 2000000000ULL, rng);
  auto gain = [&](Intensity ia, Intensity ib) {
    double c = 0, s = 0;
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y) {
        const auto& cell = counts[cell_index(setting_index(x, Basis::Z, ia),
                                             setting_index(y, Basis::Z, ib))];
        c += cell.of(OutcomeClass::PsiPlus);
        s += cell.slots;
      }
    return std::pair{c / s, std::sqrt(std::max(c, 1.0)) / s};
  };
  for (auto [ia, ib] : {std::pair{Intensity::Mu, Intensity::Nu},
                        std::pair{Intensity::Mu, Intensity::Omega},
                        std::pair{Intensity::Nu, Intensity::Omega}}) {
    const auto [q1, e1] = gain(ia, ib);
    const auto [q2, e2] = gain(ib, ia);
    EXPECT_LE(std::abs(q1 - q2), 4 * std::hypot(e1, e2));
  }
}

}  // namespace
}  // namespace mdiqkd
