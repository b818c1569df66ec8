#include <array>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mdiqkd/transmitter.hpp"

namespace mdiqkd {
namespace {

void check_frequencies(const IntensityTable& t, std::uint64_t seed) {
  constexpr int n = 1000000;
  std::array<int, 3> count{};
  int z = 0, one = 0;
  for (int s = 0; s < n; ++s) {
    const auto d = draw_decision(s, t, seed);
    ++count[index(d.intensity)];
    z += d.basis == Basis::Z;
    one += d.bit;
  }
  for (Intensity i : kIntensities) {
    const double p = t.probability(i);
    const double sigma = std::sqrt(n * p * (1 - p));
    EXPECT_LE(std::abs(count[index(i)] - n * p), 3 * sigma + 1e-9) << to_string(i);
  }
  const double half_sigma = std::sqrt(n * 0.25);
  EXPECT_LE(std::abs(z - n / 2.0), 3 * half_sigma);
  EXPECT_LE(std::abs(one - n / 2.0), 3 * half_sigma);
}

TEST(DrawDecision, OptimizedTableFrequencies) { check_frequencies(optimized_decoy_table(), 17); }
TEST(DrawDecision, KeyRateTableFrequencies) { check_frequencies(uniform_decoy_table(), 18); }

TEST(DrawDecision, DegenerateOmega) {
  IntensityTable t;
  t.p_mu = 0.0;
  t.p_nu = 0.0;
  t.p_omega = 1.0;
  for (int s = 0; s < 10000; ++s) EXPECT_EQ(draw_decision(s, t, 4).intensity, Intensity::Omega);
}

TEST(DrawDecision, DeterministicPerSeedAndSlot) {
  const auto t = optimized_decoy_table();
  for (std::uint64_t s = 0; s < 1000; ++s) {
    EXPECT_EQ(draw_decision(s, t, 9), draw_decision(s, t, 9));
    EXPECT_EQ(draw_decision(s, t, 9).slot, s);
  }
  int differ = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) differ += !(draw_decision(s, t, 9) == draw_decision(s, t, 10));
  EXPECT_GT(differ, 500);
}

TEST(DrawDecision, PatternRepeats) {
  const auto t = uniform_decoy_table();
  for (std::uint64_t s = 0; s < 3000; ++s) {
    auto a = draw_decision(s, t, 2, 1000), b = draw_decision(s + 1000, t, 2, 1000);
    EXPECT_EQ(a.bit, b.bit);
    EXPECT_EQ(a.basis, b.basis);
    EXPECT_EQ(a.intensity, b.intensity);
  }
}

TEST(DrawDecision, RunsTest) {
  // Wald-Wolfowitz runs test on the bit sequence, two-sided at 1%.
  const auto t = uniform_decoy_table();
  constexpr int n = 100000;
  int ones = 0, runs = 1, prev = -1;
  for (int s = 0; s < n; ++s) {
    const int b = draw_decision(s, t, 21).bit;
    ones += b;
    if (prev >= 0 && b != prev) ++runs;
    prev = b;
  }
  const double n1 = ones, n0 = n - ones;
  const double mean = 2 * n1 * n0 / n + 1;
  const double var = 2 * n1 * n0 * (2 * n1 * n0 - n) / (double(n) * n * (n - 1));
  EXPECT_LT(std::abs((runs - mean) / std::sqrt(var)), 2.576);
}

TEST(IntensityTable, Validation) {
  EXPECT_NO_THROW(optimized_decoy_table().validate());
  IntensityTable t;
  t.nu = 0.5;
  EXPECT_THROW(t.validate(), InvalidInput);
  t = {};
  t.p_mu = 0.5;
  EXPECT_THROW(t.validate(), InvalidInput);
  t = {};
  t.omega = -0.1;
  EXPECT_THROW(t.validate(), InvalidInput);
}

TEST(Accounting, KeyFraction) {
  EXPECT_NEAR(key_fraction(0.52), 0.0338, 1e-4);
  EXPECT_EQ(key_fraction(0.0), 0.0);
  EXPECT_DOUBLE_EQ(key_fraction(1.0), 0.125);
}

TEST(Accounting, RecyclableFraction) {
  const auto r = recyclable_fraction(0.15);
  EXPECT_NEAR(r.per_user, 0.1275, 1e-12);
  EXPECT_NEAR(r.total, 0.255, 1e-12);
  EXPECT_EQ(recyclable_fraction(0.0).total, 0.0);
  EXPECT_DOUBLE_EQ(recyclable_fraction(0.5).per_user, 0.25);
  EXPECT_DOUBLE_EQ(recyclable_fraction(0.5).total, 0.5);
}

TEST(Accounting, MatchesEnumeration) {
  for (const auto& t : {optimized_decoy_table(), uniform_decoy_table()}) {
    double key = 0.0, rec_a = 0.0, rec_b = 0.0, total = 0.0;
    for (int bit_a = 0; bit_a < 2; ++bit_a)
      for (int bit_b = 0; bit_b < 2; ++bit_b)
        for (int z_a = 0; z_a < 2; ++z_a)
          for (int z_b = 0; z_b < 2; ++z_b)
            for (Intensity ia : kIntensities)
              for (Intensity ib : kIntensities) {
                const double p = 0.25 * t.probability(ia) * 0.25 * t.probability(ib);
                total += p;
                if (z_a && z_b && ia == Intensity::Mu && ib == Intensity::Mu && bit_a != bit_b)
                  key += p;
                if (ib == Intensity::Omega && ia != Intensity::Omega) rec_a += p;
                if (ia == Intensity::Omega && ib != Intensity::Omega) rec_b += p;
              }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(key_fraction(t.p_mu), key, 1e-12);
    EXPECT_NEAR(recyclable_fraction(t.p_omega).per_user, rec_a, 1e-12);
    EXPECT_NEAR(recyclable_fraction(t.p_omega).per_user, rec_b, 1e-12);
    EXPECT_NEAR(recyclable_fraction(t.p_omega).total, rec_a + rec_b, 1e-12);
  }
}

TEST(Settings, IndexRoundTripAndProbability) {
  const auto t = optimized_decoy_table();
  double sum = 0.0;
  for (std::size_t i = 0; i < kSettingCount; ++i) {
    const auto s = setting_from_index(i);
    EXPECT_EQ(setting_index(s.bit, s.basis, s.intensity), i);
    sum += setting_probability(i, t);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(PreparePulse, Examples) {
  const auto t = uniform_decoy_table();
  const auto p = prepare_pulse({0, Basis::Z, Intensity::Mu, 5}, t, 1);
  EXPECT_NEAR(fidelity(p.state, bb84_state('H')), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(p.mean_photons, 0.28);
  const auto q = prepare_pulse({1, Basis::X, Intensity::Omega, 6}, t, 1);
  EXPECT_NEAR(fidelity(q.state, bb84_state('A')), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(q.mean_photons, 0.001);
}

TEST(PreparePulse, PhaseUniform) {
  // Chi-square with 20 bins, 19 dof, 1% critical value 36.19.
  const auto t = uniform_decoy_table();
  constexpr int n = 100000, bins = 20;
  std::array<int, bins> h{};
  for (int s = 0; s < n; ++s) {
    const double ph = prepare_pulse(draw_decision(s, t, 3), t, 3).phase;
    ASSERT_GE(ph, 0.0);
    ASSERT_LT(ph, 2 * std::numbers::pi);
    ++h[static_cast<int>(ph / (2 * std::numbers::pi) * bins)];
  }
  double chi2 = 0.0;
  const double e = double(n) / bins;
  for (int c : h) chi2 += (c - e) * (c - e) / e;
  EXPECT_LT(chi2, 36.19);
}

}  // namespace
}  // namespace mdiqkd
