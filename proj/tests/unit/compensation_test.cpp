#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "closed_loop.hpp"
#include "mdiqkd/compensation.hpp"

namespace mdiqkd {
namespace {

MisalignmentEstimate est(std::optional<double> z, std::optional<double> x) {
  MisalignmentEstimate e;
  e.theta_z = z;
  e.theta_x = x;
  return e;
}

EstimatorWindow window_z(std::uint64_t err, std::uint64_t max) {
  EstimatorWindow w;
  w.duration_s = 15.0;
  w.at(Bb84Label::H) = {err, max};
  return w;
}

TEST(EstimateTheta, Examples) {
  EXPECT_EQ(*estimate_theta(window_z(0, 1000)).theta_z, 0.0);
  EXPECT_NEAR(*estimate_theta(window_z(9, 10000)).theta_z, 0.0300, 5e-5);
  EXPECT_FALSE(estimate_theta(window_z(0, 1000)).theta_x.has_value());
  EXPECT_FALSE(estimate_theta(EstimatorWindow{}).any());
}

TEST(EstimateTheta, PoolsLabelsBeforeArcsine) {
  EstimatorWindow w;
  w.at(Bb84Label::D) = {10, 1000};
  w.at(Bb84Label::A) = {30, 1000};
  EXPECT_NEAR(*estimate_theta(w).theta_x, std::asin(std::sqrt(0.02)), 1e-15);
  EXPECT_EQ(estimate_theta(w).counts_x.n_max, 2000u);
}

TEST(EstimateTheta, RangeInvariant) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t max = 1 + rng() % 100000;
    const auto t = *estimate_theta(window_z(rng() % (max + 1), max)).theta_z;
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, std::acos(0.0));
  }
  EXPECT_THROW(window_z(5, 4).validate(), InvalidInput);
}

TEST(EstimateTheta, StaticChannelStatistics) {
  // 21000 singles per window at true theta 0.2.
  Rng rng(2);
  const double p = std::pow(std::sin(0.2), 2);
  std::binomial_distribution<std::uint64_t> draw(21000, p);
  constexpr int reps = 4000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < reps; ++i) {
    const double t = *estimate_theta(window_z(draw(rng), 21000)).theta_z;
    sum += t;
    sum2 += t * t;
  }
  const double mean = sum / reps, sd = std::sqrt(sum2 / reps - mean * mean);
  EXPECT_NEAR(mean, 0.2, 0.01);
  // Delta method: sd(theta) = sqrt(p(1-p)/N) / sin(2 theta).
  const double predicted = std::sqrt(p * (1 - p) / 21000) / std::sin(0.4);
  EXPECT_NEAR(sd / predicted, 1.0, 0.1);
}

TEST(EstimateTheta, BiasAtHundredThousand) {
  Rng rng(3);
  for (double theta : {0.02, 0.05, 0.1, 0.13, 0.3}) {
    std::binomial_distribution<std::uint64_t> draw(100000, std::pow(std::sin(theta), 2));
    double sum = 0.0;
    constexpr int reps = 2000;
    for (int i = 0; i < reps; ++i) sum += *estimate_theta(window_z(draw(rng), 100000)).theta_z;
    EXPECT_LT(std::abs(sum / reps - theta), 0.005) << theta;
  }
}

TEST(CarryForward, KeepsOtherBasis) {
  auto prev = est(0.1, 0.2);
  auto now = carry_forward(est(0.05, std::nullopt), prev);
  EXPECT_EQ(*now.theta_z, 0.05);
  EXPECT_EQ(*now.theta_x, 0.2);
  EXPECT_NEAR(now.error_signal(), 0.125, 1e-15);
  EXPECT_EQ(est(0.3, std::nullopt).error_signal(), 0.3);
}

TEST(PlanCollection, ReferenceNumbers) {
  const auto p = plan_collection(0.0009, 0.5, 0.3, 1400);
  EXPECT_NEAR(double(p.n_min), 21100, 200);
  EXPECT_NEAR(p.t_min_s, 15.0, 0.3);
  const auto q = plan_collection(0.0009, 0.5, 0.3, 2800);
  EXPECT_EQ(q.n_min, p.n_min);
  EXPECT_DOUBLE_EQ(q.t_min_s, p.t_min_s / 2);
  EXPECT_THROW(plan_collection(0.0, 0.5, 0.3, 1), InvalidInput);
  EXPECT_THROW(plan_collection(0.1, 0.0, 0.3, 1), InvalidInput);
  EXPECT_THROW(plan_collection(0.1, 0.5, 1.0, 1), InvalidInput);
  EXPECT_THROW(plan_collection(0.1, 0.5, 0.3, 0), InvalidInput);
}

TEST(PlanCollection, ChernoffCoverage) {
  Rng rng(4);
  for (auto [p, eps, delta] : {std::tuple{0.0009, 0.5, 0.3}, std::tuple{0.01, 0.2, 0.05},
                               std::tuple{0.05, 0.1, 0.1}}) {
    const auto n = plan_collection(p, eps, delta, 1.0).n_min;
    std::binomial_distribution<std::uint64_t> draw(n, p);
    int outside = 0;
    constexpr int reps = 10000;
    for (int i = 0; i < reps; ++i) {
      const double ph = double(draw(rng)) / double(n);
      outside += std::abs(ph - p) >= eps * p;
    }
    EXPECT_LE(double(outside) / reps, delta) << p;
  }
}

TEST(ShouldTrigger, Examples) {
  const ControllerConfig cfg;
  EXPECT_FALSE(should_trigger(est(0.05, 0.05), cfg));
  EXPECT_TRUE(should_trigger(est(0.14, 0.02), cfg));
  EXPECT_TRUE(should_trigger(est(0.02, 0.14), cfg));
  EXPECT_FALSE(should_trigger(est(0.13, 0.13), cfg));
  EXPECT_FALSE(should_trigger(est(std::nullopt, std::nullopt), cfg));
}

TEST(ControlStep, ZeroAlphaIsInert) {
  ControllerConfig cfg;
  cfg.alpha = 0.0;
  SqueezerBank bank;
  bank.set_retardance(1, 0.3);
  const auto s = control_step({}, est(0.4, 0.2), cfg, bank);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s.bank.retardance(i), bank.retardance(i));
}

TEST(ControlStep, StepIsAlphaTimesError) {
  const auto s = control_step({}, est(0.2, 0.2), ControllerConfig{}, SqueezerBank{});
  EXPECT_NEAR(s.step_rad, 0.11, 1e-15);
  EXPECT_NEAR(s.bank.retardance(0), 0.11, 1e-15);
  EXPECT_EQ(s.squeezer, 0u);
}

TEST(ControlStep, ReversalUndoesAndAdvances) {
  const ControllerConfig cfg;
  auto s1 = control_step({}, est(0.2, 0.2), cfg, SqueezerBank{});
  auto s2 = control_step(s1.state, est(0.3, 0.3), cfg, s1.bank);
  EXPECT_TRUE(s2.reversed);
  EXPECT_NEAR(s2.undone_rad, -0.11, 1e-15);
  EXPECT_EQ(s2.bank.retardance(0), 0.0);
  EXPECT_EQ(s2.squeezer, 1u);
  EXPECT_EQ(s2.state.direction[0], -1);
  // Cyclic advance.
  ControllerState st = s2.state;
  SqueezerBank bank = s2.bank;
  double err = 0.3;
  for (int i = 0; i < 4; ++i) {
    err += 0.01;
    auto s = control_step(st, est(err, err), cfg, bank);
    EXPECT_EQ(s.state.active, (st.active + 1) % 4);
    st = s.state;
    bank = s.bank;
  }
}

TEST(ControlStep, IdleForgetsReference) {
  auto s = control_step({}, est(0.2, 0.2), ControllerConfig{}, SqueezerBank{});
  const auto idle = controller_idle(s.state);
  EXPECT_FALSE(idle.last_error.has_value());
  EXPECT_FALSE(control_step(idle, est(0.5, 0.5), ControllerConfig{}, s.bank).reversed);
}

TEST(ClosedLoop, ConvergesFromStaticMisalignment) {
  const ControllerConfig cfg;
  int aligned = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    const auto fiber = testing::rotation_with_mean_error(testing::random_axis(rng), 0.3);
    const auto trace = testing::run_static_loop(fiber, cfg, 200, 21000, rng);
    for (const auto& t : trace.truth) {
      if (t.theta_z < 0.13 && t.theta_x < 0.13) {
        ++aligned;
        break;
      }
    }
  }
  EXPECT_GE(aligned, 95);
}

TEST(ClosedLoop, CycleDoesNotIncreaseErrorOnAverage) {
  const ControllerConfig cfg;
  double before = 0.0, after = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(5000 + seed);
    const auto fiber = testing::rotation_with_mean_error(testing::random_axis(rng), 0.3);
    // Two windows per estimate of both bases, four squeezers.
    const auto trace = testing::run_static_loop(fiber, cfg, 9, 21000, rng);
    before += (trace.truth.front().theta_z + trace.truth.front().theta_x) / 2;
    after += (trace.truth.back().theta_z + trace.truth.back().theta_x) / 2;
  }
  EXPECT_LE(after, before);
}

TEST(ReferenceRate, TrailingAverage) {
  ReferenceRate r(2);
  EXPECT_FALSE(r.expected(100).has_value());
  r.record(10, 1000);
  EXPECT_DOUBLE_EQ(*r.expected(100), 1.0);
  r.record(30, 1000);
  EXPECT_DOUBLE_EQ(*r.expected(100), 2.0);
  r.record(50, 1000);  // oldest entry drops out
  EXPECT_DOUBLE_EQ(*r.expected(100), 4.0);
  r.record(5, 0);  // ignored
  EXPECT_DOUBLE_EQ(*r.expected(100), 4.0);
}

}  // namespace
}  // namespace mdiqkd
