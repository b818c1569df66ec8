#include <benchmark/benchmark.h>

#include <random>

#include "mdiqkd/bench.hpp"
#include "mdiqkd/decoy.hpp"
#include "mdiqkd/session.hpp"
#include "mdiqkd/wire.hpp"

namespace {

using namespace mdiqkd;

void BM_PhaseAveragedOutcomes(benchmark::State& state) {
  const DetectorParams det{0.054, 1e-6};
  const auto a = ChannelUnitary::rotation(kAxisS3, 0.2).apply(bb84_state('H'));
  const auto b = bb84_state('V');
  for (auto _ : state) {
    benchmark::DoNotOptimize(phase_averaged_outcomes(a, 0.28, b, 0.07, Basis::Z, det));
  }
}
BENCHMARK(BM_PhaseAveragedOutcomes);

void BM_SampleWindow(benchmark::State& state) {
  const DetectorParams det{0.054, 1e-6};
  const ArmLight alice{ChannelUnitary::rotation(kAxisS1, 0.1), uniform_decoy_table()};
  const ArmLight bob{ChannelUnitary::rotation(kAxisS2, 0.1), uniform_decoy_table()};
  Rng rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_window(alice, bob, Basis::Z, det, 150'000'000, rng));
  }
}
BENCHMARK(BM_SampleWindow)->Unit(benchmark::kMicrosecond);

GainTable window_gains() {
  const DetectorParams det{0.054, 1e-6};
  const ArmLight arm{ChannelUnitary::identity(), uniform_decoy_table()};
  Rng rng(2);
  TallySet t(Basis::Z);
  for (int w = 0; w < 40; ++w) {
    const auto counts = sample_window(arm, arm, Basis::Z, det, 150'000'000, rng);
    for (std::size_t a = 0; a < kSettingCount; ++a) {
      for (std::size_t b = 0; b < kSettingCount; ++b) {
        const auto sa = setting_from_index(a), sb = setting_from_index(b);
        if (sa.basis != sb.basis) continue;
        const auto& c = counts[cell_index(a, b)];
        auto& e = t.at(sa.basis, sa.intensity, sb.intensity);
        e.sent += c.slots;
        e.coincidences += c.of(OutcomeClass::PsiPlus);
        const bool err = sa.basis == Basis::Z ? sa.bit == sb.bit : sa.bit != sb.bit;
        if (err) e.errors += c.of(OutcomeClass::PsiPlus);
      }
    }
  }
  return gains_from_tallies(t);
}

void BM_Bounds(benchmark::State& state) {
  const auto gains = window_gains();
  const auto method = state.range(0) ? BoundMethod::Lp : BoundMethod::Analytic;
  LpOptions lp;
  lp.sigma_multiplier = 3.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bound_y11_e11(gains, uniform_decoy_table(), method, lp));
  }
}
BENCHMARK(BM_Bounds)->Arg(0)->Arg(1)->ArgName("lp")->Unit(benchmark::kMicrosecond);

void BM_FrameRoundTrip(benchmark::State& state) {
  wire::Batch batch;
  batch.window = 7;
  for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(state.range(0)); ++i) {
    batch.items.push_back(wire::BasisIntensityReveal{7, i, User::Alice, Basis::Z, Intensity::Omega});
  }
  const wire::Message m = batch;
  for (auto _ : state) {
    wire::FrameDecoder d;
    d.feed(wire::encode_frame(m));
    benchmark::DoNotOptimize(d.next());
  }
}
BENCHMARK(BM_FrameRoundTrip)->Arg(1)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_SessionHour(benchmark::State& state) {
  SessionConfig c;
  c.duration_s = 3600.0;
  for (auto _ : state) benchmark::DoNotOptimize(run_session(c));
}
BENCHMARK(BM_SessionHour)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace
BENCHMARK_MAIN();
