// Prints one PASS/FAIL line per acceptance criterion. Exits nonzero only
// with --strict, so the ctest entry records the run without masking which
// criteria fail.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "closed_loop.hpp"
#include "forward_model.hpp"
#include "mdiqkd/analysis.hpp"
#include "mdiqkd/compensation.hpp"
#include "mdiqkd/report.hpp"
#include "mdiqkd/session.hpp"
#include "optics_oracle.hpp"
#include "random_messages.hpp"

namespace fs = std::filesystem;
using namespace mdiqkd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int n, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void info(const std::string& s) {
  std::printf("    %s\n", s.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool within(double v, double target, double rel) { return std::abs(v / target - 1.0) <= rel; }

const fs::path kFixtures = fs::path(MDIQKD_SOURCE_DIR) / "data" / "fixtures";

void criterion1() {
  const auto t0 = Clock::now();
  AnalysisOptions opt;
  const auto z = analyze_fixture(kFixtures / "z_half", opt);
  const auto x = analyze_fixture(kFixtures / "x_half", opt);
  const double elapsed = seconds_since(t0);
  const double rz = z.from_reference->rate(), rx = x.from_reference->rate();
  const double mean = (rz + rx) / 2;
  const bool pass = within(rz, 5.94e-6, 0.05) && within(rx, 8.96e-6, 0.05) &&
                    within(mean, 7.45e-6, 0.05) && elapsed < 1.0;
  verdict(1, pass,
          fmt("R_Z %.3e (5.94e-6), R_X %.3e (8.96e-6), mean %.3e (7.45e-6), %.1f ms", rz, rx, mean,
              elapsed * 1e3));
  if (z.from_bounds && x.from_bounds) {
    info(fmt("own analytic bounds on the fixture gains: raw R_Z %.3e, raw R_X %.3e",
             z.from_bounds->raw, x.from_bounds->raw));
  }
}

void criterion2() {
  const auto p = plan_collection(9e-4, 0.5, 0.3, 1.4e3);
  const bool pass = p.n_min >= 20900 && p.n_min <= 21300 && p.t_min_s >= 14.9 && p.t_min_s <= 15.3;
  verdict(2, pass, fmt("N_min %llu in [20900, 21300], t_min %.3f s in [14.9, 15.3]",
                       static_cast<unsigned long long>(p.n_min), p.t_min_s));
}

void criterion3() {
  const auto t = optimized_decoy_table();
  double key = 0.0, rec = 0.0;
  for (std::size_t a = 0; a < kSettingCount; ++a) {
    for (std::size_t b = 0; b < kSettingCount; ++b) {
      const auto sa = setting_from_index(a), sb = setting_from_index(b);
      const double p = setting_probability(a, t) * setting_probability(b, t);
      if (sa.basis == Basis::Z && sb.basis == Basis::Z && sa.intensity == Intensity::Mu &&
          sb.intensity == Intensity::Mu && sa.bit != sb.bit) {
        key += p;
      }
      if (sb.intensity == Intensity::Omega && sa.intensity != Intensity::Omega) rec += p;
    }
  }
  const double kf = key_fraction(t.p_mu);
  const auto rf = recyclable_fraction(t.p_omega);
  const bool agree = std::abs(kf - key) < 1e-12 && std::abs(rf.per_user - rec) < 1e-12 &&
                     std::abs(rf.total - 2 * rec) < 1e-12;
  const bool pass = agree && std::abs(kf * 100 - 3.4) <= 0.1 &&
                    std::abs(rf.per_user * 100 - 12.8) <= 0.1 &&
                    std::abs(rf.total * 100 - 25.5) <= 0.1;
  verdict(3, pass,
          fmt("key %.2f%%, per-user recyclable %.2f%%, total %.2f%%, enumeration %s", kf * 100,
              rf.per_user * 100, rf.total * 100, agree ? "agrees" : "disagrees"));
}

struct HeadlineRuns {
  bool privacy_ok = true;
  std::uint64_t windows_checked = 0;
};

HeadlineRuns criterion4() {
  HeadlineRuns h;
  const auto t0 = Clock::now();
  int passing = 0;
  double qber_sum = 0.0, true_max = 0.0;
  constexpr int kSeeds = 20;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SessionConfig c;
    c.seed = static_cast<std::uint64_t>(seed);
    SessionReport r;
    try {
      r = run_session(c);
    } catch (const ProtocolFault& e) {
      h.privacy_ok = false;
      info(fmt("seed %d: protocol fault: %s", seed, e.what()));
      continue;
    }
    h.windows_checked += r.sifted.privacy_checked_windows;
    if (r.sifted.privacy_checked_windows != c.window_count()) h.privacy_ok = false;
    double worst = 0.0, worst_true = 0.0;
    for (User u : kUsers) {
      double sz = 0, sx = 0;
      std::size_t nz = 0, nx = 0;
      for (const auto& w : r.users[index(u)].trace) {
        if (w.theta_z) sz += *w.theta_z, ++nz;
        if (w.theta_x) sx += *w.theta_x, ++nx;
      }
      worst = std::max({worst, nz ? sz / double(nz) : 0.0, nx ? sx / double(nx) : 0.0});
      double tz = 0, tx = 0;
      for (const auto& w : r.charlie.channel) {
        tz += w.true_angles[index(u)].theta_z;
        tx += w.true_angles[index(u)].theta_x;
      }
      const double n = double(r.charlie.channel.size());
      worst_true = std::max({worst_true, tz / n, tx / n});
    }
    passing += worst <= 0.13;
    true_max = std::max(true_max, worst_true);
    const double q = r.sifted.tallies[0].at(Basis::Z, Intensity::Mu, Intensity::Mu).qber();
    qber_sum += q;
    info(fmt("seed %2d: worst mean estimated theta %.4f, worst mean true theta %.4f, Z QBER %.2f%%",
             seed, worst, worst_true, q * 100));
  }
  const double elapsed = seconds_since(t0);
  const double qber = qber_sum / kSeeds;
  const bool pass = passing >= 18 && qber >= 0.025 && qber <= 0.055 && elapsed <= 600.0;
  verdict(4, pass,
          fmt("%d/20 seeds with every mean theta <= 0.13 rad (need 18), mean Z QBER %.2f%% in "
              "[2.5, 5.5]%%, %.0f s",
              passing, qber * 100, elapsed));
  info(fmt("largest long-run mean of the true angles over all seeds: %.4f rad", true_max));
  return h;
}

void criterion5() {
  const auto t0 = Clock::now();
  const DetectorParams det{0.054, 1e-6};
  const auto table = uniform_decoy_table();
  // Residual misalignment assumed when the detectors were calibrated.
  const auto ua = ChannelUnitary::rotation(kAxisS3, 2 * 0.105);
  const auto ub = ChannelUnitary::identity();
  Rng rng(20240501);
  int within3 = 0, total = 0;
  double worst_z = 0.0;
  for (Basis users : kBases) {
    for (Intensity a : kIntensities) {
      for (Intensity b : kIntensities) {
        const auto c =
            testing::compare_pair(Basis::Z, users, a, b, table, det, ua, ub, 1000000, rng);
        const double z = c.sigma > 0 ? std::abs(c.mc_gain - c.analytic_gain) / c.sigma : 0.0;
        worst_z = std::max(worst_z, z);
        within3 += z <= 3.0;
        ++total;
      }
    }
  }
  const auto x = testing::compare_pair(Basis::Z, Basis::X, Intensity::Mu, Intensity::Mu, table,
                                       det, ua, ub, 0, rng);
  const double elapsed = seconds_since(t0);
  const bool pass = within3 == total && x.analytic_qber >= 0.25 && x.analytic_qber <= 0.31 &&
                    elapsed <= 120.0;
  verdict(5, pass,
          fmt("%d/%d pairs within 3 sigma (worst %.2f), X-basis mu-mu QBER %.4f in [0.25, 0.31], "
              "%.0f s",
              within3, total, worst_z, x.analytic_qber, elapsed));
  const auto aligned = testing::compare_pair(Basis::Z, Basis::X, Intensity::Mu, Intensity::Mu,
                                             table, det, ub, ub, 0, rng);
  info(fmt("X-basis mu-mu QBER with both channels aligned: %.4f", aligned.analytic_qber));
}

void criterion6() {
  std::mt19937_64 rng(2024);
  int valid = 0, agree = 0;
  double worst_y = 0.0, worst_e = 0.0;
  constexpr int kInstances = 50;
  for (int i = 0; i < kInstances; ++i) {
    const auto inst = testing::random_instance(rng);
    const auto a = bound_y11_e11(inst.gains, inst.table, BoundMethod::Analytic);
    const auto l = bound_y11_e11(inst.gains, inst.table, BoundMethod::Lp);
    bool ok = true;
    double dy = 0.0;
    for (Basis users : kBases) {
      const double truth = testing::true_y11(inst, users);
      ok = ok && a.y11(users) <= truth * (1 + 1e-9) && l.y11(users) <= truth * (1 + 1e-9);
      dy = std::max(dy, std::abs(a.y11(users) - l.y11(users)) / l.y11(users));
    }
    const double te = testing::true_e11(inst, Basis::X);
    ok = ok && a.e11_upper >= te - 1e-12 && l.e11_upper >= te - 1e-12;
    const double de = std::abs(a.e11_upper - l.e11_upper) / l.e11_upper;
    valid += ok;
    agree += dy <= 0.10 && de <= 0.10;
    worst_y = std::max(worst_y, dy);
    worst_e = std::max(worst_e, de);
  }
  const bool pass = valid == kInstances && agree == kInstances;
  verdict(6, pass,
          fmt("bounds valid on %d/%d instances; analytic within 10%% of LP on %d/%d (worst Y11 "
              "%.1f%%, e11 %.1f%%)",
              valid, kInstances, agree, kInstances, worst_y * 100, worst_e * 100));

  testing::InstanceRange point;
  point.mu_min = point.mu_max = 0.28;
  point.nu_ratio_min = point.nu_ratio_max = 0.25;
  point.omega_max = 0.002;
  double py = 0.0, pe = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const auto inst = testing::random_instance(rng, point);
    const auto a = bound_y11_e11(inst.gains, inst.table, BoundMethod::Analytic);
    const auto l = bound_y11_e11(inst.gains, inst.table, BoundMethod::Lp);
    for (Basis users : kBases) py = std::max(py, std::abs(a.y11(users) / l.y11(users) - 1));
    pe = std::max(pe, std::abs(a.e11_upper / l.e11_upper - 1));
  }
  info(fmt("at mu=0.28, nu=0.07: worst analytic/LP gap Y11 %.1f%%, e11 %.1f%%", py * 100, pe * 100));

  AnalysisOptions opt;
  for (const char* name : {"z_half", "x_half"}) {
    const auto h = analyze_fixture(kFixtures / name, opt);
    const auto& p = *h.reference;
    const double y = h.bounds->y11(h.measurement);
    info(fmt("SOFT %s: Y11 %.3e vs %.3e (%+.0f%%), e11 %.3f vs %.3f (%+.0f%%), Q_mumu/p11 = %.3e",
             name, y, p.y11(h.measurement), (y / p.y11(h.measurement) - 1) * 100,
             h.bounds->e11_upper, p.e11, (h.bounds->e11_upper / p.e11 - 1) * 100,
             h.gains.at(h.measurement, Intensity::Mu, Intensity::Mu).gain / p11(0.28)));
  }
}

void criterion7() {
  Rng rng(77);
  double worst_bias = 0.0;
  for (double theta : {0.02, 0.05, 0.1, 0.13, 0.2, 0.3}) {
    std::binomial_distribution<std::uint64_t> draw(100000, std::pow(std::sin(theta), 2));
    double sum = 0.0;
    constexpr int reps = 4000;
    for (int i = 0; i < reps; ++i) {
      EstimatorWindow w;
      w.at(Bb84Label::H) = {draw(rng), 100000};
      sum += *estimate_theta(w).theta_z;
    }
    worst_bias = std::max(worst_bias, std::abs(sum / reps - theta));
  }

  // Every U(2) element with both angles zero, sampled: +-I times a phase.
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  double worst_infidelity = 0.0, worst_angle = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const ChannelUnitary u(Eigen::Matrix2cd::Identity() * std::polar(i % 2 ? -1.0 : 1.0, phase(rng)));
    const auto a = misalignment_angles(u);
    worst_angle = std::max({worst_angle, a.theta_z, a.theta_x});
    for (Cardinal c : kCardinals) {
      const auto s = cardinal_state(c);
      worst_infidelity = std::max(worst_infidelity, 1.0 - fidelity(s, u.apply(s)));
    }
  }
  const bool pass = worst_bias < 0.005 && worst_infidelity <= 1e-9 && worst_angle < 1e-6;
  verdict(7, pass,
          fmt("worst estimator bias %.2e rad at N_max = 1e5 (< 0.005); zero-angle channels: "
              "worst cardinal infidelity %.1e (<= 1e-9)",
              worst_bias, worst_infidelity));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion8(const HeadlineRuns& h) {
  SessionConfig c;
  c.duration_s = 900.0;
  const auto base = fs::temp_directory_path() / ("mdiqkd_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(base);
  bool identical = true;
  std::uint64_t bytes = 0;
  try {
    for (RunMode m : {RunMode::InProcess, RunMode::Networked}) {
      c.mode = m;
      const auto dir = base / std::string(to_string(m));
      prepare_output_dir(dir);
      const auto r = run_session(c);
      bytes = r.charlie.bytes_sent;
      emit_traces(r, dir);
    }
    for (const char* f : {"tallies_Z.csv", "tallies_X.csv", "summary.txt", "control_alice.csv",
                          "misalignment_bob.csv"}) {
      identical = identical && slurp(base / "in-process" / f) == slurp(base / "networked" / f) &&
                  !slurp(base / "in-process" / f).empty();
    }
  } catch (const std::exception& e) {
    info(fmt("dual-mode run failed: %s", e.what()));
    identical = false;
  }
  fs::remove_all(base);

  std::mt19937_64 rng(8);
  int lossless = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto m = testing::random_message(rng);
    wire::FrameDecoder d;
    d.feed(wire::encode_frame(m));
    const auto r = d.next();
    lossless += r && std::holds_alternative<wire::Message>(*r) && std::get<wire::Message>(*r) == m;
  }
  const bool pass = identical && lossless == 10000 && h.privacy_ok && h.windows_checked > 0;
  verdict(8, pass,
          fmt("networked vs in-process outputs %s (%llu bytes from Charlie); codec %d/10000 "
              "lossless; privacy held in %llu windows of the criterion-4 runs",
              identical ? "byte-identical" : "DIFFER", static_cast<unsigned long long>(bytes),
              lossless, static_cast<unsigned long long>(h.windows_checked)));
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
  criterion1();
  criterion2();
  criterion3();
  const auto headline = criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8(headline);
  std::printf("%d/8 criteria passed\n", 8 - failures);
  return strict && failures ? 1 : 0;
}
