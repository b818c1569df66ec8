#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mdiqkd/analysis.hpp"
#include "mdiqkd/calibration.hpp"
#include "mdiqkd/compensation.hpp"
#include "mdiqkd/config.hpp"
#include "mdiqkd/report.hpp"
#include "mdiqkd/session.hpp"

namespace mdiqkd::cli {
namespace {

namespace fs = std::filesystem;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = "out";
  bool out_given = false;
};

struct Overrides {
  std::optional<double> duration;
  std::string mode;
  bool no_compensation = false;
  std::optional<double> drift_rate;
  std::optional<double> alpha;
  std::optional<double> threshold;
  std::string method;
  std::optional<double> lp_sigma;
  std::optional<std::size_t> n_cut;
};

SessionConfig resolve(const Common& c, const Overrides& o) {
  SessionConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path, cfg);
  if (c.seed) cfg.seed = *c.seed;
  if (o.duration) cfg.duration_s = *o.duration;
  if (!o.mode.empty()) {
    const auto m = parse_run_mode(o.mode);
    if (!m) throw InvalidInput("unknown mode '" + o.mode + "'");
    cfg.mode = *m;
  }
  if (o.no_compensation) cfg.controller.enabled = false;
  if (o.drift_rate) {
    for (auto& d : cfg.drift) d.rate_rad_per_s = *o.drift_rate;
  }
  if (o.alpha) cfg.controller.alpha = *o.alpha;
  if (o.threshold) cfg.controller.threshold_rad = *o.threshold;
  if (!o.method.empty()) {
    const auto m = parse_bound_method(o.method);
    if (!m) throw InvalidInput("unknown bound method '" + o.method + "'");
    cfg.bound_method = *m;
  }
  if (o.lp_sigma) cfg.lp.sigma_multiplier = *o.lp_sigma;
  if (o.n_cut) cfg.lp.n_cut = *o.n_cut;
  return cfg;
}

std::string join_command(const std::vector<std::string>& args) {
  std::string s = "mdiqkd";
  for (const auto& a : args) s += " " + a;
  return s;
}

void print_file(const fs::path& p, std::ostream& out) {
  std::ifstream in(p);
  out << in.rdbuf();
}

SessionReport simulate_into(const SessionConfig& cfg, const fs::path& dir,
                            const std::string& command) {
  cfg.validate();
  prepare_output_dir(dir);
  RunManifest m;
  m.config = cfg;
  m.command = command;
  m.start_virtual_s = 0.0;
  m.stop_virtual_s = cfg.duration_s;
  m.outputs = trace_file_names();
  write_manifest(m, dir);
  SessionReport report = run_session(cfg);
  emit_traces(report, dir);
  return report;
}

void print_half(std::ostream& out, const HalfAnalysis& h) {
  const std::string b(to_string(h.measurement));
  out << "[" << b << " measurement]\n";
  if (h.from_reference) {
    const auto& p = *h.reference;
    out << "  reference Y11_Z " << sci(p.y11_z) << "  Y11_X " << sci(p.y11_x) << "  e11 "
        << sci(p.e11) << "\n";
    out << "  key rate (reference Y11, e11)  " << sci(h.from_reference->rate())
        << "  (listed " << sci(p.rate) << ")\n";
  }
  if (h.bounds) {
    out << "  " << to_string(h.bounds->method) << " bounds  Y11L_Z " << sci(h.bounds->y11(Basis::Z))
        << "  Y11L_X " << sci(h.bounds->y11(Basis::X)) << "  e11U " << sci(h.bounds->e11_upper)
        << "\n";
    out << "  key rate (own bounds)  raw " << sci(h.from_bounds->raw) << "  clamped "
        << sci(h.from_bounds->rate()) << "\n";
  } else {
    out << "  bounds unavailable: " << h.note << "\n";
  }
}

int cmd_analyze(const Common& c, const Overrides& o, const std::vector<std::string>& fixtures,
                const std::string& tallies_dir, const std::string& tallies_file,
                const std::string& measurement, std::ostream& out) {
  const SessionConfig cfg = resolve(c, o);
  AnalysisOptions opt;
  opt.table = cfg.intensities[0];
  opt.method = cfg.bound_method;
  opt.lp = cfg.lp;
  opt.f = cfg.ec_efficiency;

  std::vector<HalfAnalysis> halves;
  for (const auto& f : fixtures) halves.push_back(analyze_fixture(f, opt));
  auto from_tallies = [&](const fs::path& file, Basis b) {
    const TallySet t = read_tallies(file, b);
    halves.push_back(analyze_gains(gains_from_tallies(t), opt));
  };
  if (!tallies_dir.empty()) {
    for (Basis b : kBases) {
      from_tallies(fs::path(tallies_dir) / ("tallies_" + std::string(to_string(b)) + ".csv"), b);
    }
  }
  if (!tallies_file.empty()) {
    const auto b = parse_basis(measurement);
    if (!b) throw InvalidInput("--measurement must be Z or X");
    from_tallies(tallies_file, *b);
  }
  if (halves.empty()) throw InvalidInput("analyze needs --fixture, --tallies-dir or --tallies");

  std::ostringstream report;
  for (const auto& h : halves) print_half(report, h);
  if (halves.size() > 1) {
    double pub = 0.0, own = 0.0;
    std::size_t npub = 0;
    for (const auto& h : halves) {
      if (h.from_reference) {
        pub += h.from_reference->rate();
        ++npub;
      }
      own += h.from_bounds ? h.from_bounds->rate() : 0.0;
    }
    if (npub == halves.size()) report << "mean key rate (reference Y11, e11)  " << sci(pub / npub) << "\n";
    report << "mean key rate (own bounds)  " << sci(own / static_cast<double>(halves.size())) << "\n";
  }
  out << report.str();

  if (c.out_given) {
    prepare_output_dir(c.out_dir);
    const fs::path file = fs::path(c.out_dir) / "analysis.csv";
    std::ofstream f(file);
    f << "measurement,method,y11_lower_z,y11_lower_x,e11_upper,key_rate_raw,key_rate,"
         "key_rate_reference\n";
    for (const auto& h : halves) {
      f << to_string(h.measurement) << ',' << to_string(opt.method) << ',';
      if (h.bounds) {
        f << format_double(h.bounds->y11(Basis::Z)) << ',' << format_double(h.bounds->y11(Basis::X))
          << ',' << format_double(h.bounds->e11_upper) << ',' << format_double(h.from_bounds->raw)
          << ',' << format_double(h.from_bounds->rate());
      } else {
        f << ",,,,";
      }
      f << ',';
      if (h.from_reference) f << format_double(h.from_reference->rate());
      f << '\n';
    }
    if (!f.flush()) throw OutputError(file, "write failed");
  }
  return kOk;
}

int cmd_plan(const Common& c, double p, double eps, double delta, double rate, std::ostream& out) {
  const CollectionPlan plan = plan_collection(p, eps, delta, rate);
  out << "n_min = " << plan.n_min << "\n";
  out << "t_min_s = " << format_double(plan.t_min_s) << "\n";
  if (c.out_given) {
    prepare_output_dir(c.out_dir);
    const fs::path file = fs::path(c.out_dir) / "plan.txt";
    std::ofstream f(file);
    f << "p_hat = " << format_double(p) << "\nepsilon = " << format_double(eps)
      << "\ndelta = " << format_double(delta) << "\nrate_per_s = " << format_double(rate)
      << "\nn_min = " << plan.n_min << "\nt_min_s = " << format_double(plan.t_min_s) << "\n";
    if (!f.flush()) throw OutputError(file, "write failed");
  }
  return kOk;
}

int cmd_sweep(const Common& c, const Overrides& o, const std::string& param,
              const std::vector<double>& values, std::size_t seeds,
              const std::vector<std::string>& args, std::ostream& out) {
  if (param != "alpha" && param != "threshold") {
    throw InvalidInput("--param must be alpha or threshold");
  }
  if (values.empty()) throw InvalidInput("--values is empty");
  const SessionConfig base = resolve(c, o);
  const fs::path dir(c.out_dir);
  prepare_output_dir(dir);
  const fs::path csv = dir / "sweep.csv";
  std::ofstream f(csv);
  if (!f) throw OutputError(csv, "cannot open");
  const char* cols[] = {"mean_theta_z_rad.alice", "mean_theta_x_rad.alice",
                        "mean_theta_z_rad.bob",   "mean_theta_x_rad.bob",
                        "triggers.alice",         "triggers.bob",
                        "qber_signal.Z",          "qber_signal.X",
                        "key_rate.mean"};
  f << "param,value,seed";
  for (const char* k : cols) f << ',' << k;
  f << '\n';
  out << "param,value,seed";
  for (const char* k : cols) out << ',' << k;
  out << '\n';
  for (double v : values) {
    for (std::size_t s = 0; s < seeds; ++s) {
      SessionConfig cfg = base;
      (param == "alpha" ? cfg.controller.alpha : cfg.controller.threshold_rad) = v;
      cfg.seed = base.seed + s;
      const fs::path run = dir / (param + "_" + format_double(v) + "_seed" + std::to_string(cfg.seed));
      simulate_into(cfg, run, join_command(args));
      const auto summary = read_summary(run / "summary.txt");
      std::ostringstream row;
      row << param << ',' << format_double(v) << ',' << cfg.seed;
      for (const char* k : cols) {
        const auto it = summary.find(k);
        row << ',' << (it == summary.end() ? "" : it->second);
      }
      f << row.str() << '\n';
      out << row.str() << '\n';
    }
  }
  if (!f.flush()) throw OutputError(csv, "write failed");
  return kOk;
}

int cmd_calibrate(const Common& c, const CalibrationTarget& target, std::ostream& out) {
  const CalibrationResult r = calibrate_detectors(target);
  std::ostringstream conf;
  conf << "; fitted to Q_mu,mu = " << format_double(target.q_signal)
       << ", Q_mu,omega = " << format_double(target.q_vacuum) << " in "
       << to_string(target.basis) << " at theta = " << format_double(target.theta_rad) << " rad\n";
  if (r.dark_clamped) conf << "; Q_mu,omega target unreachable, dark probability clamped to 0\n";
  conf << "[detector]\n";
  conf << "efficiency = " << format_double(r.params.efficiency) << "\n";
  conf << "dark_probability = " << format_double(r.params.dark_probability) << "\n";
  out << conf.str();
  out << "; model Q_mu,mu = " << sci(r.q_signal_model) << ", Q_mu,omega = "
      << sci(r.q_vacuum_model) << "\n";
  prepare_output_dir(c.out_dir);
  const fs::path file = fs::path(c.out_dir) / "calibration.conf";
  std::ofstream f(file);
  f << conf.str();
  if (!f.flush()) throw OutputError(file, "write failed");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MDI-QKD polarization compensation simulator", "mdiqkd"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  Common common;
  app.add_option("--seed", common.seed, "Master seed");
  app.add_option("--config", common.config_path, "INI config file");
  auto* out_opt = app.add_option("--out", common.out_dir, "Output directory")->capture_default_str();

  Overrides ov;
  auto add_analysis_flags = [&](CLI::App* sub) {
    sub->add_option("--method", ov.method, "Decoy bound: analytic or lp");
    sub->add_option("--lp-sigma", ov.lp_sigma, "LP constraint width in standard errors");
    sub->add_option("--n-cut", ov.n_cut, "LP photon-number cutoff");
  };
  auto add_session_flags = [&](CLI::App* sub) {
    sub->add_option("--mode", ov.mode, "in-process or networked");
    sub->add_flag("--no-compensation", ov.no_compensation, "Disable the controller");
    sub->add_option("--drift-rate", ov.drift_rate, "Drift rate for both users, rad/s");
    sub->add_option("--alpha", ov.alpha, "Rotation ratio");
    sub->add_option("--threshold", ov.threshold, "Trigger threshold, rad");
    add_analysis_flags(sub);
  };

  auto* sim = app.add_subcommand("simulate", "Run a full session and write traces");
  sim->fallthrough();
  sim->add_option("--duration", ov.duration, "Virtual seconds");
  add_session_flags(sim);

  auto* ana = app.add_subcommand("analyze", "Decoy bounds and key rate from tallies or gains");
  ana->fallthrough();
  std::vector<std::string> fixtures;
  std::string tallies_dir, tallies_file, measurement = "Z";
  ana->add_option("--fixture", fixtures, "Directory with gains.csv [+ estimates.csv]")
      ->check(CLI::ExistingDirectory);
  ana->add_option("--tallies-dir", tallies_dir, "Directory with tallies_Z.csv and tallies_X.csv")
      ->check(CLI::ExistingDirectory);
  ana->add_option("--tallies", tallies_file, "Single tallies CSV");
  ana->add_option("--measurement", measurement, "Half of --tallies: Z or X");
  add_analysis_flags(ana);

  auto* plan = app.add_subcommand("plan", "Chernoff collection-size calculator");
  plan->fallthrough();
  double p = 9e-4, eps = 0.5, delta = 0.3, rate = 1.4e3;
  plan->add_option("--p", p, "Expected error fraction")->capture_default_str();
  plan->add_option("--eps", eps, "Relative precision")->capture_default_str();
  plan->add_option("--delta", delta, "Failure probability")->capture_default_str();
  plan->add_option("--rate", rate, "Detection rate, counts/s")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Sweep alpha or threshold over sessions");
  sweep->fallthrough();
  std::string param = "alpha";
  std::vector<double> values;
  std::size_t seeds = 1;
  sweep->add_option("--param", param, "alpha or threshold")->capture_default_str();
  sweep->add_option("--values", values, "Comma-separated values")->delimiter(',')->required();
  sweep->add_option("--seeds", seeds, "Seeds per value, counting up from --seed")
      ->capture_default_str();
  sweep->add_option("--duration", ov.duration, "Virtual seconds per run");
  add_session_flags(sweep);

  auto* cal = app.add_subcommand("calibrate", "Fit detector parameters to target gains");
  cal->fallthrough();
  CalibrationTarget target;
  std::string cal_basis = "Z";
  cal->add_option("--q-signal", target.q_signal, "Target Q_mu,mu")->capture_default_str();
  cal->add_option("--q-vacuum", target.q_vacuum, "Target Q_mu,omega")->capture_default_str();
  cal->add_option("--theta", target.theta_rad, "Assumed residual misalignment, rad")
      ->capture_default_str();
  cal->add_option("--basis", cal_basis, "Z or X")->capture_default_str();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  common.out_given = out_opt->count() > 0;

  try {
    if (*sim) {
      const SessionConfig cfg = resolve(common, ov);
      simulate_into(cfg, common.out_dir, join_command(args));
      print_file(fs::path(common.out_dir) / "summary.txt", out);
      return kOk;
    }
    if (*ana) {
      return cmd_analyze(common, ov, fixtures, tallies_dir, tallies_file, measurement, out);
    }
    if (*plan) return cmd_plan(common, p, eps, delta, rate, out);
    if (*sweep) {
      if (!ov.duration) ov.duration = 3600.0;
      return cmd_sweep(common, ov, param, values, seeds, args, out);
    }
    if (*cal) {
      if (!common.config_path.empty()) {
        target.table = load_config(common.config_path).intensities[0];
      }
      const auto b = parse_basis(cal_basis);
      if (!b) throw InvalidInput("--basis must be Z or X");
      target.basis = *b;
      return cmd_calibrate(common, target, out);
    }
  } catch (const ConfigReadError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigUnreadable;
  } catch (const OutputError& e) {
    err << "error: " << e.what() << "\n";
    return kOutputUnwritable;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const ProtocolFault& e) {
    err << "protocol fault: " << e.what() << "\n";
    return kProtocolFault;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace mdiqkd::cli
