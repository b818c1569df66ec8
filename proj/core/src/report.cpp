#include "mdiqkd/report.hpp"

#include <fstream>
#include <sstream>

#include "mdiqkd/config.hpp"

#ifndef MDIQKD_VERSION
#define MDIQKD_VERSION "0.0.0"
#endif

namespace mdiqkd {

namespace fs = std::filesystem;

std::string_view version() { return MDIQKD_VERSION; }

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError(p, "cannot write");
  return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) throw OutputError(p, "write failed");
}

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InvalidInput("cannot read " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (!line.empty()) rows.push_back(split(line));
  }
  return rows;
}

}  // namespace

void prepare_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw OutputError(dir, "cannot create output directory");
  const fs::path probe = dir / ".write-test";
  {
    std::ofstream out(probe);
    if (!out) throw OutputError(dir, "output directory is not writable");
  }
  fs::remove(probe, ec);
}

std::vector<std::string> trace_file_names() {
  return {"misalignment_alice.csv", "misalignment_bob.csv", "control_alice.csv",
          "control_bob.csv",        "tallies_Z.csv",        "tallies_X.csv",
          "summary.txt"};
}

void write_manifest(const RunManifest& m, const fs::path& dir) {
  const fs::path p = dir / "manifest.txt";
  auto out = open_out(p);
  out << "# mdiqkd run manifest\n"
      << "version = " << version() << "\n"
      << "command = " << m.command << "\n"
      << "seed = " << m.config.seed << "\n"
      << "mode = " << to_string(m.config.mode) << "\n"
      << "start_virtual_s = " << format_double(m.start_virtual_s) << "\n"
      << "stop_virtual_s = " << format_double(m.stop_virtual_s) << "\n"
      << "outputs = ";
  for (std::size_t i = 0; i < m.outputs.size(); ++i) out << (i ? " " : "") << m.outputs[i];
  out << "\n\n# resolved config\n";
  write_config(out, m.config);
  close_out(out, p);
}

void emit_traces(const SessionReport& r, const fs::path& dir) {
  for (User u : kUsers) {
    const auto& trace = r.users[index(u)].trace;
    const std::string name(to_string(u));
    {
      const fs::path p = dir / ("misalignment_" + name + ".csv");
      auto out = open_out(p);
      out << "time_s,theta_z_rad,theta_x_rad,triggered\n";
      for (const auto& t : trace) {
        out << format_double(t.time_s) << ',' << opt_field(t.theta_z) << ','
            << opt_field(t.theta_x) << ',' << (t.triggered ? 1 : 0) << '\n';
      }
      close_out(out, p);
    }
    {
      const fs::path p = dir / ("control_" + name + ".csv");
      auto out = open_out(p);
      out << "window,time_s,duration_s,measurement,triggered,squeezer,step_rad,undone_rad,"
             "retardance_1,retardance_2,retardance_3,retardance_4,"
             "true_theta_z_rad,true_theta_x_rad,n_err,n_max,recycled_singles\n";
      for (std::size_t w = 0; w < trace.size(); ++w) {
        const auto& t = trace[w];
        const auto& ch = r.charlie.channel.at(w);
        out << t.window << ',' << format_double(t.time_s) << ',' << format_double(ch.duration_s)
            << ',' << to_string(t.measurement) << ',' << (t.triggered ? 1 : 0) << ','
            << t.squeezer << ',' << format_double(t.step_rad) << ','
            << format_double(t.undone_rad);
        for (double x : t.retardances) out << ',' << format_double(x);
        out << ',' << format_double(ch.true_angles[index(u)].theta_z) << ','
            << format_double(ch.true_angles[index(u)].theta_x) << ','
            << ch.counts[index(u)].n_err << ',' << ch.counts[index(u)].n_max << ','
            << ch.recycled[index(u)] << '\n';
      }
      close_out(out, p);
    }
  }
  for (Basis b : kBases) {
    const fs::path p = dir / ("tallies_" + std::string(to_string(b)) + ".csv");
    auto out = open_out(p);
    write_tally_csv(out, r.sifted.tallies[index(b)]);
    close_out(out, p);
  }
  write_summary(summarize_outputs(dir, r.config), dir / "summary.txt");
}

TallySet read_tallies(const fs::path& file, Basis measurement) {
  std::ifstream in(file);
  if (!in) throw InvalidInput("cannot read " + file.string());
  return read_tally_csv(in, measurement);
}

Summary summarize_outputs(const fs::path& dir, const SessionConfig& config) {
  Summary s;
  auto put = [&](const std::string& k, const std::string& v) { s.emplace_back(k, v); };
  auto num = [&](const std::string& k, double v) { put(k, format_double(v)); };

  std::uint64_t windows = 0;
  double duration = 0.0;
  for (User u : kUsers) {
    const std::string name(to_string(u));
    const auto mis = read_csv(dir / ("misalignment_" + name + ".csv"));
    const auto ctl = read_csv(dir / ("control_" + name + ".csv"));
    windows = mis.size();
    double sz = 0, sx = 0, tz = 0, tx = 0, recycled = 0;
    std::size_t nz = 0, nx = 0, triggers = 0;
    duration = 0.0;
    for (const auto& row : mis) {
      if (row.size() != 4) throw InvalidInput("malformed misalignment csv");
      if (!row[1].empty()) {
        sz += std::stod(row[1]);
        ++nz;
      }
      if (!row[2].empty()) {
        sx += std::stod(row[2]);
        ++nx;
      }
      triggers += row[3] == "1" ? 1 : 0;
    }
    for (const auto& row : ctl) {
      if (row.size() != 17) throw InvalidInput("malformed control csv");
      duration += std::stod(row[2]);
      tz += std::stod(row[12]);
      tx += std::stod(row[13]);
      recycled += std::stod(row[16]);
    }
    const double n = static_cast<double>(std::max<std::size_t>(ctl.size(), 1));
    num("mean_theta_z_rad." + name, nz ? sz / static_cast<double>(nz) : 0.0);
    num("mean_theta_x_rad." + name, nx ? sx / static_cast<double>(nx) : 0.0);
    num("mean_true_theta_z_rad." + name, tz / n);
    num("mean_true_theta_x_rad." + name, tx / n);
    put("triggers." + name, std::to_string(triggers));
    num("recycled_rate_cps." + name, duration > 0.0 ? recycled / duration : 0.0);
  }
  put("windows", std::to_string(windows));
  num("duration_s", duration);

  std::uint64_t coinc_all = 0, err_all = 0;
  double rate_sum = 0.0;
  for (Basis b : kBases) {
    const std::string h(to_string(b));
    const TallySet t = read_tallies(dir / ("tallies_" + h + ".csv"), b);
    const auto& sig = t.at(b, Intensity::Mu, Intensity::Mu);
    coinc_all += sig.coincidences;
    err_all += sig.errors;
    put("sifted_bits." + h, std::to_string(sig.coincidences));
    num("qber_signal." + h, sig.qber());
    const HalfReport half = analyze_half(t, config.intensities[0], config.bound_method,
                                         config.lp, config.ec_efficiency);
    put("bounds_method." + h, std::string(to_string(config.bound_method)));
    if (half.analyzed) {
      num("y11_lower_z." + h, half.bounds.y11(Basis::Z));
      num("y11_lower_x." + h, half.bounds.y11(Basis::X));
      num("e11_upper." + h, half.bounds.e11_upper);
      num("key_rate_raw." + h, half.rate.raw);
    } else {
      put("bounds_note." + h, half.note);
    }
    num("key_rate." + h, half.rate.rate());
    rate_sum += half.rate.rate();
  }
  num("key_rate.mean", rate_sum / 2.0);
  num("qber_signal.both", coinc_all ? static_cast<double>(err_all) / static_cast<double>(coinc_all)
                                    : 0.0);
  return s;
}

void write_summary(const Summary& s, const fs::path& file) {
  auto out = open_out(file);
  for (const auto& [k, v] : s) out << k << " = " << v << '\n';
  close_out(out, file);
}

std::map<std::string, std::string> read_summary(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidInput("cannot read " + file.string());
  std::map<std::string, std::string> m;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    m[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return m;
}

}  // namespace mdiqkd
