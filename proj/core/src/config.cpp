#include "mdiqkd/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <map>
#include <set>

namespace mdiqkd {

namespace pt = boost::property_tree;

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

namespace {

double to_double(const std::string& where, const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) throw InvalidInput(where + ": not a number: '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& where, const std::string& s) {
  std::uint64_t v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw InvalidInput(where + ": not a nonnegative integer: '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& where, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidInput(where + ": not a boolean: '" + s + "'");
}

void apply_intensity(IntensityTable& t, const std::string& key, const std::string& where,
                     const std::string& value) {
  static const std::map<std::string, double IntensityTable::*> fields = {
      {"mu", &IntensityTable::mu},       {"nu", &IntensityTable::nu},
      {"omega", &IntensityTable::omega}, {"p_mu", &IntensityTable::p_mu},
      {"p_nu", &IntensityTable::p_nu},   {"p_omega", &IntensityTable::p_omega}};
  auto it = fields.find(key);
  if (it == fields.end()) throw InvalidInput("unknown key " + where);
  t.*(it->second) = to_double(where, value);
}

void apply_drift(DriftConfig& d, SessionConfig& c, const std::string& key,
                 const std::string& where, const std::string& value, bool shared) {
  if (key == "rate_rad_per_s") d.rate_rad_per_s = to_double(where, value);
  else if (key == "initial_angle_rad") d.initial_angle_rad = to_double(where, value);
  else if (key == "substep_s" && shared) c.drift_substep_s = to_double(where, value);
  else throw InvalidInput("unknown key " + where);
}

}  // namespace

SessionConfig parse_config(std::istream& in, const SessionConfig& base) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigReadError(std::string("config is not valid INI: ") + e.what());
  }
  SessionConfig c = base;
  // Shared sections first so per-user sections override them.
  static const std::vector<std::string> order = {
      "session", "intensity", "intensity_alice", "intensity_bob", "detector", "drift",
      "drift_alice", "drift_bob", "controller", "schedule", "analysis"};
  const std::set<std::string> known(order.begin(), order.end());
  for (const auto& [section, _] : tree) {
    if (!known.count(section)) {
      throw InvalidInput("unknown config section [" + section + "]");
    }
  }
  for (const auto& section : order) {
    auto child = tree.get_child_optional(section);
    if (!child) continue;
    for (const auto& [key, node] : *child) {
      const std::string value = node.get_value<std::string>();
      const std::string where = "[" + section + "] " + key;
      if (section == "session") {
        if (key == "duration_s") c.duration_s = to_double(where, value);
        else if (key == "rep_rate_hz") c.rep_rate_hz = to_double(where, value);
        else if (key == "seed") c.seed = to_u64(where, value);
        else if (key == "mode") {
          auto m = parse_run_mode(value);
          if (!m) throw InvalidInput(where + ": expected in-process or networked");
          c.mode = *m;
        } else throw InvalidInput("unknown key " + where);
      } else if (section == "intensity") {
        for (auto& t : c.intensities) apply_intensity(t, key, where, value);
      } else if (section == "intensity_alice") {
        apply_intensity(c.intensities[0], key, where, value);
      } else if (section == "intensity_bob") {
        apply_intensity(c.intensities[1], key, where, value);
      } else if (section == "detector") {
        if (key == "efficiency") c.detectors.efficiency = to_double(where, value);
        else if (key == "dark_probability") c.detectors.dark_probability = to_double(where, value);
        else throw InvalidInput("unknown key " + where);
      } else if (section == "drift") {
        for (auto& d : c.drift) apply_drift(d, c, key, where, value, true);
      } else if (section == "drift_alice") {
        apply_drift(c.drift[0], c, key, where, value, false);
      } else if (section == "drift_bob") {
        apply_drift(c.drift[1], c, key, where, value, false);
      } else if (section == "controller") {
        auto& k = c.controller;
        if (key == "enabled") k.enabled = to_bool(where, value);
        else if (key == "alpha") k.alpha = to_double(where, value);
        else if (key == "threshold_rad") k.threshold_rad = to_double(where, value);
        else if (key == "collection_s") k.collection_s = to_double(where, value);
        else if (key == "max_step_rad") k.max_step_rad = to_double(where, value);
        else if (key == "reference_history") c.reference_history = to_u64(where, value);
        else throw InvalidInput("unknown key " + where);
      } else if (section == "schedule") {
        if (key == "period_s") c.schedule.period_s = to_double(where, value);
        else if (key == "origin_s") c.schedule.origin_s = to_double(where, value);
        else throw InvalidInput("unknown key " + where);
      } else if (section == "analysis") {
        if (key == "method") {
          auto m = parse_bound_method(value);
          if (!m) throw InvalidInput(where + ": expected analytic or lp");
          c.bound_method = *m;
        } else if (key == "f") c.ec_efficiency = to_double(where, value);
        else if (key == "n_cut") c.lp.n_cut = static_cast<int>(to_u64(where, value));
        else if (key == "lp_sigma") c.lp.sigma_multiplier = to_double(where, value);
        else throw InvalidInput("unknown key " + where);
      }
    }
  }
  return c;
}

SessionConfig load_config(const std::filesystem::path& path, const SessionConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigReadError("cannot read config file " + path.string());
  return parse_config(in, base);
}

void write_config(std::ostream& out, const SessionConfig& c) {
  auto f = format_double;
  out << "[session]\n"
      << "duration_s = " << f(c.duration_s) << "\n"
      << "rep_rate_hz = " << f(c.rep_rate_hz) << "\n"
      << "seed = " << c.seed << "\n"
      << "mode = " << to_string(c.mode) << "\n";
  const char* user_sections[] = {"intensity_alice", "intensity_bob"};
  for (std::size_t u = 0; u < 2; ++u) {
    const auto& t = c.intensities[u];
    out << "\n[" << user_sections[u] << "]\n"
        << "mu = " << f(t.mu) << "\nnu = " << f(t.nu) << "\nomega = " << f(t.omega) << "\n"
        << "p_mu = " << f(t.p_mu) << "\np_nu = " << f(t.p_nu) << "\np_omega = " << f(t.p_omega)
        << "\n";
  }
  out << "\n[detector]\n"
      << "efficiency = " << f(c.detectors.efficiency) << "\n"
      << "dark_probability = " << f(c.detectors.dark_probability) << "\n";
  out << "\n[drift]\nsubstep_s = " << f(c.drift_substep_s) << "\n";
  const char* drift_sections[] = {"drift_alice", "drift_bob"};
  for (std::size_t u = 0; u < 2; ++u) {
    out << "\n[" << drift_sections[u] << "]\n"
        << "rate_rad_per_s = " << f(c.drift[u].rate_rad_per_s) << "\n"
        << "initial_angle_rad = " << f(c.drift[u].initial_angle_rad) << "\n";
  }
  out << "\n[controller]\n"
      << "enabled = " << (c.controller.enabled ? "true" : "false") << "\n"
      << "alpha = " << f(c.controller.alpha) << "\n"
      << "threshold_rad = " << f(c.controller.threshold_rad) << "\n"
      << "collection_s = " << f(c.controller.collection_s) << "\n"
      << "max_step_rad = " << f(c.controller.max_step_rad) << "\n"
      << "reference_history = " << c.reference_history << "\n";
  out << "\n[schedule]\n"
      << "period_s = " << f(c.schedule.period_s) << "\n"
      << "origin_s = " << f(c.schedule.origin_s) << "\n";
  out << "\n[analysis]\n"
      << "method = " << to_string(c.bound_method) << "\n"
      << "f = " << f(c.ec_efficiency) << "\n"
      << "n_cut = " << c.lp.n_cut << "\n"
      << "lp_sigma = " << f(c.lp.sigma_multiplier) << "\n";
}

}  // namespace mdiqkd
