#include "mdiqkd/decoy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mdiqkd/lp.hpp"

namespace mdiqkd {

double h2(double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("h2: argument outside [0, 1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

double p11(double mu) {
  if (!(mu >= 0.0)) throw InvalidInput("p11: mean photon number must be >= 0");
  return mu * mu * std::exp(-2.0 * mu);
}

GainTable gains_from_tallies(const TallySet& tallies) {
  tallies.validate();
  GainTable g(tallies.measurement());
  for (Basis b : kBases) {
    for (Intensity a : kIntensities) {
      for (Intensity c : kIntensities) {
        const auto& e = tallies.at(b, a, c);
        auto& p = g.at(b, a, c);
        if (e.sent == 0) {
          p.gain_err = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        const double n = static_cast<double>(e.sent);
        const double k = static_cast<double>(e.coincidences);
        p.gain = k / n;
        p.gain_err = std::sqrt(std::max(k, 1.0) * (1.0 - p.gain)) / n;
        if (e.coincidences > 0) {
          const double q = static_cast<double>(e.errors) / k;
          p.qber = q;
          p.qber_err = std::sqrt(std::max(static_cast<double>(e.errors), 1.0) *
                                 std::max(1.0 - q, 0.0)) / k;
        }
      }
    }
  }
  return g;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) {
    if (!f.empty() && f.back() == '\r') f.pop_back();
    out.push_back(f);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput("gain csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

}  // namespace

GainTable read_gain_csv(std::istream& in, Basis measurement) {
  GainTable g(measurement);
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto f = split_fields(line);
    if (header) {
      header = false;
      if (f.size() != 7 || f[0] != "basis") throw InvalidInput("gain csv: unexpected header");
      continue;
    }
    f.resize(7);
    const auto b = parse_basis(f[0]);
    const auto a = parse_intensity(f[1]);
    const auto c = parse_intensity(f[2]);
    if (!b || !a || !c) {
      throw InvalidInput("gain csv line " + std::to_string(line_no) + ": bad key");
    }
    auto& p = g.at(*b, *a, *c);
    p.gain = parse_number(f[3], line_no);
    p.gain_err = f[4].empty() ? std::numeric_limits<double>::quiet_NaN()
                              : parse_number(f[4], line_no);
    if (!f[5].empty()) {
      p.qber = parse_number(f[5], line_no);
      p.qber_err = f[6].empty() ? 0.0 : parse_number(f[6], line_no);
    }
    if (p.gain < 0.0 || p.gain > 1.0 || (p.qber && (*p.qber < 0.0 || *p.qber > 1.0))) {
      throw InvalidInput("gain csv line " + std::to_string(line_no) + ": value out of range");
    }
  }
  if (header) throw InvalidInput("gain csv: empty input");
  return g;
}

void write_gain_csv(std::ostream& out, const GainTable& gains) {
  out << "basis,intensity_A,intensity_B,gain,gain_err,qber,qber_err\n";
  out.precision(6);
  for (Basis b : kBases) {
    for (Intensity a : kIntensities) {
      for (Intensity c : kIntensities) {
        const auto& p = gains.at(b, a, c);
        out << to_string(b) << ',' << to_string(a) << ',' << to_string(c) << ','
            << p.gain << ',';
        if (!std::isnan(p.gain_err)) out << p.gain_err;
        out << ',';
        if (p.qber) out << *p.qber << ',' << p.qber_err;
        else out << ',';
        out << '\n';
      }
    }
  }
}

std::string_view to_string(BoundMethod m) {
  return m == BoundMethod::Analytic ? "analytic" : "lp";
}

std::optional<BoundMethod> parse_bound_method(std::string_view s) {
  if (s == "analytic") return BoundMethod::Analytic;
  if (s == "lp") return BoundMethod::Lp;
  return std::nullopt;
}

namespace {

double mean_of(const IntensityTable& t, Intensity i) { return t.mean_photons(i); }

// e^{a+b} Q_ab: the photon-number expansion sum_{nm} a^n b^m / (n! m!) Y_nm.
double scaled_gain(const GainTable& g, Basis users, const IntensityTable& t,
                   Intensity a, Intensity b) {
  return std::exp(mean_of(t, a) + mean_of(t, b)) * g.at(users, a, b).gain;
}

double scaled_error_gain(const GainTable& g, Basis users, const IntensityTable& t,
                         Intensity a, Intensity b) {
  const auto& p = g.at(users, a, b);
  return std::exp(mean_of(t, a) + mean_of(t, b)) * p.gain * p.qber.value_or(0.0);
}

template <class F>
double double_difference(F q, Intensity x) {
  return q(x, x) - q(x, Intensity::Omega) - q(Intensity::Omega, x) +
         q(Intensity::Omega, Intensity::Omega);
}

}  // namespace

double analytic_y11_lower(const GainTable& g, Basis users, const IntensityTable& t) {
  t.validate();
  const double mu = t.mu, nu = t.nu, w = t.omega;
  auto q = [&](Intensity a, Intensity b) { return scaled_gain(g, users, t, a, b); };
  // D(x) = sum_{n,m>=1} (x^n - w^n)(x^m - w^m)/(n! m!) Y_nm; the (1,2) and
  // (2,1) terms cancel in D(nu) - k D(mu), and all higher terms are <= 0.
  const double k = (nu - w) * (nu * nu - w * w) / ((mu - w) * (mu * mu - w * w));
  const double num = double_difference(q, Intensity::Nu) - k * double_difference(q, Intensity::Mu);
  const double y = num * (mu + w) / ((nu - w) * (nu - w) * (mu - nu));
  return std::clamp(y, 0.0, 1.0);
}

double analytic_error_yield_upper(const GainTable& g, Basis users, const IntensityTable& t) {
  t.validate();
  const double d = t.nu - t.omega;
  auto s = [&](Intensity a, Intensity b) { return scaled_error_gain(g, users, t, a, b); };
  return std::clamp(double_difference(s, Intensity::Nu) / (d * d), 0.0, 1.0);
}

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

// Sum of a^n b^m / (n! m!) over pairs with n > cut or m > cut.
double scaled_tail(double a, double b, int cut) {
  auto series_from = [](double x, int start) {
    double term = std::pow(x, start) / factorial(start);
    double sum = 0.0;
    for (int n = start; n < start + 60 && term > 0.0; ++n) {
      sum += term;
      term *= x / (n + 1);
    }
    return sum;
  };
  const double ea = std::exp(a), eb = std::exp(b);
  const double ta = series_from(a, cut + 1), tb = series_from(b, cut + 1);
  return ta * eb + (ea - ta) * tb;
}

enum class Target { Yield, ErrorYield };

double lp_bound(const GainTable& g, Basis users, const IntensityTable& t,
                const LpOptions& opt, Target target) {
  t.validate();
  if (opt.n_cut < 1) throw InvalidInput("lp: n_cut must be >= 1");
  if (!(opt.sigma_multiplier >= 0.0)) throw InvalidInput("lp: sigma multiplier must be >= 0");
  const int n1 = opt.n_cut + 1;
  const std::size_t nv = static_cast<std::size_t>(n1 * n1);
  lp::Problem prob;
  prob.objective.assign(nv, 0.0);
  const std::size_t v11 = static_cast<std::size_t>(n1 + 1);
  // Minimize Y11, or maximize the error-weighted yield.
  prob.objective[v11] = target == Target::Yield ? 1.0 : -1.0;
  prob.upper_bounds.assign(nv, 1.0);

  for (Intensity ia : kIntensities) {
    for (Intensity ib : kIntensities) {
      const auto& p = g.at(users, ia, ib);
      const double a = mean_of(t, ia), b = mean_of(t, ib);
      const double scale = std::exp(a + b);
      double value = 0.0, sigma = 0.0;
      if (target == Target::Yield) {
        value = p.gain;
        sigma = p.gain_err;
      } else {
        if (!p.qber && p.gain > 0.0) continue;  // no error information
        const double e = p.qber.value_or(0.0);
        value = p.gain * e;
        // No coincidences: the error gain is as uncertain as the gain itself.
        sigma = std::isnan(p.gain_err) || !p.qber
                    ? p.gain_err
                    : std::hypot(e * p.gain_err, p.gain * p.qber_err);
      }
      lp::Row row;
      row.coeffs.assign(nv, 0.0);
      for (int n = 0; n < n1; ++n) {
        for (int m = 0; m < n1; ++m) {
          row.coeffs[static_cast<std::size_t>(n * n1 + m)] =
              std::pow(a, n) * std::pow(b, m) / (factorial(n) * factorial(m));
        }
      }
      const double tail = scaled_tail(a, b, opt.n_cut);
      if (std::isnan(sigma)) {
        row.lower = scale * value - tail;
      } else {
        const double slack = opt.sigma_multiplier * sigma;
        row.lower = scale * (value - slack) - tail;
        row.upper = scale * (value + slack);
      }
      row.label = std::string(to_string(users)) + " " +
                  (target == Target::Yield ? "gain " : "error gain ") +
                  std::string(to_string(ia)) + "," + std::string(to_string(ib));
      prob.rows.push_back(std::move(row));
    }
  }

  const auto sol = lp::solve(prob);
  if (sol.status == lp::Status::Infeasible) {
    throw BoundsInfeasible("decoy constraints are inconsistent; most violated: " +
                               sol.most_violated,
                           sol.most_violated, sol.violation);
  }
  if (sol.status != lp::Status::Optimal) {
    throw std::runtime_error("decoy LP did not converge");
  }
  return std::clamp(sol.x[v11], 0.0, 1.0);
}

}  // namespace

double lp_y11_lower(const GainTable& g, Basis users, const IntensityTable& t,
                    const LpOptions& lp) {
  return lp_bound(g, users, t, lp, Target::Yield);
}

double lp_error_yield_upper(const GainTable& g, Basis users, const IntensityTable& t,
                            const LpOptions& lp) {
  return lp_bound(g, users, t, lp, Target::ErrorYield);
}

YieldBounds bound_y11_e11(const GainTable& gains, const IntensityTable& table,
                          BoundMethod method, const LpOptions& lp) {
  YieldBounds out;
  out.measurement = gains.measurement();
  out.method = method;
  const Basis phase = other(gains.measurement());
  double eps = 0.0;
  for (Basis b : kBases) {
    out.y11_lower[index(b)] = method == BoundMethod::Analytic
                                  ? analytic_y11_lower(gains, b, table)
                                  : lp_y11_lower(gains, b, table, lp);
  }
  eps = method == BoundMethod::Analytic ? analytic_error_yield_upper(gains, phase, table)
                                        : lp_error_yield_upper(gains, phase, table, lp);
  const double y = out.y11_lower[index(phase)];
  // Beyond 1/2 the phase error carries no further penalty.
  out.e11_upper = y > 0.0 ? std::clamp(eps / y, 0.0, 0.5) : 0.5;
  return out;
}

YieldBounds bound_y11_e11(const TallySet& tallies, const IntensityTable& table,
                          BoundMethod method, const LpOptions& lp) {
  return bound_y11_e11(gains_from_tallies(tallies), table, method, lp);
}

KeyRateReport key_rate(const KeyRateInputs& in, Basis half) {
  if (in.f < 1.0) throw InvalidInput("key_rate: f must be >= 1");
  if (in.p11 < 0.0 || in.p11 > 1.0 || in.y11_lower < 0.0 || in.y11_lower > 1.0 ||
      in.q_signal < 0.0 || in.q_signal > 1.0) {
    throw InvalidInput("key_rate: input outside [0, 1]");
  }
  KeyRateReport r;
  r.half = half;
  r.inputs = in;
  r.raw = in.p11 * in.y11_lower * (1.0 - h2(in.e11_upper)) -
          in.q_signal * in.f * h2(in.e_signal);
  return r;
}

KeyRateInputs rate_inputs(const GainTable& gains, const YieldBounds& bounds,
                          const IntensityTable& table, double f) {
  const Basis m = gains.measurement();
  const auto& sig = gains.at(m, Intensity::Mu, Intensity::Mu);
  KeyRateInputs in;
  in.p11 = p11(table.mu);
  in.y11_lower = bounds.y11(m);
  in.e11_upper = bounds.e11_upper;
  in.q_signal = sig.gain;
  in.e_signal = sig.qber.value_or(0.0);
  in.f = f;
  return in;
}

}  // namespace mdiqkd
