#include "mdiqkd/analysis.hpp"

#include <fstream>
#include <sstream>
#include <vector>

namespace mdiqkd {

ReferenceEstimates read_estimates_csv(std::istream& in) {
  std::string header, line;
  if (!std::getline(in, header) || header.rfind("measurement,", 0) != 0) {
    throw InvalidInput("estimates csv: unexpected header");
  }
  while (std::getline(in, line) && line.empty()) {
  }
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
  if (f.size() != 7) throw InvalidInput("estimates csv: expected 7 fields");
  ReferenceEstimates e;
  const auto b = parse_basis(f[0]);
  if (!b) throw InvalidInput("estimates csv: bad measurement basis");
  e.measurement = *b;
  try {
    e.y11_z = std::stod(f[1]);
    e.y11_x = std::stod(f[2]);
    e.e11 = std::stod(f[3]);
    e.rate = std::stod(f[4]);
    e.theta_alice = std::stod(f[5]);
    e.theta_bob = std::stod(f[6]);
  } catch (const std::exception&) {
    throw InvalidInput("estimates csv: bad number");
  }
  return e;
}

HalfAnalysis analyze_gains(const GainTable& gains, const AnalysisOptions& opt,
                           const std::optional<ReferenceEstimates>& reference) {
  HalfAnalysis h;
  h.measurement = gains.measurement();
  h.gains = gains;
  h.reference = reference;
  const auto& sig = gains.at(h.measurement, Intensity::Mu, Intensity::Mu);
  if (reference) {
    KeyRateInputs in;
    in.p11 = p11(opt.table.mu);
    in.y11_lower = reference->y11(h.measurement);
    in.e11_upper = reference->e11;
    in.q_signal = sig.gain;
    in.e_signal = sig.qber.value_or(0.0);
    in.f = opt.f;
    h.from_reference = key_rate(in, h.measurement);
  }
  try {
    h.bounds = bound_y11_e11(gains, opt.table, opt.method, opt.lp);
    h.from_bounds = key_rate(rate_inputs(gains, *h.bounds, opt.table, opt.f), h.measurement);
  } catch (const BoundsInfeasible& e) {
    h.note = e.what();
  }
  return h;
}

HalfAnalysis analyze_fixture(const std::filesystem::path& dir, const AnalysisOptions& opt,
                             Basis measurement) {
  std::optional<ReferenceEstimates> reference;
  if (std::ifstream est(dir / "estimates.csv"); est) {
    reference = read_estimates_csv(est);
    measurement = reference->measurement;
  }
  std::ifstream g(dir / "gains.csv");
  if (!g) throw InvalidInput("cannot read " + (dir / "gains.csv").string());
  return analyze_gains(read_gain_csv(g, measurement), opt, reference);
}

}  // namespace mdiqkd
