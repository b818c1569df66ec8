#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "mdiqkd/decoy.hpp"

namespace mdiqkd {

/// Reference Y11 and e11 estimates for one measurement half.
struct ReferenceEstimates {
  Basis measurement = Basis::Z;
  double y11_z = 0.0;
  double y11_x = 0.0;
  double e11 = 0.0;
  double rate = 0.0;
  double theta_alice = 0.0;
  double theta_bob = 0.0;

  double y11(Basis users) const { return users == Basis::Z ? y11_z : y11_x; }
};

/// CSV with header measurement,y11_z,y11_x,e11,rate,theta_alice,theta_bob.
ReferenceEstimates read_estimates_csv(std::istream& in);

struct HalfAnalysis {
  Basis measurement = Basis::Z;
  GainTable gains;
  std::optional<ReferenceEstimates> reference;
  std::optional<KeyRateReport> from_reference;  // Y11 and e11 taken as given
  std::optional<YieldBounds> bounds;            // computed from the gains
  std::optional<KeyRateReport> from_bounds;
  std::string note;                             // why bounds are missing
};

struct AnalysisOptions {
  IntensityTable table = uniform_decoy_table();
  BoundMethod method = BoundMethod::Analytic;
  LpOptions lp{};
  double f = 1.16;
};

HalfAnalysis analyze_gains(const GainTable& gains, const AnalysisOptions& opt,
                           const std::optional<ReferenceEstimates>& reference = std::nullopt);

/// A fixture directory holds gains.csv and optionally estimates.csv; the
/// half is taken from estimates.csv, else from `measurement`.
HalfAnalysis analyze_fixture(const std::filesystem::path& dir, const AnalysisOptions& opt,
                             Basis measurement = Basis::Z);

}  // namespace mdiqkd
