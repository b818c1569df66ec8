#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "mdiqkd/tally.hpp"
#include "mdiqkd/transmitter.hpp"
#include "mdiqkd/types.hpp"

namespace mdiqkd {

/// Binary Shannon entropy in bits; throws InvalidInput outside [0, 1].
double h2(double x);

/// Probability that both signal pulses carry exactly one photon: mu^2 e^{-2mu}.
double p11(double mu);

/// Observed gain and QBER for one intensity pair, with 1-sigma errors.
/// A NaN gain_err means no uncertainty is known and the value only bounds
/// from below (a zero reading).
struct GainPoint {
  double gain = 0.0;
  double gain_err = 0.0;
  std::optional<double> qber;
  double qber_err = 0.0;
};

class GainTable {
 public:
  explicit GainTable(Basis measurement = Basis::Z) : measurement_(measurement) {}

  Basis measurement() const { return measurement_; }
  GainPoint& at(Basis users, Intensity a, Intensity b) {
    return points_[index(users) * 9 + index(a) * 3 + index(b)];
  }
  const GainPoint& at(Basis users, Intensity a, Intensity b) const {
    return points_[index(users) * 9 + index(a) * 3 + index(b)];
  }

 private:
  Basis measurement_;
  std::array<GainPoint, 18> points_{};
};

/// Gains with binomial 1-sigma errors (at least one count's worth).
GainTable gains_from_tallies(const TallySet& tallies);

/// CSV with header basis,intensity_A,intensity_B,gain,gain_err,qber,qber_err;
/// empty qber / gain_err fields mean "not available".
GainTable read_gain_csv(std::istream& in, Basis measurement);
void write_gain_csv(std::ostream& out, const GainTable& gains);

enum class BoundMethod { Analytic, Lp };
std::string_view to_string(BoundMethod m);
std::optional<BoundMethod> parse_bound_method(std::string_view s);

struct YieldBounds {
  Basis measurement = Basis::Z;
  BoundMethod method = BoundMethod::Analytic;
  std::array<double, 2> y11_lower{};  // indexed by the users' basis
  double e11_upper = 0.5;             // phase error, from the conjugate basis

  double y11(Basis users) const { return y11_lower[index(users)]; }
};

struct LpOptions {
  int n_cut = 7;
  double sigma_multiplier = 1.0;  // gain constraints relaxed by k sigma
};

/// Raised when the gain constraints admit no yields at all.
class BoundsInfeasible : public std::runtime_error {
 public:
  BoundsInfeasible(const std::string& what, std::string constraint, double violation)
      : std::runtime_error(what), constraint_(std::move(constraint)), violation_(violation) {}
  const std::string& constraint() const { return constraint_; }
  double violation() const { return violation_; }

 private:
  std::string constraint_;
  double violation_;
};

/// Lower bound on Y11 for both users' bases and upper bound on the phase
/// error e11 (conjugate basis) for one measurement half. Analytic mode uses
/// the two-decoy closed forms on central values; LP mode optimizes over
/// truncated yields with gains relaxed by their 1-sigma errors.
YieldBounds bound_y11_e11(const GainTable& gains, const IntensityTable& table,
                          BoundMethod method, const LpOptions& lp = {});
YieldBounds bound_y11_e11(const TallySet& tallies, const IntensityTable& table,
                          BoundMethod method, const LpOptions& lp = {});

/// Single-basis pieces, exposed for testing.
double analytic_y11_lower(const GainTable& g, Basis users, const IntensityTable& t);
double analytic_error_yield_upper(const GainTable& g, Basis users, const IntensityTable& t);
double lp_y11_lower(const GainTable& g, Basis users, const IntensityTable& t,
                    const LpOptions& lp = {});
double lp_error_yield_upper(const GainTable& g, Basis users, const IntensityTable& t,
                            const LpOptions& lp = {});

struct KeyRateInputs {
  double p11 = 0.0;
  double y11_lower = 0.0;
  double e11_upper = 0.0;
  double q_signal = 0.0;
  double e_signal = 0.0;
  double f = 1.16;
};

struct KeyRateReport {
  Basis half = Basis::Z;
  KeyRateInputs inputs;
  double raw = 0.0;

  double rate() const { return raw > 0.0 ? raw : 0.0; }
};

/// R = p11 Y11 [1 - h2(e11)] - Q f h2(E).
KeyRateReport key_rate(const KeyRateInputs& in, Basis half = Basis::Z);

/// Key-rate inputs for one half: the signal pair in the measurement basis.
KeyRateInputs rate_inputs(const GainTable& gains, const YieldBounds& bounds,
                          const IntensityTable& table, double f = 1.16);

}  // namespace mdiqkd
