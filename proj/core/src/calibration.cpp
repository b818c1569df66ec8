#include "mdiqkd/calibration.hpp"

#include <cmath>

namespace mdiqkd {

double model_gain(const DetectorParams& params, const IntensityTable& table, Basis basis,
                  Intensity a, Intensity b, double theta_rad) {
  // A rotation about S3 tilts both linear bases by the same angle.
  const auto tilt = ChannelUnitary::rotation(kAxisS3, 2.0 * theta_rad);
  double sum = 0.0;
  for (int bit_a = 0; bit_a < 2; ++bit_a) {
    for (int bit_b = 0; bit_b < 2; ++bit_b) {
      const auto sa = tilt.apply(bb84_state(bb84_label(basis, bit_a)));
      const auto sb = bb84_state(bb84_label(basis, bit_b));
      sum += phase_averaged_outcomes(sa, table.mean_photons(a), sb, table.mean_photons(b),
                                     basis, params)
                 .psi_plus;
    }
  }
  return sum / 4.0;
}

namespace {

template <class F>
double bisect_increasing(F f, double target, double lo, double hi) {
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

CalibrationResult calibrate_detectors(const CalibrationTarget& t) {
  t.table.validate();
  if (!(t.q_signal > 0.0 && t.q_signal < 1.0) || !(t.q_vacuum >= 0.0 && t.q_vacuum < t.q_signal)) {
    throw InvalidInput("calibration targets must satisfy 0 <= Q_mu,omega < Q_mu,mu < 1");
  }
  if (!(t.theta_rad >= 0.0 && t.theta_rad < 0.7853981633974483)) {
    throw InvalidInput("calibration misalignment must lie in [0, pi/4)");
  }
  auto eta_for = [&](double dark) {
    return bisect_increasing(
        [&](double eta) {
          return model_gain({eta, dark}, t.table, t.basis, Intensity::Mu, Intensity::Mu,
                            t.theta_rad);
        },
        t.q_signal, 0.0, 1.0);
  };
  auto vacuum_gain = [&](double dark) {
    return model_gain({eta_for(dark), dark}, t.table, t.basis, Intensity::Mu, Intensity::Omega,
                      t.theta_rad);
  };
  CalibrationResult r;
  double dark = 0.0;
  if (vacuum_gain(0.0) >= t.q_vacuum) {
    r.dark_clamped = true;
  } else {
    double hi = 1e-6;
    while (vacuum_gain(hi) < t.q_vacuum && hi < 0.1) hi *= 4.0;
    dark = bisect_increasing(vacuum_gain, t.q_vacuum, 0.0, hi);
  }
  r.params = {eta_for(dark), dark};
  r.q_signal_model =
      model_gain(r.params, t.table, t.basis, Intensity::Mu, Intensity::Mu, t.theta_rad);
  r.q_vacuum_model =
      model_gain(r.params, t.table, t.basis, Intensity::Mu, Intensity::Omega, t.theta_rad);
  return r;
}

}  // namespace mdiqkd
