#pragma once

#include "mdiqkd/bsm.hpp"
#include "mdiqkd/transmitter.hpp"

namespace mdiqkd {

struct CalibrationTarget {
  double q_signal = 3.00e-5;   // Q_mu,mu in the measurement basis
  double q_vacuum = 7.56e-7;   // Q_mu,omega in the measurement basis
  double theta_rad = 0.1;      // residual misalignment assumed during the fit
  Basis basis = Basis::Z;
  IntensityTable table = uniform_decoy_table();
};

struct CalibrationResult {
  DetectorParams params;
  double q_signal_model = 0.0;
  double q_vacuum_model = 0.0;
  bool dark_clamped = false;  // target Q_mu,omega unreachable; dark set to 0
};

/// Phase-averaged gain for users in `basis` with intensities (a, b),
/// averaged over their bits. Alice's light is rotated by theta.
double model_gain(const DetectorParams& params, const IntensityTable& table, Basis basis,
                  Intensity a, Intensity b, double theta_rad);

/// Fits detection efficiency to q_signal and dark probability to q_vacuum.
CalibrationResult calibrate_detectors(const CalibrationTarget& target);

}  // namespace mdiqkd
