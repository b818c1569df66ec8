#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "mdiqkd/session.hpp"

namespace mdiqkd {

/// The file could not be opened or is not well-formed INI.
class ConfigReadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// INI text with sections:
///   [session] duration_s rep_rate_hz seed mode
///   [intensity] mu nu omega p_mu p_nu p_omega   (+ [intensity_alice], [intensity_bob])
///   [detector] efficiency dark_probability
///   [drift] rate_rad_per_s initial_angle_rad substep_s  (+ [drift_alice], [drift_bob])
///   [controller] enabled alpha threshold_rad collection_s max_step_rad reference_history
///   [schedule] period_s
///   [analysis] method f n_cut lp_sigma
/// Missing keys keep `base` values. Unknown sections or keys and
/// unparsable values throw InvalidInput; the result is not validated.
SessionConfig parse_config(std::istream& in, const SessionConfig& base = {});
SessionConfig load_config(const std::filesystem::path& path, const SessionConfig& base = {});

/// Resolved config in the same format; parse_config(write_config(c)) == c.
void write_config(std::ostream& out, const SessionConfig& config);

/// Shortest text that reads back to the same double.
std::string format_double(double v);

}  // namespace mdiqkd
