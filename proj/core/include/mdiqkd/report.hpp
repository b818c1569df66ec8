#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdiqkd/session.hpp"

namespace mdiqkd {

std::string_view version();

/// An output path could not be created or written.
class OutputError : public std::runtime_error {
 public:
  OutputError(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(what + ": " + path.string()), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct RunManifest {
  SessionConfig config;
  std::string command;
  double start_virtual_s = 0.0;
  double stop_virtual_s = 0.0;
  std::vector<std::string> outputs;  // file names relative to the output dir
};

/// Creates `dir` and checks that files can be written into it.
void prepare_output_dir(const std::filesystem::path& dir);

/// File names emit_traces writes.
std::vector<std::string> trace_file_names();

void write_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

/// Writes misalignment_<user>.csv, control_<user>.csv, tallies_<basis>.csv
/// and summary.txt. The summary is computed from the CSVs after they are
/// written.
void emit_traces(const SessionReport& report, const std::filesystem::path& dir);

/// Ordered key/value summary recomputed from an output directory.
using Summary = std::vector<std::pair<std::string, std::string>>;
Summary summarize_outputs(const std::filesystem::path& dir, const SessionConfig& config);
void write_summary(const Summary& s, const std::filesystem::path& file);
std::map<std::string, std::string> read_summary(const std::filesystem::path& file);

/// Reads tallies_<basis>.csv.
TallySet read_tallies(const std::filesystem::path& file, Basis measurement);

}  // namespace mdiqkd
