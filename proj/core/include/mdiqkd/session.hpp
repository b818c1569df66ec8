#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdiqkd/bench.hpp"
#include "mdiqkd/bsm.hpp"
#include "mdiqkd/compensation.hpp"
#include "mdiqkd/decoy.hpp"
#include "mdiqkd/link.hpp"
#include "mdiqkd/tally.hpp"
#include "mdiqkd/transmitter.hpp"
#include "mdiqkd/wire.hpp"

namespace mdiqkd {

enum class RunMode { InProcess, Networked };
std::string_view to_string(RunMode m);
std::optional<RunMode> parse_run_mode(std::string_view s);

struct DriftConfig {
  double rate_rad_per_s = 0.003;
  double initial_angle_rad = 0.0;  // fibre starts rotated by this much
};

struct SessionConfig {
  double duration_s = 4.0 * 3600.0;
  double rep_rate_hz = 1e7;
  std::array<IntensityTable, 2> intensities{uniform_decoy_table(), uniform_decoy_table()};
  DetectorParams detectors{0.054, 1e-6};
  std::array<DriftConfig, 2> drift{};
  double drift_substep_s = 1.0;
  ControllerConfig controller{};
  BasisSchedule schedule{};
  std::size_t reference_history = 4;
  std::uint64_t seed = 1;
  RunMode mode = RunMode::InProcess;
  BoundMethod bound_method = BoundMethod::Analytic;
  LpOptions lp{};
  double ec_efficiency = 1.16;

  std::uint64_t window_count() const;
  double window_length(std::uint64_t w) const;
  std::uint64_t window_slots(std::uint64_t w) const;

  // Every violated constraint, one message each; empty when valid.
  std::vector<std::string> validation_errors() const;
  // Throws InvalidInput listing all violations.
  void validate() const;
};

/// Raised for protocol faults: decode failures, out-of-order windows,
/// privacy-violating reveals. The session aborts.
class ProtocolFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One user's view of a window: what Charlie announced (other basis carried
// forward) and what the controller did.
struct UserWindowRecord {
  std::uint64_t window = 0;
  double time_s = 0.0;
  Basis measurement = Basis::Z;
  std::optional<double> theta_z;
  std::optional<double> theta_x;
  bool triggered = false;
  std::size_t squeezer = 0;
  double step_rad = 0.0;
  double undone_rad = 0.0;
  std::array<double, 4> retardances{};  // after this window's move
};

struct ChannelWindowRecord {
  std::uint64_t window = 0;
  Basis measurement = Basis::Z;
  double duration_s = 0.0;
  std::uint64_t slots = 0;
  std::array<MisalignmentAngles, 2> true_angles{};  // frozen channel, by user
  std::array<StateCounts, 2> counts{};              // measured basis, by user
  std::array<std::uint64_t, 2> recycled{};          // revealed singles, by user
};

struct BlockOutcome {
  OutcomeClass cls = OutcomeClass::NoClick;
  std::uint64_t count = 0;
};

struct UserResult {
  User user = User::Alice;
  std::vector<UserWindowRecord> trace;
  std::vector<std::vector<std::uint8_t>> settings;  // [window][block]
  std::vector<std::vector<std::uint32_t>> revealed; // [window] -> block ids
};

struct CharlieResult {
  std::vector<ChannelWindowRecord> channel;
  std::vector<std::vector<BlockOutcome>> outcomes;  // [window][block]
  std::uint64_t reveals = 0;
  std::uint64_t bytes_sent = 0;
};

struct ConservationCounts {
  std::uint64_t key_candidate = 0;
  std::uint64_t recycled = 0;
  std::uint64_t decoy_coincidence = 0;
  std::uint64_t discarded = 0;
  std::uint64_t total = 0;
  std::uint64_t sum() const { return key_candidate + recycled + decoy_coincidence + discarded; }
};

struct SiftResult {
  std::array<TallySet, 2> tallies{TallySet(Basis::Z), TallySet(Basis::X)};  // by half
  std::array<std::uint64_t, 2> sifted_bits{};
  std::array<std::uint64_t, 2> sifted_errors{};
  std::uint64_t dropped_missing_reveal = 0;
  std::uint64_t privacy_checked_windows = 0;
  ConservationCounts conservation;
  // Recycled singles by [user][measurement half].
  std::array<std::array<std::uint64_t, 2>, 2> recycled_singles{};
  std::array<double, 2> half_duration_s{};
};

/// Combines Charlie's outcomes with both users' private settings. Throws
/// ProtocolFault if any revealed slot is also a sifted-key slot.
SiftResult sift(const CharlieResult& charlie, const UserResult& alice, const UserResult& bob);

struct HalfReport {
  Basis measurement = Basis::Z;
  bool analyzed = false;
  YieldBounds bounds;
  KeyRateReport rate;
  std::string note;  // why bounds are missing, if they are
};

struct SessionReport {
  SessionConfig config;
  std::array<UserResult, 2> users;
  CharlieResult charlie;
  SiftResult sifted;
  std::array<HalfReport, 2> halves;
};

/// Bounds and key rate for one measurement half, from its tallies.
HalfReport analyze_half(const TallySet& tallies, const IntensityTable& table,
                        BoundMethod method, const LpOptions& lp, double f);

SessionReport run_session(const SessionConfig& config);
SessionReport run_in_process(const SessionConfig& config);
/// Alice, Bob and Charlie as three forked processes over localhost TCP.
SessionReport run_networked(const SessionConfig& config);

enum class Peer { Alice = 0, Bob = 1, Charlie = 2 };

/// A protocol participant. Nodes only react to messages; drivers move
/// frames between them.
class Node {
 public:
  struct Outgoing {
    Peer to;
    wire::Message msg;
  };
  virtual ~Node() = default;
  virtual std::vector<Outgoing> start() = 0;
  virtual std::vector<Outgoing> on_message(Peer from, const wire::Message& msg) = 0;
  virtual bool done() const = 0;
  // Whether more messages are still due from `peer`; a peer may close its
  // connection once nothing more is expected from it.
  virtual bool expects_from(Peer peer) const = 0;
};

std::unique_ptr<Node> make_user_node(User user, const SessionConfig& config);
std::unique_ptr<Node> make_charlie_node(const SessionConfig& config);
const UserResult& user_result(const Node& node);
const CharlieResult& charlie_result(const Node& node);

/// Runs one node over already-connected links until it is done.
void run_node(Node& node, const std::array<TcpLink*, 3>& links);

/// Assembles the report from the three nodes' results.
SessionReport assemble_report(const SessionConfig& config, UserResult alice, UserResult bob,
                              CharlieResult charlie);

// Result serialization, used to hand results across process boundaries.
std::string serialize(const UserResult& r);
std::string serialize(const CharlieResult& r);
UserResult deserialize_user(std::string_view s);
CharlieResult deserialize_charlie(std::string_view s);

}  // namespace mdiqkd
