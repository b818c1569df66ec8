#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mdiqkd/bsm.hpp"
#include "mdiqkd/types.hpp"

namespace mdiqkd::wire {

inline constexpr int kVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

// Announcements. `slot` is a block id: an anonymous group of `count` slots
// that share settings and outcome within one window.
struct BsmResult {
  std::uint64_t window = 0;
  std::uint64_t slot = 0;
  Basis basis = Basis::Z;
  OutcomeClass cls = OutcomeClass::NoClick;
  std::uint64_t count = 1;
  bool operator==(const BsmResult&) const = default;
};

struct BasisIntensityReveal {
  std::uint64_t window = 0;
  std::uint64_t slot = 0;
  User user = User::Alice;
  Basis basis = Basis::Z;
  Intensity intensity = Intensity::Mu;
  bool operator==(const BasisIntensityReveal&) const = default;
};

struct PolarizationBitReveal {
  std::uint64_t window = 0;
  std::uint64_t slot = 0;
  User user = User::Alice;
  int bit = 0;
  bool operator==(const PolarizationBitReveal&) const = default;
};

struct MisalignmentAnnouncement {
  std::uint64_t window = 0;
  User user = User::Alice;
  std::optional<double> theta_z;
  std::optional<double> theta_x;
  bool operator==(const MisalignmentAnnouncement&) const = default;
};

using Announcement = std::variant<BsmResult, BasisIntensityReveal,
                                  PolarizationBitReveal, MisalignmentAnnouncement>;

// Transport messages.

/// A user's light for one window, described by its controller retardances.
struct PulseTrain {
  std::uint64_t window = 0;
  User user = User::Alice;
  std::array<double, 4> retardances{};
  bool operator==(const PulseTrain&) const = default;
};

/// Tells a user which of its settings each block id of the window carries.
struct SlotAssignment {
  std::uint64_t window = 0;
  User user = User::Alice;
  Basis measurement = Basis::Z;
  std::vector<std::uint8_t> settings;  // indexed by block id
  bool operator==(const SlotAssignment&) const = default;
};

/// Several announcements of one kind for one window, encoded as rows.
struct Batch {
  std::uint64_t window = 0;
  std::vector<Announcement> items;
  bool operator==(const Batch&) const = default;
};

struct SessionEnd {
  User user = User::Alice;
  std::uint64_t windows = 0;
  bool operator==(const SessionEnd&) const = default;
};

using Message = std::variant<BsmResult, BasisIntensityReveal, PolarizationBitReveal,
                             MisalignmentAnnouncement, PulseTrain, SlotAssignment,
                             Batch, SessionEnd>;

std::string_view type_name(const Message& m);
std::uint64_t window_of(const Message& m);

enum class ErrorKind { Malformed, Version, UnknownType, OutOfOrder };

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// JSON body without framing.
std::string encode_body(const Message& m);
/// Throws ProtocolError.
Message decode_body(std::string_view body);

/// 4-byte big-endian length followed by the JSON body.
std::string encode_frame(const Message& m);

struct DecodeFailure {
  ErrorKind kind;
  std::string message;
  std::size_t skipped_bytes = 0;
};

/// Incremental frame reader. After a bad frame it reports the failure once
/// and resynchronizes on the next offset holding a length header followed
/// by a body that decodes.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  void feed(const char* data, std::size_t n) { feed(std::string_view(data, n)); }

  // Next decoded message, a failure, or nullopt when more bytes are needed.
  std::optional<std::variant<Message, DecodeFailure>> next();

  std::size_t buffered() const { return buf_.size() - pos_; }
  std::uint64_t failures() const { return failures_; }

 private:
  void compact();

  std::string buf_;
  std::size_t pos_ = 0;
  bool resyncing_ = false;
  std::uint64_t failures_ = 0;
};

}  // namespace mdiqkd::wire
