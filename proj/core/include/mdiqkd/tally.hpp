#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>

#include "mdiqkd/types.hpp"

namespace mdiqkd {

struct TallyEntry {
  std::uint64_t sent = 0;
  std::uint64_t coincidences = 0;  // psi_plus
  std::uint64_t errors = 0;        // psi_plus with the wrong bit relation

  double gain() const;  // 0 when nothing was sent
  double qber() const;  // 0 when there were no coincidences
  TallyEntry& operator+=(const TallyEntry& rhs);
  bool operator==(const TallyEntry&) const = default;
};

/// Gains and error counts for one measurement half (Charlie projecting onto
/// `measurement`), keyed by the users' shared basis and intensity pair.
/// Pairs where the users chose different bases are not tallied.
class TallySet {
 public:
  explicit TallySet(Basis measurement = Basis::Z) : measurement_(measurement) {}

  Basis measurement() const { return measurement_; }
  TallyEntry& at(Basis users, Intensity a, Intensity b) {
    return entries_[slot(users, a, b)];
  }
  const TallyEntry& at(Basis users, Intensity a, Intensity b) const {
    return entries_[slot(users, a, b)];
  }

  // Associative and commutative; throws InvalidInput on mismatched halves.
  TallySet& merge(const TallySet& other);
  // Throws InvalidInput unless errors <= coincidences <= sent everywhere.
  void validate() const;
  std::uint64_t total_sent() const;

  bool operator==(const TallySet&) const = default;

 private:
  static std::size_t slot(Basis users, Intensity a, Intensity b) {
    return index(users) * 9 + index(a) * 3 + index(b);
  }
  Basis measurement_;
  std::array<TallyEntry, 18> entries_{};
};

/// CSV with header basis,intensity_A,intensity_B,sent,coincidences,errors.
void write_tally_csv(std::ostream& out, const TallySet& tallies);
/// Missing rows read as zero. Throws InvalidInput on malformed content.
TallySet read_tally_csv(std::istream& in, Basis measurement);

}  // namespace mdiqkd
