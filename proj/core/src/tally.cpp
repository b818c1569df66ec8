#include "mdiqkd/tally.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace mdiqkd {

double TallyEntry::gain() const {
  return sent == 0 ? 0.0 : static_cast<double>(coincidences) / static_cast<double>(sent);
}

double TallyEntry::qber() const {
  return coincidences == 0
             ? 0.0
             : static_cast<double>(errors) / static_cast<double>(coincidences);
}

TallyEntry& TallyEntry::operator+=(const TallyEntry& rhs) {
  sent += rhs.sent;
  coincidences += rhs.coincidences;
  errors += rhs.errors;
  return *this;
}

TallySet& TallySet::merge(const TallySet& other) {
  if (other.measurement_ != measurement_) {
    throw InvalidInput("cannot merge tallies from different measurement halves");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i] += other.entries_[i];
  return *this;
}

void TallySet::validate() const {
  for (const auto& e : entries_) {
    if (e.errors > e.coincidences || e.coincidences > e.sent) {
      throw InvalidInput("tally violates errors <= coincidences <= sent");
    }
  }
}

std::uint64_t TallySet::total_sent() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) n += e.sent;
  return n;
}

void write_tally_csv(std::ostream& out, const TallySet& tallies) {
  out << "basis,intensity_A,intensity_B,sent,coincidences,errors\n";
  for (Basis b : kBases) {
    for (Intensity a : kIntensities) {
      for (Intensity c : kIntensities) {
        const auto& e = tallies.at(b, a, c);
        out << to_string(b) << ',' << to_string(a) << ',' << to_string(c) << ','
            << e.sent << ',' << e.coincidences << ',' << e.errors << '\n';
      }
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::uint64_t parse_count(const std::string& s, std::size_t line_no) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw InvalidInput("tally csv line " + std::to_string(line_no) +
                       ": bad count '" + s + "'");
  }
  return v;
}

}  // namespace

TallySet read_tally_csv(std::istream& in, Basis measurement) {
  TallySet t(measurement);
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (header) {
      header = false;
      if (f.size() != 6 || f[0] != "basis") {
        throw InvalidInput("tally csv: unexpected header");
      }
      continue;
    }
    if (f.size() != 6) {
      throw InvalidInput("tally csv line " + std::to_string(line_no) + ": expected 6 fields");
    }
    const auto b = parse_basis(f[0]);
    const auto a = parse_intensity(f[1]);
    const auto c = parse_intensity(f[2]);
    if (!b || !a || !c) {
      throw InvalidInput("tally csv line " + std::to_string(line_no) + ": bad key");
    }
    auto& e = t.at(*b, *a, *c);
    e.sent = parse_count(f[3], line_no);
    e.coincidences = parse_count(f[4], line_no);
    e.errors = parse_count(f[5], line_no);
  }
  if (header) throw InvalidInput("tally csv: empty input");
  t.validate();
  return t;
}

}  // namespace mdiqkd
