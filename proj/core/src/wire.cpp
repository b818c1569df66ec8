#include "mdiqkd/wire.hpp"

#include <nlohmann/json.hpp>

namespace mdiqkd::wire {

using json = nlohmann::ordered_json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void malformed(const std::string& what) {
  throw ProtocolError(ErrorKind::Malformed, "malformed message: " + what);
}

std::string_view announcement_name(const Announcement& a) {
  return std::visit(overloaded{
                        [](const BsmResult&) { return std::string_view("bsm_result"); },
                        [](const BasisIntensityReveal&) {
                          return std::string_view("basis_intensity_reveal");
                        },
                        [](const PolarizationBitReveal&) {
                          return std::string_view("polarization_bit_reveal");
                        },
                        [](const MisalignmentAnnouncement&) {
                          return std::string_view("misalignment");
                        },
                    },
                    a);
}

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> get_opt_number(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_number()) malformed("expected number or null");
  return j.get<double>();
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

std::uint64_t get_u64(const json& j) {
  if (!j.is_number_unsigned()) {
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
    malformed("expected unsigned integer");
  }
  return j.get<std::uint64_t>();
}

std::uint64_t get_u64(const json& j, const char* key) { return get_u64(field(j, key)); }

std::uint64_t bounded(const json& j, std::uint64_t limit) {
  const auto v = get_u64(j);
  if (v >= limit) malformed("enum index out of range");
  return v;
}

Basis basis_field(const json& j, const char* key) {
  const auto& f = field(j, key);
  if (!f.is_string()) malformed("basis must be a string");
  auto b = parse_basis(f.get<std::string>());
  if (!b) malformed("unknown basis");
  return *b;
}

User user_field(const json& j, const char* key) {
  const auto& f = field(j, key);
  if (!f.is_string()) malformed("user must be a string");
  auto u = parse_user(f.get<std::string>());
  if (!u) malformed("unknown user");
  return *u;
}

json announcement_row(const Announcement& a) {
  return std::visit(
      overloaded{
          [](const BsmResult& m) {
            return json::array({m.slot, index(m.basis), static_cast<int>(m.cls), m.count});
          },
          [](const BasisIntensityReveal& m) {
            return json::array({m.slot, index(m.user), index(m.basis), index(m.intensity)});
          },
          [](const PolarizationBitReveal& m) {
            return json::array({m.slot, index(m.user), m.bit});
          },
          [](const MisalignmentAnnouncement& m) {
            return json::array({index(m.user), opt_number(m.theta_z), opt_number(m.theta_x)});
          },
      },
      a);
}

Announcement announcement_from_row(std::string_view kind, std::uint64_t window,
                                   const json& row) {
  if (!row.is_array()) malformed("batch row must be an array");
  auto need = [&](std::size_t n) {
    if (row.size() != n) malformed("batch row has wrong width");
  };
  if (kind == "bsm_result") {
    need(4);
    BsmResult m;
    m.window = window;
    m.slot = get_u64(row[0]);
    m.basis = static_cast<Basis>(bounded(row[1], 2));
    m.cls = static_cast<OutcomeClass>(bounded(row[2], 4));
    m.count = get_u64(row[3]);
    return m;
  }
  if (kind == "basis_intensity_reveal") {
    need(4);
    BasisIntensityReveal m;
    m.window = window;
    m.slot = get_u64(row[0]);
    m.user = static_cast<User>(bounded(row[1], 2));
    m.basis = static_cast<Basis>(bounded(row[2], 2));
    m.intensity = static_cast<Intensity>(bounded(row[3], 3));
    return m;
  }
  if (kind == "polarization_bit_reveal") {
    need(3);
    PolarizationBitReveal m;
    m.window = window;
    m.slot = get_u64(row[0]);
    m.user = static_cast<User>(bounded(row[1], 2));
    m.bit = static_cast<int>(bounded(row[2], 2));
    return m;
  }
  if (kind == "misalignment") {
    need(3);
    MisalignmentAnnouncement m;
    m.window = window;
    m.user = static_cast<User>(bounded(row[0], 2));
    m.theta_z = get_opt_number(row[1]);
    m.theta_x = get_opt_number(row[2]);
    return m;
  }
  throw ProtocolError(ErrorKind::UnknownType,
                      "protocol v1 has no batch kind '" + std::string(kind) + "'");
}

std::uint64_t announcement_window(const Announcement& a) {
  return std::visit([](const auto& m) { return m.window; }, a);
}

}  // namespace

std::string_view type_name(const Message& m) {
  return std::visit(
      overloaded{
          [](const PulseTrain&) { return std::string_view("pulse_train"); },
          [](const SlotAssignment&) { return std::string_view("slot_assignment"); },
          [](const Batch&) { return std::string_view("batch"); },
          [](const SessionEnd&) { return std::string_view("session_end"); },
          [](const auto& a) { return announcement_name(Announcement(a)); },
      },
      m);
}

std::uint64_t window_of(const Message& m) {
  return std::visit(overloaded{
                        [](const SessionEnd& s) { return s.windows; },
                        [](const auto& a) { return a.window; },
                    },
                    m);
}

std::string encode_body(const Message& msg) {
  json j;
  j["type"] = std::string(type_name(msg));
  j["v"] = kVersion;
  std::visit(
      overloaded{
          [&](const BsmResult& m) {
            j["window"] = m.window;
            j["slot"] = m.slot;
            j["basis"] = std::string(to_string(m.basis));
            j["class"] = std::string(to_string(m.cls));
            j["count"] = m.count;
          },
          [&](const BasisIntensityReveal& m) {
            j["window"] = m.window;
            j["slot"] = m.slot;
            j["user"] = std::string(to_string(m.user));
            j["basis"] = std::string(to_string(m.basis));
            j["intensity"] = std::string(to_string(m.intensity));
          },
          [&](const PolarizationBitReveal& m) {
            j["window"] = m.window;
            j["slot"] = m.slot;
            j["user"] = std::string(to_string(m.user));
            j["bit"] = m.bit;
          },
          [&](const MisalignmentAnnouncement& m) {
            j["window"] = m.window;
            j["user"] = std::string(to_string(m.user));
            j["theta_z"] = opt_number(m.theta_z);
            j["theta_x"] = opt_number(m.theta_x);
          },
          [&](const PulseTrain& m) {
            j["window"] = m.window;
            j["user"] = std::string(to_string(m.user));
            j["retardances"] = m.retardances;
          },
          [&](const SlotAssignment& m) {
            j["window"] = m.window;
            j["user"] = std::string(to_string(m.user));
            j["measurement"] = std::string(to_string(m.measurement));
            j["settings"] = m.settings;
          },
          [&](const Batch& m) {
            j["window"] = m.window;
            j["kind"] = m.items.empty() ? std::string("bsm_result")
                                        : std::string(announcement_name(m.items.front()));
            json rows = json::array();
            for (const auto& a : m.items) {
              if (announcement_name(a) != j["kind"].get<std::string>()) {
                throw std::invalid_argument("batch items must share one kind");
              }
              if (announcement_window(a) != m.window) {
                throw std::invalid_argument("batch items must share the batch window");
              }
              rows.push_back(announcement_row(a));
            }
            j["rows"] = std::move(rows);
          },
          [&](const SessionEnd& m) {
            j["user"] = std::string(to_string(m.user));
            j["windows"] = m.windows;
          },
      },
      msg);
  return j.dump();
}

Message decode_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body.begin(), body.end());
  } catch (const json::exception& e) {
    malformed(e.what());
  }
  if (!j.is_object()) malformed("body is not an object");
  const auto& v = field(j, "v");
  if (!v.is_number_integer() || v.get<int>() != kVersion) {
    throw ProtocolError(ErrorKind::Version, "unsupported protocol version " + v.dump());
  }
  const auto& t = field(j, "type");
  if (!t.is_string()) malformed("type must be a string");
  const std::string type = t.get<std::string>();

  try {
    if (type == "bsm_result") {
      BsmResult m;
      m.window = get_u64(j, "window");
      m.slot = get_u64(j, "slot");
      m.basis = basis_field(j, "basis");
      const auto& c = field(j, "class");
      if (!c.is_string()) malformed("class must be a string");
      auto cls = parse_outcome_class(c.get<std::string>());
      if (!cls || *cls == OutcomeClass::DoubleOther) malformed("unknown outcome class");
      m.cls = *cls;
      m.count = get_u64(j, "count");
      return m;
    }
    if (type == "basis_intensity_reveal") {
      BasisIntensityReveal m;
      m.window = get_u64(j, "window");
      m.slot = get_u64(j, "slot");
      m.user = user_field(j, "user");
      m.basis = basis_field(j, "basis");
      const auto& f = field(j, "intensity");
      if (!f.is_string()) malformed("intensity must be a string");
      auto i = parse_intensity(f.get<std::string>());
      if (!i) malformed("unknown intensity");
      m.intensity = *i;
      return m;
    }
    if (type == "polarization_bit_reveal") {
      PolarizationBitReveal m;
      m.window = get_u64(j, "window");
      m.slot = get_u64(j, "slot");
      m.user = user_field(j, "user");
      m.bit = static_cast<int>(bounded(field(j, "bit"), 2));
      return m;
    }
    if (type == "misalignment") {
      MisalignmentAnnouncement m;
      m.window = get_u64(j, "window");
      m.user = user_field(j, "user");
      m.theta_z = get_opt_number(field(j, "theta_z"));
      m.theta_x = get_opt_number(field(j, "theta_x"));
      return m;
    }
    if (type == "pulse_train") {
      PulseTrain m;
      m.window = get_u64(j, "window");
      m.user = user_field(j, "user");
      const auto& r = field(j, "retardances");
      if (!r.is_array() || r.size() != 4) malformed("retardances must have 4 entries");
      for (std::size_t i = 0; i < 4; ++i) {
        if (!r[i].is_number()) malformed("retardance must be a number");
        m.retardances[i] = r[i].get<double>();
      }
      return m;
    }
    if (type == "slot_assignment") {
      SlotAssignment m;
      m.window = get_u64(j, "window");
      m.user = user_field(j, "user");
      m.measurement = basis_field(j, "measurement");
      const auto& s = field(j, "settings");
      if (!s.is_array()) malformed("settings must be an array");
      m.settings.reserve(s.size());
      for (const auto& e : s) m.settings.push_back(static_cast<std::uint8_t>(bounded(e, 12)));
      return m;
    }
    if (type == "batch") {
      Batch m;
      m.window = get_u64(j, "window");
      const auto& k = field(j, "kind");
      if (!k.is_string()) malformed("kind must be a string");
      const std::string kind = k.get<std::string>();
      const auto& rows = field(j, "rows");
      if (!rows.is_array()) malformed("rows must be an array");
      m.items.reserve(rows.size());
      if (rows.empty()) announcement_from_row(kind, m.window, json::array({0, 0, 0, 0}));
      for (const auto& row : rows) m.items.push_back(announcement_from_row(kind, m.window, row));
      return m;
    }
    if (type == "session_end") {
      SessionEnd m;
      m.user = user_field(j, "user");
      m.windows = get_u64(j, "windows");
      return m;
    }
  } catch (const json::exception& e) {
    malformed(e.what());
  }
  throw ProtocolError(ErrorKind::UnknownType, "protocol v1 has no message type '" + type + "'");
}

std::string encode_frame(const Message& m) {
  const std::string body = encode_body(m);
  if (body.size() > kMaxFrameBytes) throw std::length_error("frame too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(body.size() + 4);
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += body;
  return out;
}

void FrameDecoder::feed(std::string_view bytes) {
  compact();
  buf_.append(bytes.data(), bytes.size());
}

void FrameDecoder::compact() {
  if (pos_ > 0 && pos_ * 2 >= buf_.size()) {
    buf_.erase(0, pos_);
    pos_ = 0;
  }
}

namespace {

std::uint32_t read_be32(const std::string& b, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3]));
}

constexpr std::string_view kBodyPrefix = "{\"type\":\"";

}  // namespace

std::optional<std::variant<Message, DecodeFailure>> FrameDecoder::next() {
  std::size_t skipped = 0;
  auto skip_byte = [&](ErrorKind kind, const std::string& why)
      -> std::optional<std::variant<Message, DecodeFailure>> {
    ++pos_;
    ++skipped;
    if (!resyncing_) {
      resyncing_ = true;
      ++failures_;
      return DecodeFailure{kind, why, skipped};
    }
    return std::nullopt;
  };

  while (true) {
    const std::size_t avail = buf_.size() - pos_;
    if (avail < 4) return std::nullopt;
    const std::uint32_t len = read_be32(buf_, pos_);
    bool plausible = len >= 2 && len <= kMaxFrameBytes;
    if (plausible && avail > 4) plausible = buf_[pos_ + 4] == '{';
    if (plausible && resyncing_) {
      // Require the canonical body prefix before trusting a header found
      // by scanning, so garbage cannot stall the stream on a bogus length.
      const std::size_t have = std::min<std::size_t>(avail - 4, kBodyPrefix.size());
      plausible = len >= kBodyPrefix.size() &&
                  std::string_view(buf_).substr(pos_ + 4, have) == kBodyPrefix.substr(0, have);
    }
    if (!plausible) {
      if (auto f = skip_byte(ErrorKind::Malformed, "bad frame header")) return f;
      continue;
    }
    if (avail - 4 < len) return std::nullopt;
    const std::string_view body(buf_.data() + pos_ + 4, len);
    try {
      Message m = decode_body(body);
      pos_ += 4 + len;
      resyncing_ = false;
      return m;
    } catch (const ProtocolError& e) {
      if (e.kind() == ErrorKind::Malformed) {
        if (auto f = skip_byte(e.kind(), e.what())) return f;
        continue;
      }
      // Well-delimited frame of a kind we do not speak: drop it whole.
      pos_ += 4 + len;
      resyncing_ = false;
      ++failures_;
      return DecodeFailure{e.kind(), e.what(), 4 + len};
    }
  }
}

}  // namespace mdiqkd::wire
