#include "mdiqkd/session.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mdiqkd {

std::string_view to_string(RunMode m) {
  return m == RunMode::InProcess ? "in-process" : "networked";
}

std::optional<RunMode> parse_run_mode(std::string_view s) {
  if (s == "in-process") return RunMode::InProcess;
  if (s == "networked") return RunMode::Networked;
  return std::nullopt;
}

std::uint64_t SessionConfig::window_count() const {
  if (!(duration_s > 0.0)) return 0;
  return static_cast<std::uint64_t>(std::ceil(duration_s / schedule.period_s - 1e-9));
}

double SessionConfig::window_length(std::uint64_t w) const {
  return std::min(schedule.period_s, duration_s - static_cast<double>(w) * schedule.period_s);
}

std::uint64_t SessionConfig::window_slots(std::uint64_t w) const {
  return static_cast<std::uint64_t>(std::llround(rep_rate_hz * window_length(w)));
}

std::vector<std::string> SessionConfig::validation_errors() const {
  std::vector<std::string> errs;
  auto check = [&](bool ok, const char* msg) {
    if (!ok) errs.emplace_back(msg);
  };
  auto nested = [&](auto&& fn, const std::string& where) {
    try {
      fn();
    } catch (const std::exception& e) {
      errs.push_back(where + ": " + e.what());
    }
  };
  check(std::isfinite(duration_s) && duration_s >= 0.0, "session.duration_s must be finite and >= 0");
  check(std::isfinite(rep_rate_hz) && rep_rate_hz > 0.0, "session.rep_rate_hz must be > 0");
  check(rep_rate_hz * schedule.period_s < 9e18, "slots per window overflow");
  for (User u : kUsers) {
    nested([&] { intensities[index(u)].validate(); },
           "intensity." + std::string(to_string(u)));
    const auto& d = drift[index(u)];
    if (!(std::isfinite(d.rate_rad_per_s) && d.rate_rad_per_s >= 0.0)) {
      errs.push_back("drift." + std::string(to_string(u)) + " rate must be >= 0");
    }
    if (!(d.initial_angle_rad >= 0.0 && d.initial_angle_rad <= 1.5707963267948966)) {
      errs.push_back("drift." + std::string(to_string(u)) + " initial angle must lie in [0, pi/2]");
    }
  }
  const auto& a = intensities[0];
  const auto& b = intensities[1];
  check(a.mu == b.mu && a.nu == b.nu && a.omega == b.omega,
        "decoy analysis needs both users to use the same mean photon numbers");
  nested([&] { detectors.validate(); }, "detector");
  check(std::isfinite(drift_substep_s) && drift_substep_s > 0.0, "drift.substep_s must be > 0");
  nested([&] { controller.validate(); }, "controller");
  nested([&] { schedule.validate(); }, "schedule");
  check(std::abs(controller.collection_s - schedule.period_s) < 1e-9,
        "controller.collection_s must equal schedule.period_s (one estimate per basis window)");
  check(reference_history >= 1, "controller.reference_history must be >= 1");
  check(ec_efficiency >= 1.0, "analysis.ec_efficiency must be >= 1");
  check(lp.n_cut >= 1 && lp.n_cut <= 20, "analysis.n_cut must lie in [1, 20]");
  check(lp.sigma_multiplier >= 0.0, "analysis.lp_sigma must be >= 0");
  return errs;
}

void SessionConfig::validate() const {
  const auto errs = validation_errors();
  if (errs.empty()) return;
  std::string msg = "invalid session config:";
  for (const auto& e : errs) msg += "\n  " + e;
  throw InvalidInput(msg);
}

namespace {

using wire::Message;
using Outgoing = Node::Outgoing;

Peer peer_of(User u) { return u == User::Alice ? Peer::Alice : Peer::Bob; }

[[noreturn]] void fault(const std::string& what) { throw ProtocolFault(what); }

void expect_window(std::uint64_t got, std::uint64_t want, std::string_view what) {
  if (got != want) {
    fault("out-of-order " + std::string(what) + ": window " + std::to_string(got) +
          ", expected " + std::to_string(want));
  }
}

template <class T>
const T& item_as(const wire::Announcement& a, std::string_view what) {
  const T* p = std::get_if<T>(&a);
  if (!p) fault("unexpected announcement in " + std::string(what) + " batch");
  return *p;
}

Basis measurement_of(const SessionConfig& cfg, std::uint64_t w) {
  const double t = (static_cast<double>(w) + 0.5) * cfg.schedule.period_s + cfg.schedule.origin_s;
  return basis_at(t, cfg.schedule);
}

struct Reveal {
  Basis basis;
  Intensity intensity;
};

class UserNode final : public Node {
 public:
  UserNode(User user, const SessionConfig& cfg)
      : user_(user), cfg_(cfg), n_(cfg.window_count()) {
    result_.user = user;
  }

  std::vector<Outgoing> start() override {
    std::vector<Outgoing> out;
    begin_window(out);
    return out;
  }

  std::vector<Outgoing> on_message(Peer from, const Message& msg) override {
    std::vector<Outgoing> out;
    if (from == Peer::Charlie) {
      from_charlie(msg, out);
    } else if (from == peer_of(other(user_))) {
      from_partner(msg, out);
    } else {
      fault("message from unexpected peer");
    }
    return out;
  }

  bool done() const override { return end_sent_ && partner_end_; }
  bool expects_from(Peer p) const override {
    return p == Peer::Charlie ? !end_sent_ : !partner_end_;
  }
  const UserResult& result() const { return result_; }

 private:
  void begin_window(std::vector<Outgoing>& out) {
    if (w_ >= n_) {
      const wire::SessionEnd end{user_, n_};
      out.push_back({Peer::Charlie, end});
      out.push_back({peer_of(other(user_)), end});
      end_sent_ = true;
      return;
    }
    wire::PulseTrain p{w_, user_, {}};
    for (std::size_t i = 0; i < 4; ++i) p.retardances[i] = bank_.retardance(i);
    out.push_back({Peer::Charlie, p});
  }

  void from_charlie(const Message& msg, std::vector<Outgoing>& out) {
    if (end_sent_) fault("message from charlie after session end");
    if (const auto* a = std::get_if<wire::SlotAssignment>(&msg)) {
      expect_window(a->window, w_, "slot assignment");
      if (a->user != user_ || assignment_) fault("unexpected slot assignment");
      assignment_ = *a;
      return;
    }
    if (const auto* b = std::get_if<wire::Batch>(&msg)) {
      expect_window(b->window, w_, "bsm results");
      if (!assignment_ || outcomes_) fault("bsm results before slot assignment");
      std::vector<BlockOutcome> outcomes(assignment_->settings.size());
      std::vector<bool> seen(outcomes.size(), false);
      for (const auto& it : b->items) {
        const auto& r = item_as<wire::BsmResult>(it, "bsm result");
        if (r.slot >= outcomes.size() || seen[r.slot]) fault("bsm result for unknown block");
        if (r.basis != assignment_->measurement) fault("bsm result basis mismatch");
        seen[r.slot] = true;
        outcomes[r.slot] = {r.cls, r.count};
      }
      outcomes_ = std::move(outcomes);
      // Step 3: reveal basis and intensity for every announced slot.
      wire::Batch reveal{w_, {}};
      reveal.items.reserve(assignment_->settings.size());
      for (std::size_t blk = 0; blk < assignment_->settings.size(); ++blk) {
        const Setting s = setting_from_index(assignment_->settings[blk]);
        reveal.items.push_back(wire::BasisIntensityReveal{w_, blk, user_, s.basis, s.intensity});
      }
      out.push_back({Peer::Charlie, reveal});
      out.push_back({peer_of(other(user_)), std::move(reveal)});
      maybe_reveal_bits(out);
      return;
    }
    if (const auto* m = std::get_if<wire::MisalignmentAnnouncement>(&msg)) {
      expect_window(m->window, w_, "misalignment announcement");
      if (!bits_sent_ || m->user != user_) fault("unexpected misalignment announcement");
      actuate(*m);
      reset_window();
      ++w_;
      begin_window(out);
      return;
    }
    fault("unexpected " + std::string(wire::type_name(msg)) + " from charlie");
  }

  void from_partner(const Message& msg, std::vector<Outgoing>& out) {
    if (const auto* e = std::get_if<wire::SessionEnd>(&msg)) {
      if (e->windows != n_ || partner_end_) fault("partner ended with a different window count");
      partner_end_ = true;
      return;
    }
    const auto* b = std::get_if<wire::Batch>(&msg);
    if (!b) fault("unexpected " + std::string(wire::type_name(msg)) + " from partner");
    expect_window(b->window, w_, "partner reveal");
    if (partner_) fault("duplicate partner reveal");
    std::vector<Reveal> rv;
    rv.reserve(b->items.size());
    for (std::size_t i = 0; i < b->items.size(); ++i) {
      const auto& r = item_as<wire::BasisIntensityReveal>(b->items[i], "partner reveal");
      if (r.slot != i) fault("partner reveals out of order");
      rv.push_back({r.basis, r.intensity});
    }
    partner_ = std::move(rv);
    maybe_reveal_bits(out);
  }

  // Step 4: share bits only for singles where the partner sent omega.
  void maybe_reveal_bits(std::vector<Outgoing>& out) {
    if (!outcomes_ || !partner_ || bits_sent_) return;
    if (partner_->size() != outcomes_->size()) fault("partner reveal size mismatch");
    const Basis meas = assignment_->measurement;
    wire::Batch bits{w_, {}};
    std::vector<std::uint32_t> revealed;
    for (std::size_t blk = 0; blk < outcomes_->size(); ++blk) {
      const Setting s = setting_from_index(assignment_->settings[blk]);
      if (!is_single((*outcomes_)[blk].cls)) continue;
      if ((*partner_)[blk].intensity != Intensity::Omega) continue;
      if (s.intensity == Intensity::Omega || s.basis != meas) continue;
      bits.items.push_back(wire::PolarizationBitReveal{w_, blk, user_, s.bit});
      revealed.push_back(static_cast<std::uint32_t>(blk));
    }
    out.push_back({Peer::Charlie, std::move(bits)});
    result_.revealed.push_back(std::move(revealed));
    result_.settings.push_back(assignment_->settings);
    bits_sent_ = true;
  }

  void actuate(const wire::MisalignmentAnnouncement& m) {
    MisalignmentEstimate raw;
    raw.theta_z = m.theta_z;
    raw.theta_x = m.theta_x;
    raw.window = m.window;
    const auto est = carry_forward(raw, last_);
    last_ = est;
    UserWindowRecord rec;
    rec.window = w_;
    rec.time_s = static_cast<double>(w_) * cfg_.schedule.period_s;
    rec.measurement = assignment_->measurement;
    rec.theta_z = est.theta_z;
    rec.theta_x = est.theta_x;
    if (cfg_.controller.enabled && should_trigger(est, cfg_.controller)) {
      const auto step = control_step(ctl_, est, cfg_.controller, bank_);
      ctl_ = step.state;
      bank_ = step.bank;
      rec.triggered = true;
      rec.squeezer = step.squeezer;
      rec.step_rad = step.step_rad;
      rec.undone_rad = step.undone_rad;
    } else {
      ctl_ = controller_idle(ctl_);
    }
    for (std::size_t i = 0; i < 4; ++i) rec.retardances[i] = bank_.retardance(i);
    result_.trace.push_back(rec);
  }

  void reset_window() {
    assignment_.reset();
    outcomes_.reset();
    partner_.reset();
    bits_sent_ = false;
  }

  User user_;
  SessionConfig cfg_;
  std::uint64_t n_;
  std::uint64_t w_ = 0;
  SqueezerBank bank_;
  ControllerState ctl_;
  MisalignmentEstimate last_;
  std::optional<wire::SlotAssignment> assignment_;
  std::optional<std::vector<BlockOutcome>> outcomes_;
  std::optional<std::vector<Reveal>> partner_;
  bool bits_sent_ = false;
  bool end_sent_ = false;
  bool partner_end_ = false;
  UserResult result_;
};

constexpr std::array<OutcomeClass, 4> kAnnounced = {
    OutcomeClass::PsiPlus, OutcomeClass::SingleH, OutcomeClass::SingleV, OutcomeClass::NoClick};

class CharlieNode final : public Node {
 public:
  explicit CharlieNode(const SessionConfig& cfg)
      : cfg_(cfg),
        n_(cfg.window_count()),
        drift_{make_drift(cfg, User::Alice), make_drift(cfg, User::Bob)} {
    for (auto& per_user : ref_) {
      for (auto& r : per_user) r = ReferenceRate(cfg.reference_history);
    }
  }

  std::vector<Outgoing> start() override { return {}; }

  std::vector<Outgoing> on_message(Peer from, const Message& msg) override {
    if (from == Peer::Charlie) fault("charlie received its own message");
    const User u = from == Peer::Alice ? User::Alice : User::Bob;
    const std::size_t ui = index(u);
    std::vector<Outgoing> out;
    if (const auto* e = std::get_if<wire::SessionEnd>(&msg)) {
      if (e->windows != n_ || w_ != n_ || ended_[ui]) fault("premature session end");
      ended_[ui] = true;
      return out;
    }
    if (const auto* p = std::get_if<wire::PulseTrain>(&msg)) {
      expect_window(p->window, w_, "pulse train");
      if (p->user != u || pulses_[ui]) fault("unexpected pulse train");
      pulses_[ui] = p->retardances;
      if (pulses_[0] && pulses_[1]) measure(out);
      return out;
    }
    if (const auto* b = std::get_if<wire::Batch>(&msg)) {
      expect_window(b->window, w_, "reveal batch");
      if (!measured_) fault("reveal before measurement");
      if (!bir_[ui]) {
        std::vector<Reveal> rv;
        rv.reserve(b->items.size());
        for (std::size_t i = 0; i < b->items.size(); ++i) {
          const auto& r = item_as<wire::BasisIntensityReveal>(b->items[i], "basis reveal");
          if (r.slot != i || r.user != u) fault("basis reveals out of order");
          rv.push_back({r.basis, r.intensity});
        }
        if (rv.size() != blocks_.size()) fault("basis reveal size mismatch");
        bir_[ui] = std::move(rv);
      } else if (!bits_[ui]) {
        std::vector<wire::PolarizationBitReveal> bits;
        for (const auto& it : b->items) {
          bits.push_back(item_as<wire::PolarizationBitReveal>(it, "bit reveal"));
        }
        bits_[ui] = std::move(bits);
      } else {
        fault("unexpected extra batch");
      }
      if (bir_[0] && bir_[1] && bits_[0] && bits_[1]) estimate(out);
      return out;
    }
    fault("unexpected " + std::string(wire::type_name(msg)) + " at charlie");
  }

  bool done() const override { return ended_[0] && ended_[1]; }
  bool expects_from(Peer p) const override {
    return p != Peer::Charlie && !ended_[static_cast<std::size_t>(p)];
  }
  const CharlieResult& result() const { return result_; }

 private:
  struct Block {
    std::uint16_t cell;
    OutcomeClass cls;
    std::uint64_t count;
  };

  static DriftProcess make_drift(const SessionConfig& cfg, User u) {
    const auto& d = cfg.drift[index(u)];
    ChannelUnitary initial;
    if (d.initial_angle_rad > 0.0) {
      Rng rng(derive_seed(cfg.seed, "initial-channel", index(u)));
      initial = random_rotation(rng, d.initial_angle_rad);
    }
    return DriftProcess(d.rate_rad_per_s, derive_seed(cfg.seed, "drift", index(u)), initial);
  }

  void measure(std::vector<Outgoing>& out) {
    const Basis meas = measurement_of(cfg_, w_);
    const SqueezerBank geometry;
    std::array<ArmLight, 2> light;
    ChannelWindowRecord rec;
    rec.window = w_;
    rec.measurement = meas;
    rec.duration_s = cfg_.window_length(w_);
    rec.slots = cfg_.window_slots(w_);
    for (User u : kUsers) {
      std::array<double, 4> r = *pulses_[index(u)];
      const auto epc = squeezer_unitary(r, geometry).unitary;
      light[index(u)] = {drift_[index(u)].current() * epc, cfg_.intensities[index(u)]};
      rec.true_angles[index(u)] = misalignment_angles(light[index(u)].channel);
    }
    Rng rng(derive_seed(cfg_.seed, "bench", w_));
    const auto counts = sample_window(light[0], light[1], meas, cfg_.detectors, rec.slots, rng);

    blocks_.clear();
    for (std::size_t c = 0; c < kCellCount; ++c) {
      for (OutcomeClass cls : kAnnounced) {
        const auto n = counts[c].of(cls);
        if (n > 0) blocks_.push_back({static_cast<std::uint16_t>(c), cls, n});
      }
    }
    Rng shuffle_rng(derive_seed(cfg_.seed, "block-order", w_));
    for (std::size_t i = blocks_.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(blocks_[i - 1], blocks_[pick(shuffle_rng)]);
    }

    wire::SlotAssignment sa{w_, User::Alice, meas, {}};
    wire::SlotAssignment sb{w_, User::Bob, meas, {}};
    wire::Batch results{w_, {}};
    std::vector<BlockOutcome> outcomes;
    sa.settings.reserve(blocks_.size());
    sb.settings.reserve(blocks_.size());
    results.items.reserve(blocks_.size());
    for (std::size_t blk = 0; blk < blocks_.size(); ++blk) {
      const auto& b = blocks_[blk];
      sa.settings.push_back(static_cast<std::uint8_t>(b.cell / kSettingCount));
      sb.settings.push_back(static_cast<std::uint8_t>(b.cell % kSettingCount));
      results.items.push_back(wire::BsmResult{w_, blk, meas, b.cls, b.count});
      outcomes.push_back({b.cls, b.count});
    }
    out.push_back({Peer::Alice, std::move(sa)});
    out.push_back({Peer::Bob, std::move(sb)});
    out.push_back({Peer::Alice, results});
    out.push_back({Peer::Bob, std::move(results)});
    result_.outcomes.push_back(std::move(outcomes));
    result_.channel.push_back(rec);
    measured_ = true;

    // The fibres keep drifting until the next window.
    const double len = rec.duration_s;
    const auto sub = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(len / cfg_.drift_substep_s)));
    for (auto& d : drift_) {
      for (std::uint64_t k = 0; k < sub; ++k) d.step(len / static_cast<double>(sub));
    }
  }

  void estimate(std::vector<Outgoing>& out) {
    const Basis meas = result_.channel.back().measurement;
    for (User u : kUsers) {
      const std::size_t ui = index(u);
      const auto& own = *bir_[ui];
      const auto& partner = *bir_[index(other(u))];
      // Privacy: bits only for singles where the partner sent omega and the
      // sender used a non-omega state in the measured basis.
      std::vector<bool> seen(blocks_.size(), false);
      std::vector<int> bit_of_block(blocks_.size(), -1);
      for (const auto& r : *bits_[ui]) {
        if (r.user != u || r.slot >= blocks_.size() || seen[r.slot]) {
          fault("privacy violation: malformed bit reveal from " + std::string(to_string(u)));
        }
        seen[r.slot] = true;
        const bool allowed = is_single(blocks_[r.slot].cls) &&
                             partner[r.slot].intensity == Intensity::Omega &&
                             own[r.slot].intensity != Intensity::Omega &&
                             own[r.slot].basis == meas;
        if (!allowed) {
          fault("privacy violation: " + std::string(to_string(u)) + " revealed the bit of block " +
                std::to_string(r.slot) + " in window " + std::to_string(w_));
        }
        bit_of_block[r.slot] = r.bit;
      }
      result_.reveals += bits_[ui]->size();

      // Slots and singles per (label, intensity) for this user.
      std::array<std::uint64_t, 3> slots{};
      std::array<std::array<std::uint64_t, 3>, 4> singles{};
      std::array<std::array<std::uint64_t, 3>, 4> errors{};
      for (std::size_t blk = 0; blk < blocks_.size(); ++blk) {
        if (partner[blk].intensity != Intensity::Omega) continue;
        if (own[blk].basis != meas || own[blk].intensity == Intensity::Omega) continue;
        const std::size_t ii = index(own[blk].intensity);
        slots[ii] += blocks_[blk].count;
        if (bit_of_block[blk] < 0) continue;
        const int bit = bit_of_block[blk];
        const auto label = static_cast<std::size_t>(bb84_label(meas, bit));
        singles[label][ii] += blocks_[blk].count;
        const OutcomeClass wrong = bit == 0 ? OutcomeClass::SingleV : OutcomeClass::SingleH;
        if (blocks_[blk].cls == wrong) errors[label][ii] += blocks_[blk].count;
      }
      EstimatorWindow ew;
      ew.duration_s = result_.channel.back().duration_s;
      for (int bit = 0; bit < 2; ++bit) {
        const Bb84Label label = bb84_label(meas, bit);
        const auto li = static_cast<std::size_t>(label);
        for (Intensity i : {Intensity::Mu, Intensity::Nu}) {
          auto& ref = ref_[ui][li * 3 + index(i)];
          ref.record(singles[li][index(i)], slots[index(i)]);
          auto& sc = ew.at(label);
          sc.n_err += errors[li][index(i)];
          if (auto e = ref.expected(slots[index(i)])) {
            sc.n_max += static_cast<std::uint64_t>(std::llround(*e));
          }
        }
      }
      for (auto& sc : ew.by_label) sc.n_max = std::max(sc.n_max, sc.n_err);
      const auto est = estimate_theta(ew);
      result_.channel.back().counts[ui] = meas == Basis::Z ? est.counts_z : est.counts_x;
      for (const auto& per_label : singles) {
        for (auto n : per_label) result_.channel.back().recycled[ui] += n;
      }
      wire::MisalignmentAnnouncement m{w_, u, std::nullopt, std::nullopt};
      if (meas == Basis::Z) m.theta_z = est.theta_z;
      else m.theta_x = est.theta_x;
      out.push_back({peer_of(u), m});
    }
    pulses_ = {};
    bir_ = {};
    bits_ = {};
    measured_ = false;
    ++w_;
  }

  SessionConfig cfg_;
  std::uint64_t n_;
  std::uint64_t w_ = 0;
  std::array<DriftProcess, 2> drift_;
  std::array<std::array<ReferenceRate, 12>, 2> ref_;
  std::array<std::optional<std::array<double, 4>>, 2> pulses_;
  std::array<std::optional<std::vector<Reveal>>, 2> bir_;
  std::array<std::optional<std::vector<wire::PolarizationBitReveal>>, 2> bits_;
  std::vector<Block> blocks_;
  bool measured_ = false;
  std::array<bool, 2> ended_{};
  CharlieResult result_;
};

}  // namespace

std::unique_ptr<Node> make_user_node(User user, const SessionConfig& config) {
  return std::make_unique<UserNode>(user, config);
}

std::unique_ptr<Node> make_charlie_node(const SessionConfig& config) {
  return std::make_unique<CharlieNode>(config);
}

const UserResult& user_result(const Node& node) {
  return dynamic_cast<const UserNode&>(node).result();
}

const CharlieResult& charlie_result(const Node& node) {
  return dynamic_cast<const CharlieNode&>(node).result();
}

SiftResult sift(const CharlieResult& charlie, const UserResult& alice, const UserResult& bob) {
  SiftResult s;
  const std::size_t nw = charlie.outcomes.size();
  if (charlie.channel.size() != nw) fault("charlie result is inconsistent");
  for (std::size_t w = 0; w < nw; ++w) {
    const Basis meas = charlie.channel[w].measurement;
    const std::size_t hi = index(meas);
    s.half_duration_s[hi] += charlie.channel[w].duration_s;
    const auto& outcomes = charlie.outcomes[w];
    static const std::vector<std::uint8_t> kNone;
    const auto& sa = w < alice.settings.size() ? alice.settings[w] : kNone;
    const auto& sb = w < bob.settings.size() ? bob.settings[w] : kNone;

    std::vector<bool> revealed(outcomes.size(), false);
    for (const UserResult* u : {&alice, &bob}) {
      if (w >= u->revealed.size()) continue;
      for (auto blk : u->revealed[w]) {
        if (blk < revealed.size()) revealed[blk] = true;
      }
    }

    for (std::size_t blk = 0; blk < outcomes.size(); ++blk) {
      const auto& o = outcomes[blk];
      s.conservation.total += o.count;
      if (blk >= sa.size() || blk >= sb.size()) {
        s.dropped_missing_reveal += o.count;
        s.conservation.discarded += o.count;
        continue;
      }
      const Setting a = setting_from_index(sa[blk]);
      const Setting b = setting_from_index(sb[blk]);
      const bool same_basis = a.basis == b.basis;
      const bool psi = o.cls == OutcomeClass::PsiPlus;
      const bool key = psi && same_basis && a.basis == meas && a.intensity == Intensity::Mu &&
                       b.intensity == Intensity::Mu;
      if (key && revealed[blk]) {
        fault("privacy violation: block " + std::to_string(blk) + " of window " +
              std::to_string(w) + " is both revealed and sifted");
      }
      // Same basis as the projection: anticorrelated bits are correct;
      // conjugate basis: correlated bits are correct.
      const bool error = a.basis == meas ? a.bit == b.bit : a.bit != b.bit;
      if (same_basis) {
        auto& t = s.tallies[hi].at(a.basis, a.intensity, b.intensity);
        t.sent += o.count;
        if (psi) {
          t.coincidences += o.count;
          if (error) t.errors += o.count;
        }
      }
      if (key) {
        s.conservation.key_candidate += o.count;
        s.sifted_bits[hi] += o.count;
        if (error) s.sifted_errors[hi] += o.count;
      } else if (revealed[blk]) {
        s.conservation.recycled += o.count;
        const bool alice_sender = b.intensity == Intensity::Omega;
        s.recycled_singles[alice_sender ? 0 : 1][hi] += o.count;
      } else if (psi && same_basis) {
        s.conservation.decoy_coincidence += o.count;
      } else {
        s.conservation.discarded += o.count;
      }
    }
    ++s.privacy_checked_windows;
  }
  return s;
}

HalfReport analyze_half(const TallySet& tallies, const IntensityTable& table,
                        BoundMethod method, const LpOptions& lp, double f) {
  HalfReport h;
  h.measurement = tallies.measurement();
  h.rate.half = h.measurement;
  if (tallies.at(h.measurement, Intensity::Mu, Intensity::Mu).coincidences == 0) {
    h.note = "no signal coincidences";
    return h;
  }
  const auto gains = gains_from_tallies(tallies);
  try {
    h.bounds = bound_y11_e11(gains, table, method, lp);
  } catch (const BoundsInfeasible& e) {
    h.note = e.what();
    return h;
  }
  h.rate = key_rate(rate_inputs(gains, h.bounds, table, f), h.measurement);
  h.analyzed = true;
  return h;
}

SessionReport assemble_report(const SessionConfig& config, UserResult alice, UserResult bob,
                              CharlieResult charlie) {
  SessionReport r;
  r.config = config;
  r.sifted = sift(charlie, alice, bob);
  r.users = {std::move(alice), std::move(bob)};
  r.charlie = std::move(charlie);
  for (Basis b : kBases) {
    r.halves[index(b)] = analyze_half(r.sifted.tallies[index(b)], config.intensities[0],
                                      config.bound_method, config.lp, config.ec_efficiency);
  }
  return r;
}

SessionReport run_in_process(const SessionConfig& config) {
  config.validate();
  std::array<std::unique_ptr<Node>, 3> nodes{make_user_node(User::Alice, config),
                                             make_user_node(User::Bob, config),
                                             make_charlie_node(config)};
  // links[i][j]: node i's end of the connection to node j.
  std::array<std::array<std::unique_ptr<MemoryLink>, 3>, 3> links;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      auto [a, b] = make_memory_link();
      links[i][j] = std::move(a);
      links[j][i] = std::move(b);
    }
  }
  std::deque<std::pair<std::size_t, std::size_t>> pending;  // (to, from)
  auto route = [&](std::size_t from, std::vector<Outgoing> out) {
    for (auto& o : out) {
      const auto to = static_cast<std::size_t>(o.to);
      links[from][to]->send(o.msg);
      pending.emplace_back(to, from);
    }
  };
  for (std::size_t i = 0; i < 3; ++i) route(i, nodes[i]->start());
  while (!pending.empty()) {
    const auto [to, from] = pending.front();
    pending.pop_front();
    auto r = links[to][from]->next();
    if (!r) fault("in-memory link lost a frame");
    if (const auto* f = std::get_if<wire::DecodeFailure>(&*r)) fault("decode failure: " + f->message);
    route(to, nodes[to]->on_message(static_cast<Peer>(from), std::get<Message>(*r)));
  }
  for (const auto& n : nodes) {
    if (!n->done()) fault("session stalled before every node finished");
  }
  CharlieResult c = charlie_result(*nodes[2]);
  for (std::size_t j = 0; j < 2; ++j) c.bytes_sent += links[2][j]->bytes_sent();
  return assemble_report(config, user_result(*nodes[0]), user_result(*nodes[1]), std::move(c));
}

SessionReport run_session(const SessionConfig& config) {
  return config.mode == RunMode::Networked ? run_networked(config) : run_in_process(config);
}

}  // namespace mdiqkd
