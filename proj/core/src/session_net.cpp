#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <iostream>
#include <nlohmann/json.hpp>

#include "mdiqkd/session.hpp"

namespace mdiqkd {

using json = nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string serialize(const UserResult& r) {
  json j;
  j["user"] = std::string(to_string(r.user));
  json trace = json::array();
  for (const auto& t : r.trace) {
    trace.push_back({t.window, t.time_s, index(t.measurement), opt(t.theta_z), opt(t.theta_x),
                     t.triggered, t.squeezer, t.step_rad, t.undone_rad, t.retardances});
  }
  j["trace"] = std::move(trace);
  j["settings"] = r.settings;
  j["revealed"] = r.revealed;
  return j.dump();
}

UserResult deserialize_user(std::string_view s) {
  const json j = json::parse(s);
  UserResult r;
  r.user = parse_user(j.at("user").get<std::string>()).value();
  for (const auto& t : j.at("trace")) {
    UserWindowRecord w;
    w.window = t.at(0).get<std::uint64_t>();
    w.time_s = t.at(1).get<double>();
    w.measurement = static_cast<Basis>(t.at(2).get<int>());
    w.theta_z = opt_from(t.at(3));
    w.theta_x = opt_from(t.at(4));
    w.triggered = t.at(5).get<bool>();
    w.squeezer = t.at(6).get<std::size_t>();
    w.step_rad = t.at(7).get<double>();
    w.undone_rad = t.at(8).get<double>();
    w.retardances = t.at(9).get<std::array<double, 4>>();
    r.trace.push_back(w);
  }
  r.settings = j.at("settings").get<std::vector<std::vector<std::uint8_t>>>();
  r.revealed = j.at("revealed").get<std::vector<std::vector<std::uint32_t>>>();
  return r;
}

std::string serialize(const CharlieResult& r) {
  json j;
  json channel = json::array();
  for (const auto& c : r.channel) {
    json row = {c.window, index(c.measurement), c.duration_s, c.slots};
    for (std::size_t u = 0; u < 2; ++u) {
      row.push_back(c.true_angles[u].theta_z);
      row.push_back(c.true_angles[u].theta_x);
      row.push_back(c.counts[u].n_err);
      row.push_back(c.counts[u].n_max);
      row.push_back(c.recycled[u]);
    }
    channel.push_back(std::move(row));
  }
  j["channel"] = std::move(channel);
  json outcomes = json::array();
  for (const auto& w : r.outcomes) {
    json flat = json::array();
    for (const auto& b : w) {
      flat.push_back(static_cast<int>(b.cls));
      flat.push_back(b.count);
    }
    outcomes.push_back(std::move(flat));
  }
  j["outcomes"] = std::move(outcomes);
  j["reveals"] = r.reveals;
  j["bytes_sent"] = r.bytes_sent;
  return j.dump();
}

CharlieResult deserialize_charlie(std::string_view s) {
  const json j = json::parse(s);
  CharlieResult r;
  for (const auto& row : j.at("channel")) {
    ChannelWindowRecord c;
    c.window = row.at(0).get<std::uint64_t>();
    c.measurement = static_cast<Basis>(row.at(1).get<int>());
    c.duration_s = row.at(2).get<double>();
    c.slots = row.at(3).get<std::uint64_t>();
    for (std::size_t u = 0; u < 2; ++u) {
      const std::size_t o = 4 + 5 * u;
      c.true_angles[u].theta_z = row.at(o).get<double>();
      c.true_angles[u].theta_x = row.at(o + 1).get<double>();
      c.counts[u].n_err = row.at(o + 2).get<std::uint64_t>();
      c.counts[u].n_max = row.at(o + 3).get<std::uint64_t>();
      c.recycled[u] = row.at(o + 4).get<std::uint64_t>();
    }
    r.channel.push_back(c);
  }
  for (const auto& flat : j.at("outcomes")) {
    std::vector<BlockOutcome> w;
    for (std::size_t i = 0; i + 1 < flat.size(); i += 2) {
      w.push_back({static_cast<OutcomeClass>(flat[i].get<int>()), flat[i + 1].get<std::uint64_t>()});
    }
    r.outcomes.push_back(std::move(w));
  }
  r.reveals = j.at("reveals").get<std::uint64_t>();
  r.bytes_sent = j.at("bytes_sent").get<std::uint64_t>();
  return r;
}

void run_node(Node& node, const std::array<TcpLink*, 3>& links_in) {
  std::array<TcpLink*, 3> links = links_in;
  std::array<bool, 3> open{links[0] != nullptr, links[1] != nullptr, links[2] != nullptr};
  auto send_all = [&](std::vector<Node::Outgoing> out) {
    for (auto& o : out) {
      TcpLink* l = links[static_cast<std::size_t>(o.to)];
      if (!l) throw ProtocolFault("no link to destination peer");
      l->send(o.msg);
    }
  };
  send_all(node.start());
  while (!node.done()) {
    bool progressed = false;
    for (std::size_t p = 0; p < 3; ++p) {
      if (!links[p]) continue;
      while (auto r = links[p]->next()) {
        if (const auto* f = std::get_if<wire::DecodeFailure>(&*r)) {
          throw ProtocolFault("decode failure from peer: " + f->message);
        }
        send_all(node.on_message(static_cast<Peer>(p), std::get<wire::Message>(*r)));
        progressed = true;
      }
    }
    if (progressed || node.done()) continue;
    if (std::none_of(open.begin(), open.end(), [](bool b) { return b; })) {
      throw ProtocolFault("all peers closed before the session ended");
    }
    std::vector<pollfd> fds;
    std::vector<std::size_t> which;
    for (std::size_t p = 0; p < 3; ++p) {
      if (!links[p] || !open[p]) continue;
      fds.push_back({links[p]->fd(), POLLIN, 0});
      which.push_back(p);
    }
    if (::poll(fds.data(), fds.size(), -1) < 0) {
      if (errno == EINTR) continue;
      throw ProtocolFault(std::string("poll: ") + std::strerror(errno));
    }
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const std::size_t p = which[i];
      if (!links[p]->fill()) {
        open[p] = false;
        if (links[p]->buffered() > 0 || node.expects_from(static_cast<Peer>(p))) {
          throw ProtocolFault("peer closed the connection before the session ended");
        }
      }
    }
  }
}

namespace {

struct Child {
  pid_t pid = -1;
  int read_fd = -1;
};

void write_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t n = ::write(fd, s.data() + off, s.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return;
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string read_all(int fd) {
  std::string out;
  char buf[1 << 16];
  while (true) {
    const ssize_t n = ::read(fd, buf, sizeof(buf));
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

// Runs `body` in a child process; its return value comes back through a
// pipe prefixed with "OK\n", or "ERR\n" plus the message on failure.
template <class F>
Child spawn(F body, const std::vector<int>& close_in_child) {
  int p[2];
  if (::pipe(p) != 0) throw std::runtime_error("pipe failed");
  std::cout.flush();
  std::cerr.flush();
  const pid_t pid = ::fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    ::close(p[0]);
    for (int fd : close_in_child) close_fd(fd);
    int code = 0;
    try {
      write_all(p[1], "OK\n" + body());
    } catch (const std::exception& e) {
      write_all(p[1], std::string("ERR\n") + e.what());
      code = 3;
    }
    ::close(p[1]);
    ::_exit(code);
  }
  ::close(p[1]);
  return {pid, p[0]};
}

}  // namespace

SessionReport run_networked(const SessionConfig& config) {
  config.validate();
  const Listener charlie_for_alice = listen_localhost();
  const Listener charlie_for_bob = listen_localhost();
  const Listener alice_for_bob = listen_localhost();
  const std::vector<int> listeners{charlie_for_alice.fd, charlie_for_bob.fd, alice_for_bob.fd};

  auto except = [&](std::initializer_list<int> keep) {
    std::vector<int> out;
    for (int fd : listeners) {
      if (std::find(keep.begin(), keep.end(), fd) == keep.end()) out.push_back(fd);
    }
    return out;
  };

  std::vector<Child> kids;
  kids.push_back(spawn(
      [&] {
        TcpLink a(accept_one(charlie_for_alice));
        TcpLink b(accept_one(charlie_for_bob));
        auto node = make_charlie_node(config);
        run_node(*node, {&a, &b, nullptr});
        CharlieResult r = charlie_result(*node);
        r.bytes_sent = a.bytes_sent() + b.bytes_sent();
        return serialize(r);
      },
      except({charlie_for_alice.fd, charlie_for_bob.fd})));
  kids.push_back(spawn(
      [&] {
        TcpLink c(connect_localhost(charlie_for_alice.port));
        TcpLink b(accept_one(alice_for_bob));
        auto node = make_user_node(User::Alice, config);
        run_node(*node, {nullptr, &b, &c});
        return serialize(user_result(*node));
      },
      except({alice_for_bob.fd})));
  kids.push_back(spawn(
      [&] {
        TcpLink c(connect_localhost(charlie_for_bob.port));
        TcpLink a(connect_localhost(alice_for_bob.port));
        auto node = make_user_node(User::Bob, config);
        run_node(*node, {&a, nullptr, &c});
        return serialize(user_result(*node));
      },
      except({})));
  for (int fd : listeners) close_fd(fd);

  std::array<std::string, 3> payload;
  std::string failure;
  for (std::size_t i = 0; i < 3; ++i) {
    payload[i] = read_all(kids[i].read_fd);
    ::close(kids[i].read_fd);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    int status = 0;
    ::waitpid(kids[i].pid, &status, 0);
    static const char* names[] = {"charlie", "alice", "bob"};
    if (payload[i].rfind("OK\n", 0) != 0) {
      const std::string why = payload[i].rfind("ERR\n", 0) == 0 ? payload[i].substr(4)
                                                                : "exited without a result";
      if (failure.empty()) failure = std::string(names[i]) + ": " + why;
    }
  }
  if (!failure.empty()) throw ProtocolFault("networked session failed: " + failure);
  return assemble_report(config, deserialize_user(std::string_view(payload[1]).substr(3)),
                         deserialize_user(std::string_view(payload[2]).substr(3)),
                         deserialize_charlie(std::string_view(payload[0]).substr(3)));
}

}  // namespace mdiqkd
