#include "mdiqkd/link.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <system_error>
#include <thread>

namespace mdiqkd {

void MemoryLink::send(const wire::Message& m) { send_raw(wire::encode_frame(m)); }

void MemoryLink::send_raw(std::string bytes) {
  bytes_sent_ += bytes.size();
  (is_a_ ? pipe_->to_b : pipe_->to_a).push_back(std::move(bytes));
}

std::optional<Received> MemoryLink::next() {
  auto& inbox = is_a_ ? pipe_->to_a : pipe_->to_b;
  while (true) {
    if (auto r = decoder_.next()) return r;
    if (inbox.empty()) return std::nullopt;
    decoder_.feed(inbox.front());
    inbox.pop_front();
  }
}

std::pair<std::unique_ptr<MemoryLink>, std::unique_ptr<MemoryLink>> make_memory_link() {
  auto pipe = std::make_shared<MemoryPipe>();
  return {std::make_unique<MemoryLink>(pipe, true), std::make_unique<MemoryLink>(pipe, false)};
}

namespace {

[[noreturn]] void throw_errno(const char* what) {
  throw std::system_error(errno, std::generic_category(), what);
}

}  // namespace

TcpLink::TcpLink(int fd) : fd_(fd) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

TcpLink::~TcpLink() { close_fd(fd_); }

void TcpLink::send(const wire::Message& m) { send_raw(wire::encode_frame(m)); }

void TcpLink::send_raw(std::string_view bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("send");
    }
    off += static_cast<std::size_t>(n);
  }
  bytes_sent_ += bytes.size();
}

bool TcpLink::fill() {
  char buf[1 << 16];
  while (true) {
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("recv");
    }
    if (n == 0) return false;
    decoder_.feed(buf, static_cast<std::size_t>(n));
    return true;
  }
}

std::optional<Received> TcpLink::next() { return decoder_.next(); }

Listener listen_localhost(std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw_errno("socket");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    close_fd(fd);
    throw_errno("bind");
  }
  if (::listen(fd, 4) < 0) {
    close_fd(fd);
    throw_errno("listen");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return {fd, ntohs(addr.sin_port)};
}

int accept_one(const Listener& l) {
  while (true) {
    const int fd = ::accept(l.fd, nullptr, nullptr);
    if (fd >= 0) return fd;
    if (errno != EINTR) throw_errno("accept");
  }
}

int connect_localhost(std::uint16_t port, int attempts) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  for (int i = 0; i < attempts; ++i) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) return fd;
    const int err = errno;
    close_fd(fd);
    if (err != ECONNREFUSED && err != EINTR) {
      errno = err;
      throw_errno("connect");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  errno = ECONNREFUSED;
  throw_errno("connect");
}

void close_fd(int fd) {
  if (fd >= 0) ::close(fd);
}

}  // namespace mdiqkd
