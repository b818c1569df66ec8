#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include "mdiqkd/wire.hpp"

namespace mdiqkd {

using Received = std::variant<wire::Message, wire::DecodeFailure>;

/// Ordered, reliable message stream to one peer. Every message is framed
/// and parsed by the wire codec, whatever carries the bytes.
class Link {
 public:
  virtual ~Link() = default;
  virtual void send(const wire::Message& m) = 0;
  // A decoded message or failure if one is buffered; never blocks.
  virtual std::optional<Received> next() = 0;
  std::uint64_t bytes_sent() const { return bytes_sent_; }

 protected:
  std::uint64_t bytes_sent_ = 0;
};

/// Both directions of an in-memory connection.
class MemoryPipe {
 public:
  std::deque<std::string> to_a;
  std::deque<std::string> to_b;
};

class MemoryLink : public Link {
 public:
  MemoryLink(std::shared_ptr<MemoryPipe> pipe, bool is_a) : pipe_(std::move(pipe)), is_a_(is_a) {}
  void send(const wire::Message& m) override;
  std::optional<Received> next() override;
  // Injects raw bytes toward the peer (used to exercise framing faults).
  void send_raw(std::string bytes);

 private:
  std::shared_ptr<MemoryPipe> pipe_;
  bool is_a_;
  wire::FrameDecoder decoder_;
};

std::pair<std::unique_ptr<MemoryLink>, std::unique_ptr<MemoryLink>> make_memory_link();

class TcpLink : public Link {
 public:
  explicit TcpLink(int fd);
  ~TcpLink() override;
  TcpLink(const TcpLink&) = delete;
  TcpLink& operator=(const TcpLink&) = delete;

  void send(const wire::Message& m) override;
  std::optional<Received> next() override;
  void send_raw(std::string_view bytes);

  int fd() const { return fd_; }
  std::size_t buffered() const { return decoder_.buffered(); }
  // Reads whatever is available (blocking until at least one byte or EOF).
  // Returns false on end of stream.
  bool fill();

 private:
  int fd_;
  wire::FrameDecoder decoder_;
};

/// Listening socket on 127.0.0.1; port 0 picks a free port.
struct Listener {
  int fd = -1;
  std::uint16_t port = 0;
};
Listener listen_localhost(std::uint16_t port = 0);
int accept_one(const Listener& l);
int connect_localhost(std::uint16_t port, int attempts = 200);
void close_fd(int fd);

}  // namespace mdiqkd
