#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "mdiqkd/link.hpp"
#include "mdiqkd/wire.hpp"
#include "random_messages.hpp"

namespace mdiqkd::wire {
namespace {

Message decode_one(FrameDecoder& d) {
  auto r = d.next();
  EXPECT_TRUE(r.has_value());
  EXPECT_TRUE(std::holds_alternative<Message>(*r));
  return std::get<Message>(*r);
}

TEST(Codec, EachVariantRoundTrips) {
  const std::vector<Message> msgs = {
      BsmResult{3, 17, Basis::X, OutcomeClass::SingleV, 42},
      BasisIntensityReveal{3, 17, User::Bob, Basis::Z, Intensity::Omega},
      PolarizationBitReveal{3, 18, User::Alice, 1},
      MisalignmentAnnouncement{4, User::Bob, 0.125, std::nullopt},
      PulseTrain{5, User::Alice, {0.1, -0.2, 0.3, 6.2}},
      SlotAssignment{5, User::Bob, Basis::X, {0, 11, 7}},
      Batch{6, {PolarizationBitReveal{6, 1, User::Bob, 0}, PolarizationBitReveal{6, 2, User::Bob, 1}}},
      SessionEnd{User::Alice, 960}};
  for (const auto& m : msgs) {
    const std::string body = encode_body(m);
    EXPECT_EQ(body.rfind("{\"type\":\"" + std::string(type_name(m)) + "\"", 0), 0u) << body;
    EXPECT_NE(body.find("\"v\":1"), std::string::npos);
    EXPECT_EQ(decode_body(body), m);
  }
}

TEST(Codec, RandomMessagesRoundTrip) {
  std::mt19937_64 rng(1);
  FrameDecoder d;
  for (int i = 0; i < 10000; ++i) {
    const Message m = testing::random_message(rng);
    EXPECT_EQ(decode_body(encode_body(m)), m);
    d.feed(encode_frame(m));
    EXPECT_EQ(decode_one(d), m);
  }
  EXPECT_EQ(d.buffered(), 0u);
}

TEST(Codec, FrameHeaderIsBigEndianLength) {
  const std::string f = encode_frame(SessionEnd{User::Bob, 1});
  const std::uint32_t n = (std::uint32_t(std::uint8_t(f[0])) << 24) |
                          (std::uint32_t(std::uint8_t(f[1])) << 16) |
                          (std::uint32_t(std::uint8_t(f[2])) << 8) | std::uint8_t(f[3]);
  EXPECT_EQ(n, f.size() - 4);
}

TEST(Codec, RejectsBadBodies) {
  auto kind = [](const std::string& body) {
    try {
      decode_body(body);
    } catch (const ProtocolError& e) {
      return e.kind();
    }
    return ErrorKind::OutOfOrder;  // sentinel: no error
  };
  EXPECT_EQ(kind("{\"type\":\"session_end\",\"v\":2,\"user\":\"alice\",\"windows\":1}"),
            ErrorKind::Version);
  EXPECT_EQ(kind("{\"type\":\"teleport\",\"v\":1}"), ErrorKind::UnknownType);
  EXPECT_EQ(kind("{\"type\":\"session_end\",\"v\":1}"), ErrorKind::Malformed);
  EXPECT_EQ(kind("not json"), ErrorKind::Malformed);
}

TEST(FrameDecoder, ByteAtATime) {
  std::mt19937_64 rng(2);
  std::string stream;
  std::vector<Message> sent;
  for (int i = 0; i < 50; ++i) {
    sent.push_back(testing::random_message(rng));
    stream += encode_frame(sent.back());
  }
  FrameDecoder d;
  std::vector<Message> got;
  for (char c : stream) {
    d.feed(&c, 1);
    while (auto r = d.next()) got.push_back(std::get<Message>(*r));
  }
  EXPECT_EQ(got, sent);
}

TEST(FrameDecoder, TruncatedFrameResyncs) {
  const Message a = SessionEnd{User::Alice, 1};
  const Message b = PulseTrain{2, User::Bob, {1, 2, 3, 4}};
  const Message c = BsmResult{9, 1, Basis::Z, OutcomeClass::PsiPlus, 5};
  const std::string fb = encode_frame(b);
  FrameDecoder d;
  d.feed(encode_frame(a) + fb.substr(0, fb.size() / 2) + encode_frame(c) + encode_frame(a));
  EXPECT_EQ(decode_one(d), a);
  std::vector<Message> rest;
  int failures = 0;
  while (auto r = d.next()) {
    if (std::holds_alternative<DecodeFailure>(*r)) {
      ++failures;
      EXPECT_EQ(std::get<DecodeFailure>(*r).kind, ErrorKind::Malformed);
    } else {
      rest.push_back(std::get<Message>(*r));
    }
  }
  EXPECT_EQ(failures, 1);
  EXPECT_EQ(rest, (std::vector<Message>{c, a}));
}

TEST(FrameDecoder, UnknownTypeDroppedWhole) {
  const std::string body = "{\"type\":\"teleport\",\"v\":1,\"x\":[1,2,3]}";
  std::string frame(4, '\0');
  frame[3] = static_cast<char>(body.size());
  FrameDecoder d;
  d.feed(frame + body + encode_frame(SessionEnd{User::Bob, 3}));
  auto r = d.next();
  ASSERT_TRUE(r && std::holds_alternative<DecodeFailure>(*r));
  EXPECT_EQ(std::get<DecodeFailure>(*r).kind, ErrorKind::UnknownType);
  EXPECT_EQ(decode_one(d), Message(SessionEnd{User::Bob, 3}));
  EXPECT_EQ(d.failures(), 1u);
}

TEST(FrameDecoder, GarbageBeforeFrame) {
  FrameDecoder d;
  d.feed(std::string("\x00\x00\x00\x05hello", 9) + encode_frame(SessionEnd{User::Alice, 7}));
  bool saw_failure = false;
  std::optional<Message> msg;
  while (auto r = d.next()) {
    if (std::holds_alternative<DecodeFailure>(*r)) saw_failure = true;
    else msg = std::get<Message>(*r);
  }
  EXPECT_TRUE(saw_failure);
  ASSERT_TRUE(msg);
  EXPECT_EQ(*msg, Message(SessionEnd{User::Alice, 7}));
}

TEST(MemoryLink, DeliversInOrder) {
  auto [a, b] = make_memory_link();
  for (std::uint64_t i = 0; i < 10; ++i) a->send(SessionEnd{User::Alice, i});
  b->send(SessionEnd{User::Bob, 99});
  for (std::uint64_t i = 0; i < 10; ++i) {
    auto r = b->next();
    ASSERT_TRUE(r);
    EXPECT_EQ(std::get<Message>(*r), Message(SessionEnd{User::Alice, i}));
  }
  EXPECT_FALSE(b->next());
  EXPECT_EQ(std::get<Message>(*a->next()), Message(SessionEnd{User::Bob, 99}));
  EXPECT_GT(a->bytes_sent(), 0u);
}

TEST(TcpLink, LoopbackRoundTrip) {
  const auto l = listen_localhost();
  ASSERT_GT(l.port, 0);
  const int c = connect_localhost(l.port);
  const int s = accept_one(l);
  close_fd(l.fd);
  TcpLink client(c), server(s);
  const Message m = SlotAssignment{1, User::Bob, Basis::X, {1, 2, 3}};
  client.send(m);
  client.send_raw(std::string("\x00\x00\x00\x02{}", 6));
  client.send(SessionEnd{User::Bob, 1});
  std::vector<Received> got;
  while (got.size() < 3) {
    while (auto r = server.next()) got.push_back(*r);
    if (got.size() < 3) ASSERT_TRUE(server.fill());
  }
  EXPECT_EQ(std::get<Message>(got[0]), m);
  EXPECT_TRUE(std::holds_alternative<DecodeFailure>(got[1]));
  EXPECT_EQ(std::get<Message>(got[2]), Message(SessionEnd{User::Bob, 1}));
}

}  // namespace
}  // namespace mdiqkd::wire
