#include <doctest.h>

#include "protocol_samples.hpp"

#include "hfr/net.hpp"
#include "hfr/protocol.hpp"

#include <chrono>
#include <thread>

using namespace hfr;
using namespace hfr::testing;

namespace {

std::vector<std::uint8_t> header(std::uint32_t length, std::uint8_t type) {
  return {static_cast<std::uint8_t>(length), static_cast<std::uint8_t>(length >> 8),
          static_cast<std::uint8_t>(length >> 16), static_cast<std::uint8_t>(length >> 24), type};
}

ProtocolErrorKind decode_error(std::span<const std::uint8_t> bytes) {
  try {
    decode(bytes);
  } catch (const ProtocolError& e) {
    return e.kind;
  }
  FAIL("expected a ProtocolError");
  return ProtocolErrorKind::Malformed;
}

}  // namespace

TEST_CASE("every message type round trips") {
  for (const auto& m : sample_messages(1)) {
    const auto bytes = encode(m);
    CAPTURE(static_cast<int>(message_type(m)));
    CHECK(bytes[4] == static_cast<std::uint8_t>(message_type(m)));
    const std::uint32_t length = bytes[0] | bytes[1] << 8 | bytes[2] << 16 | static_cast<std::uint32_t>(bytes[3]) << 24;
    CHECK(length + kFrameHeaderBytes == bytes.size());
    const auto d = decode(bytes);
    REQUIRE(d.has_value());
    CHECK(d->consumed == bytes.size());
    CHECK(d->message == m);
    CHECK(encode(d->message) == bytes);
  }
}

TEST_CASE("pose request layout is little-endian and fixed") {
  PoseRequestMsg req;
  req.frame_id = 0x0807060504030201ull;
  const auto bytes = encode(req);
  CHECK(bytes.size() == kFrameHeaderBytes + 8 + 64 + 4 + 4 + 2 + 8);
  for (int i = 0; i < 8; ++i) CHECK(bytes[kFrameHeaderBytes + i] == i + 1);
}

TEST_CASE("concatenated messages decode in order") {
  const auto msgs = sample_messages(2);
  const auto stream = concat_encoded(msgs, nullptr);
  std::size_t offset = 0;
  for (const auto& m : msgs) {
    const auto d = decode(std::span<const std::uint8_t>(stream).subspan(offset));
    REQUIRE(d.has_value());
    CHECK(d->message == m);
    offset += d->consumed;
  }
  CHECK(offset == stream.size());
}

TEST_CASE("decoding from any message boundary yields the remaining messages") {
  std::vector<Message> msgs;
  for (std::uint64_t s = 0; s < 4; ++s) {
    for (auto& m : sample_messages(s)) msgs.push_back(std::move(m));
  }
  std::vector<std::size_t> boundaries;
  const auto stream = concat_encoded(msgs, &boundaries);
  for (std::size_t b = 0; b < boundaries.size(); ++b) {
    StreamDecoder dec;
    dec.feed(std::span<const std::uint8_t>(stream).subspan(boundaries[b]));
    std::vector<Message> got;
    while (auto m = dec.next()) got.push_back(std::move(*m));
    CHECK(std::equal(got.begin(), got.end(), msgs.begin() + static_cast<std::ptrdiff_t>(b), msgs.end()));
    CHECK(got.size() == msgs.size() - b);
    CHECK(dec.buffered() == 0);
  }
}

TEST_CASE("stream decoder handles byte-at-a-time delivery") {
  const auto msgs = sample_messages(3);
  const auto stream = concat_encoded(msgs, nullptr);
  StreamDecoder dec;
  std::vector<Message> got;
  for (std::uint8_t byte : stream) {
    dec.feed(std::span<const std::uint8_t>(&byte, 1));
    while (auto m = dec.next()) got.push_back(std::move(*m));
  }
  CHECK(got == msgs);
}

TEST_CASE("truncation asks for more bytes") {
  for (const auto& m : sample_messages(4)) {
    const auto bytes = encode(m);
    for (std::size_t n = 0; n < bytes.size(); ++n) {
      CHECK_FALSE(decode(std::span<const std::uint8_t>(bytes).first(n)).has_value());
    }
  }
}

TEST_CASE("fault injection produces distinct protocol errors") {
  SUBCASE("declared length 300 MB") {
    CHECK(decode_error(header(300u * 1024u * 1024u, 1)) == ProtocolErrorKind::Oversize);
  }
  SUBCASE("length just over the limit") {
    CHECK(decode_error(header(kMaxPayloadBytes + 1, 3)) == ProtocolErrorKind::Oversize);
  }
  SUBCASE("unknown type") {
    for (std::uint8_t t : {0, 6, 7, 100, 254}) CHECK(decode_error(header(0, t)) == ProtocolErrorKind::UnknownType);
  }
  SUBCASE("payload shorter than its layout") {
    auto bytes = header(4, 1);
    bytes.insert(bytes.end(), {1, 2, 3, 4});
    CHECK(decode_error(bytes) == ProtocolErrorKind::Malformed);
  }
  SUBCASE("trailing payload bytes") {
    auto bytes = encode(SettingsAckMsg{1, 2});
    bytes.push_back(0);
    bytes[0] += 1;
    CHECK(decode_error(bytes) == ProtocolErrorKind::Malformed);
  }
  SUBCASE("frame buffers disagree with resolution") {
    FoveatedFrameMsg f = std::get<FoveatedFrameMsg>(sample_messages(5)[1]);
    f.depth.pop_back();
    CHECK_THROWS_AS(encode(f), ProtocolError);
  }
  SUBCASE("stream decoder surfaces the error") {
    StreamDecoder dec;
    dec.feed(header(0, 9));
    CHECK_THROWS_AS(dec.next(), ProtocolError);
  }
}

TEST_CASE("a 512x512 frame fits in 2.1 MB") {
  FoveatedFrameMsg f;
  f.width = f.height = 512;
  f.rgba.assign(512 * 512 * 4, 0);
  f.depth.assign(512 * 512, 1.0f);
  CHECK(encode(f).size() <= 2100000);
}

TEST_CASE("wire conversions") {
  Mat4 pose = look_at(Vec3(1, 2, 3), Vec3::Zero());
  CHECK((from_wire_pose(to_wire_pose(pose)) - pose).cwiseAbs().maxCoeff() < 1e-6);

  const std::vector<ClipPlane> planes{ClipPlane{Vec3(0, 1, 0), -2.0}};
  const auto back = to_clip_planes(to_wire_clip_planes(planes));
  REQUIRE(back.size() == 1);
  CHECK(back[0].normal.isApprox(planes[0].normal));
  CHECK(back[0].offset == doctest::Approx(-2.0));

  PoseRequestMsg req;
  req.pose = to_wire_pose(pose);
  req.width = 64;
  req.height = 48;
  req.fov_deg = 30.0f;
  const Camera cam = request_camera(req);
  CHECK(cam.width == 64);
  CHECK(cam.height == 48);
  CHECK(cam.fov_deg == doctest::Approx(30.0));

  FoveatedFrameMsg fm = std::get<FoveatedFrameMsg>(sample_messages(6)[1]);
  fm.pose = to_wire_pose(look_at(Vec3(0, 0, 4), Vec3::Zero()));  // rigid; arbitrary matrices get re-orthonormalized
  CHECK(to_message(to_frame(fm)) == fm);
}

TEST_CASE("request_frame over loopback") {
  using namespace std::chrono_literals;
  PoseRequestMsg req;
  req.frame_id = 77;
  req.width = 4;
  req.height = 3;
  auto reply = [](std::uint64_t id) {
    FoveatedFrameMsg f;
    f.frame_id = id;
    f.width = 4;
    f.height = 3;
    f.rgba.assign(48, 200);
    f.depth.assign(12, 5.0f);
    return f;
  };

  SUBCASE("echoed frame id; stale responses and pushes are handled") {
    StubPeer peer([&](Socket& s) {
      const auto got = std::get<PoseRequestMsg>(read_message(s));
      s.send_all(encode(reply(got.frame_id - 1)));  // superseded
      s.send_all(encode(SplatModelMsg{{1, 2, 3}}));
      s.send_all(encode(reply(got.frame_id)));
    });
    Connection conn(connect_tcp("127.0.0.1", peer.port()));
    int others = 0;
    const FoveatedFrame f = request_frame(conn, req, 10s, [&](const Message& m) {
      others += std::holds_alternative<SplatModelMsg>(m);
    });
    CHECK(f.frame_id == 77);
    CHECK(f.camera.width == 4);
    CHECK(others == 1);
  }
  SUBCASE("server ERROR is surfaced with its code") {
    StubPeer peer([&](Socket& s) {
      read_message(s);
      s.send_all(encode(ErrorMsg{kErrorStale, "no settings"}));
    });
    Connection conn(connect_tcp("127.0.0.1", peer.port()));
    try {
      request_frame(conn, req, 10s);
      FAIL("expected a ServerError");
    } catch (const ServerError& e) {
      CHECK(e.code == kErrorStale);
    }
  }
  SUBCASE("server closes mid-frame") {
    StubPeer peer([&](Socket& s) {
      read_message(s);
      auto bytes = encode(reply(77));
      bytes.resize(bytes.size() / 2);
      s.send_all(bytes);
    });
    Connection conn(connect_tcp("127.0.0.1", peer.port()));
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(request_frame(conn, req, 2s), TransportError);
    CHECK(std::chrono::steady_clock::now() - t0 < 2500ms);
  }
  SUBCASE("silent server times out") {
    StubPeer peer([&](Socket& s) {
      read_message(s);
      std::this_thread::sleep_for(1500ms);
    });
    Connection conn(connect_tcp("127.0.0.1", peer.port()));
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(request_frame(conn, req, 300ms), TimeoutError);
    CHECK(std::chrono::steady_clock::now() - t0 < 1200ms);
  }
  SUBCASE("connection refused") {
    std::uint16_t port;
    {
      Listener l(0);
      port = l.port();
    }
    CHECK_THROWS_AS(connect_tcp("127.0.0.1", port, 1s), TransportError);
  }
}
