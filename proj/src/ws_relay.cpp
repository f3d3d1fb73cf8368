#include "hfr/ws_relay.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <poll.h>

namespace hfr {

namespace {

constexpr auto kPollInterval = std::chrono::milliseconds(200);
constexpr std::size_t kMaxHandshakeBytes = 16 * 1024;

enum Opcode : std::uint8_t { kContinuation = 0, kText = 1, kBinary = 2, kClose = 8, kPing = 9, kPong = 10 };

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Reads the HTTP upgrade request; any bytes after the header block are returned in `rest`.
std::string read_request(Socket& sock, std::vector<std::uint8_t>& rest) {
  std::string data;
  std::uint8_t buf[4096];
  while (true) {
    const auto end = data.find("\r\n\r\n");
    if (end != std::string::npos) {
      rest.assign(data.begin() + static_cast<std::ptrdiff_t>(end + 4), data.end());
      return data.substr(0, end);
    }
    if (data.size() > kMaxHandshakeBytes) throw TransportError("handshake too large");
    const std::size_t n = sock.receive_some(buf, sizeof(buf), std::chrono::seconds(10));
    if (n == 0) throw TransportError("closed during handshake");
    data.append(reinterpret_cast<const char*>(buf), n);
  }
}

void send_text(Socket& sock, const std::string& text) {
  sock.send_all(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void send_frame(Socket& sock, std::uint8_t opcode, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out;
  out.reserve(payload.size() + 10);
  out.push_back(static_cast<std::uint8_t>(0x80 | opcode));
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<std::uint8_t>(n));
  } else if (n <= 0xffff) {
    out.push_back(126);
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
  } else {
    out.push_back(127);
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(n) >> (8 * i)));
  }
  out.insert(out.end(), payload.begin(), payload.end());
  sock.send_all(out);
}

// Client-to-server frame parser. Returns false when the client asked to close.
class FrameReader {
 public:
  // Consumes buffered bytes; forwards data payloads and answers control frames.
  bool process(Socket& client, Socket& upstream) {
    while (true) {
      if (buf_.size() < 2) return true;
      const std::uint8_t b0 = buf_[0];
      const std::uint8_t b1 = buf_[1];
      if (!(b1 & 0x80)) throw TransportError("unmasked client frame");
      std::size_t pos = 2;
      std::uint64_t len = b1 & 0x7f;
      if (len == 126) {
        if (buf_.size() < 4) return true;
        len = (std::uint64_t{buf_[2]} << 8) | buf_[3];
        pos = 4;
      } else if (len == 127) {
        if (buf_.size() < 10) return true;
        len = 0;
        for (int i = 0; i < 8; ++i) len = (len << 8) | buf_[2 + i];
        pos = 10;
      }
      if (len > (std::uint64_t{1} << 31)) throw TransportError("websocket frame too large");
      if (buf_.size() < pos + 4 + len) return true;
      const std::uint8_t* mask = &buf_[pos];
      std::vector<std::uint8_t> payload(buf_.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                                        buf_.begin() + static_cast<std::ptrdiff_t>(pos + 4 + len));
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] ^= mask[i % 4];
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos + 4 + len));

      switch (b0 & 0x0f) {
        case kContinuation:
        case kText:
        case kBinary:
          upstream.send_all(payload);
          break;
        case kPing:
          send_frame(client, kPong, payload);
          break;
        case kPong:
          break;
        case kClose:
          send_frame(client, kClose, payload);
          return false;
        default:
          throw TransportError("unknown websocket opcode");
      }
    }
  }

  void feed(const std::uint8_t* data, std::size_t n) { buf_.insert(buf_.end(), data, data + n); }

 private:
  std::vector<std::uint8_t> buf_;
};

}  // namespace

std::string websocket_accept_key(const std::string& client_key) {
  const std::string joined = client_key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(joined.data()), joined.size(), digest);
  unsigned char encoded[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(encoded, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<const char*>(encoded), static_cast<std::size_t>(n));
}

WsRelay::WsRelay(std::uint16_t listen_port, std::string target_host, std::uint16_t target_port, bool loopback_only)
    : listener_(listen_port, loopback_only), target_host_(std::move(target_host)), target_port_(target_port) {
  accept_thread_ = std::thread([this] { accept_loop(); });
}

WsRelay::~WsRelay() { stop(); }

void WsRelay::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::lock_guard lock(links_mu_);
  for (auto& l : links_) {
    l.client.shutdown();
    l.upstream.shutdown();
  }
  for (auto& l : links_) {
    if (l.thread.joinable()) l.thread.join();
  }
  links_.clear();
}

void WsRelay::accept_loop() {
  while (!stopping_) {
    std::optional<Socket> sock;
    try {
      sock = listener_.accept(kPollInterval);
    } catch (const TransportError&) {
      continue;
    }
    if (!sock) continue;
    std::lock_guard lock(links_mu_);
    if (stopping_) return;
    for (auto it = links_.begin(); it != links_.end();) {
      if (it->done) {
        it->thread.join();
        it = links_.erase(it);
      } else {
        ++it;
      }
    }
    auto& link = links_.emplace_back();
    link.client = std::move(*sock);
    link.thread = std::thread([this, &link] { run_link(link); });
  }
}

void WsRelay::run_link(Link& link) {
  try {
    std::vector<std::uint8_t> rest;
    const std::string request = read_request(link.client, rest);
    std::string key;
    bool upgrade = false;
    std::size_t line_start = request.find("\r\n");
    while (line_start != std::string::npos) {
      const std::size_t next = request.find("\r\n", line_start + 2);
      const std::string line = request.substr(line_start + 2, next == std::string::npos ? std::string::npos : next - line_start - 2);
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        const std::string name = lower(trim(line.substr(0, colon)));
        const std::string value = trim(line.substr(colon + 1));
        if (name == "sec-websocket-key") key = value;
        if (name == "upgrade" && lower(value) == "websocket") upgrade = true;
      }
      line_start = next;
    }
    if (!upgrade || key.empty()) {
      send_text(link.client, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
      link.done = true;
      return;
    }
    try {
      link.upstream = connect_tcp(target_host_, target_port_);
    } catch (const TransportError&) {
      send_text(link.client, "HTTP/1.1 502 Bad Gateway\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
      link.done = true;
      return;
    }
    send_text(link.client, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                           "Sec-WebSocket-Accept: " + websocket_accept_key(key) + "\r\n\r\n");

    FrameReader reader;
    reader.feed(rest.data(), rest.size());
    bool open = reader.process(link.client, link.upstream);
    std::vector<std::uint8_t> buf(64 * 1024);
    while (open && !stopping_) {
      pollfd fds[2] = {{link.client.fd(), POLLIN, 0}, {link.upstream.fd(), POLLIN, 0}};
      const int r = ::poll(fds, 2, static_cast<int>(kPollInterval.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        break;
      }
      if (r == 0) continue;
      if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
        const std::size_t n = link.client.receive_some(buf.data(), buf.size(), kPollInterval);
        if (n == 0) break;
        reader.feed(buf.data(), n);
        open = reader.process(link.client, link.upstream);
      }
      if (open && (fds[1].revents & (POLLIN | POLLHUP | POLLERR))) {
        const std::size_t n = link.upstream.receive_some(buf.data(), buf.size(), kPollInterval);
        if (n == 0) {
          send_frame(link.client, kClose, {});
          break;
        }
        send_frame(link.client, kBinary, std::span<const std::uint8_t>(buf.data(), n));
      }
    }
  } catch (const TransportError&) {
  }
  link.client.shutdown();
  link.upstream.shutdown();
  link.done = true;
}

}  // namespace hfr
