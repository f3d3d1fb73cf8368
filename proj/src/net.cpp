#include "hfr/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace hfr {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = std::exchange(o.fd_, -1);
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::size_t Socket::receive_some(std::uint8_t* buf, std::size_t max, std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  while (true) {
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("poll"));
    }
    if (r == 0) throw TimeoutError("receive timed out");
    break;
  }
  while (true) {
    const ssize_t n = ::recv(fd_, buf, max, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("recv"));
    }
    return static_cast<std::size_t>(n);
  }
}

Listener::Listener(std::uint16_t port, bool loopback_only) {
  socket_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
  if (!socket_.valid()) throw TransportError(errno_text("socket"));
  int one = 1;
  ::setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(loopback_only ? INADDR_LOOPBACK : INADDR_ANY);
  if (::bind(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) throw TransportError(errno_text("bind"));
  if (::listen(socket_.fd(), 16) != 0) throw TransportError(errno_text("listen"));
  socklen_t len = sizeof(addr);
  ::getsockname(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  pollfd p{socket_.fd(), POLLIN, 0};
  const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (r <= 0 || (p.revents & (POLLERR | POLLHUP | POLLNVAL))) return std::nullopt;
  const int fd = ::accept(socket_.fd(), nullptr, nullptr);
  if (fd < 0) return std::nullopt;
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(fd);
}

Socket connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr) {
    throw TransportError("cannot resolve " + host);
  }
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) {
    ::freeaddrinfo(res);
    throw TransportError(errno_text("socket"));
  }
  const int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0 && errno != EINPROGRESS) throw TransportError(errno_text("connect"));
  if (rc != 0) {
    pollfd p{s.fd(), POLLOUT, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) throw TransportError("connect timed out");
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw TransportError(std::string("connect: ") + std::strerror(err));
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

void Connection::send(const Message& msg) {
  const auto bytes = encode(msg);
  std::lock_guard lock(write_mu_);
  socket_.send_all(bytes);
}

Message Connection::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::uint8_t buf[64 * 1024];
  while (true) {
    if (auto msg = decoder_.next()) return std::move(*msg);
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TimeoutError("receive timed out");
    const std::size_t n = socket_.receive_some(buf, sizeof(buf), left);
    if (n == 0) {
      throw TransportError(decoder_.buffered() > 0 ? "connection closed mid-message" : "connection closed");
    }
    decoder_.feed(std::span<const std::uint8_t>(buf, n));
  }
}

FoveatedFrame request_frame(Connection& conn, const PoseRequestMsg& req, std::chrono::milliseconds timeout,
                            const std::function<void(const Message&)>& on_other) {
  conn.send(req);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TimeoutError("no response for frame " + std::to_string(req.frame_id));
    Message msg = conn.receive(left);
    if (auto* frame = std::get_if<FoveatedFrameMsg>(&msg)) {
      if (frame->frame_id == req.frame_id) return to_frame(*frame);
      continue;  // superseded request
    }
    if (auto* err = std::get_if<ErrorMsg>(&msg)) throw ServerError(err->code, err->message);
    if (on_other) on_other(msg);
  }
}

}  // namespace hfr
