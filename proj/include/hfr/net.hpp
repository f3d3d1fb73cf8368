#pragma once

#include "hfr/protocol.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

namespace hfr {

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimeoutError : TransportError {
  using TransportError::TransportError;
};

/// ERROR message returned by the peer.
struct ServerError : std::runtime_error {
  ServerError(std::uint16_t c, const std::string& what) : std::runtime_error(what), code(c) {}
  std::uint16_t code;
};

/// Owning POSIX socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close();
  // Stops blocked reads and writes on other threads without releasing the descriptor.
  void shutdown();

  void send_all(std::span<const std::uint8_t> bytes);
  // Reads up to `max` bytes; returns 0 on orderly close. Throws TimeoutError on timeout.
  std::size_t receive_some(std::uint8_t* buf, std::size_t max, std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
};

class Listener {
 public:
  // Binds to 127.0.0.1 (or any address) on `port`; port 0 picks an ephemeral port.
  explicit Listener(std::uint16_t port, bool loopback_only = true);
  std::uint16_t port() const { return port_; }
  // Returns nullopt when the timeout elapses or the listener is shut down.
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void shutdown() { socket_.shutdown(); }

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

Socket connect_tcp(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout = std::chrono::seconds(5));

/// Message-level connection: whole-message writes are serialized, reads go through one decoder.
class Connection {
 public:
  explicit Connection(Socket socket) : socket_(std::move(socket)) {}

  void send(const Message& msg);
  // Throws TransportError on close or timeout, ProtocolError on malformed input.
  Message receive(std::chrono::milliseconds timeout);
  void shutdown() { socket_.shutdown(); }
  Socket& socket() { return socket_; }

 private:
  Socket socket_;
  std::mutex write_mu_;
  StreamDecoder decoder_;
};

/// Sends `req` and waits for the matching frame. Frames for older ids are dropped; other
/// unsolicited messages go to `on_other` when given.
FoveatedFrame request_frame(Connection& conn, const PoseRequestMsg& req,
                            std::chrono::milliseconds timeout = std::chrono::seconds(60),
                            const std::function<void(const Message&)>& on_other = {});

}  // namespace hfr
