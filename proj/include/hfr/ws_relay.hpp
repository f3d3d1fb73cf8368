#pragma once

#include "hfr/net.hpp"

#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <string>
#include <thread>

namespace hfr {

/// Sec-WebSocket-Accept value for a client key.
std::string websocket_accept_key(const std::string& client_key);

/// WebSocket endpoint that forwards binary payload bytes unchanged to a TCP target and
/// sends everything read from the target back as binary frames. Message boundaries are
/// not preserved in either direction; the protocol framing rides inside the byte stream.
class WsRelay {
 public:
  WsRelay(std::uint16_t listen_port, std::string target_host, std::uint16_t target_port, bool loopback_only = true);
  ~WsRelay();
  WsRelay(const WsRelay&) = delete;
  WsRelay& operator=(const WsRelay&) = delete;

  std::uint16_t port() const { return listener_.port(); }
  void stop();

 private:
  struct Link {
    Socket client;
    Socket upstream;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void run_link(Link& link);

  Listener listener_;
  std::string target_host_;
  std::uint16_t target_port_;
  std::atomic<bool> stopping_{false};
  std::mutex links_mu_;
  std::list<Link> links_;
  std::thread accept_thread_;
};

}  // namespace hfr
