#pragma once

#include "hfr/net.hpp"
#include "hfr/session.hpp"

#include <atomic>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

namespace hfr {

/// TCP front end for a Session. Every connection shares the session; model pushes go
/// to all connected clients.
class Server {
 public:
  // Port 0 binds an ephemeral port.
  Server(Session& session, std::uint16_t port, bool loopback_only = true);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const { return listener_.port(); }
  std::size_t connection_count() const;
  void stop();

 private:
  struct Client {
    std::shared_ptr<Connection> conn;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve_client(Client& client);
  void broadcast(const Message& msg);
  void reap_locked();

  Session& session_;
  Listener listener_;
  std::atomic<bool> stopping_{false};
  mutable std::mutex clients_mu_;
  std::list<Client> clients_;
  std::thread accept_thread_;
};

}  // namespace hfr
