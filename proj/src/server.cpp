#include "hfr/server.hpp"

#include <cstdio>

namespace hfr {

namespace {

constexpr auto kPollInterval = std::chrono::milliseconds(200);

ErrorMsg protocol_error_message(const ProtocolError& e) {
  return ErrorMsg{kErrorBadRequest, e.what()};
}

}  // namespace

Server::Server(Session& session, std::uint16_t port, bool loopback_only)
    : session_(session), listener_(port, loopback_only) {
  session_.set_push([this](const Message& msg) { broadcast(msg); });
  accept_thread_ = std::thread([this] { accept_loop(); });
}

Server::~Server() { stop(); }

void Server::stop() {
  if (stopping_.exchange(true)) return;
  session_.set_push({});
  listener_.shutdown();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::list<Client> clients;
  {
    std::lock_guard lock(clients_mu_);
    for (auto& c : clients_) c.conn->shutdown();
    clients.splice(clients.end(), clients_);
  }
  for (auto& c : clients) {
    if (c.thread.joinable()) c.thread.join();
  }
}

std::size_t Server::connection_count() const {
  std::lock_guard lock(clients_mu_);
  std::size_t n = 0;
  for (const auto& c : clients_) n += c.done ? 0 : 1;
  return n;
}

void Server::reap_locked() {
  for (auto it = clients_.begin(); it != clients_.end();) {
    if (it->done) {
      if (it->thread.joinable()) it->thread.join();
      it = clients_.erase(it);
    } else {
      ++it;
    }
  }
}

void Server::accept_loop() {
  while (!stopping_) {
    std::optional<Socket> sock;
    try {
      sock = listener_.accept(kPollInterval);
    } catch (const TransportError&) {
      if (stopping_) return;
      continue;
    }
    if (!sock) continue;
    std::lock_guard lock(clients_mu_);
    if (stopping_) return;
    reap_locked();
    auto& client = clients_.emplace_back();
    client.conn = std::make_shared<Connection>(std::move(*sock));
    client.thread = std::thread([this, &client] { serve_client(client); });
  }
}

void Server::broadcast(const Message& msg) {
  std::vector<std::shared_ptr<Connection>> targets;
  {
    std::lock_guard lock(clients_mu_);
    for (auto& c : clients_) {
      if (!c.done) targets.push_back(c.conn);
    }
  }
  for (auto& conn : targets) {
    try {
      conn->send(msg);
    } catch (const TransportError&) {
      conn->shutdown();  // its reader notices and exits
    }
  }
}

void Server::serve_client(Client& client) {
  Connection& conn = *client.conn;
  while (!stopping_) {
    Message msg;
    try {
      msg = conn.receive(kPollInterval);
    } catch (const TimeoutError&) {
      continue;
    } catch (const ProtocolError& e) {
      // Framing is lost after a bad header, so report and drop the connection.
      try {
        conn.send(protocol_error_message(e));
      } catch (const TransportError&) {
      }
      break;
    } catch (const TransportError&) {
      break;
    }

    try {
      if (auto* settings = std::get_if<RenderSettingsMsg>(&msg)) {
        session_.handle_settings_change(*settings, [&](const SettingsAckMsg& ack) { conn.send(ack); });
      } else if (auto* req = std::get_if<PoseRequestMsg>(&msg)) {
        conn.send(session_.handle_pose_request(*req));
      } else {
        conn.send(ErrorMsg{kErrorBadRequest, "unexpected message type from client"});
      }
    } catch (const ServerError& e) {
      try {
        conn.send(ErrorMsg{e.code, e.what()});
      } catch (const TransportError&) {
        break;
      }
    } catch (const TransportError&) {
      break;
    } catch (const std::exception& e) {
      try {
        conn.send(ErrorMsg{kErrorInternal, e.what()});
      } catch (const TransportError&) {
        break;
      }
    }
  }
  conn.shutdown();
  client.done = true;
}

}  // namespace hfr
