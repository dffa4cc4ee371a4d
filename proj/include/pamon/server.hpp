#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include "pamon/service.hpp"

namespace pamon {

struct ListenAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8765;

  /// "host:port", ":port" or "port". Throws ConfigError.
  static ListenAddress parse(const std::string& text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

struct ServiceConfig {
  ListenAddress listen;
  std::string registry;    // empty: built-ins only
  std::string record_dir;  // empty: no recording
  HostOptions host;
};

/// Thrown by parse_service_config for --help; what() is the help text.
struct HelpRequested : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flags --listen, --registry, --record-dir, --time-scale, --tick-interval.
/// The first three fall back to PAMON_LISTEN, PAMON_REGISTRY and
/// PAMON_RECORD_DIR; a flag always wins over its variable. Throws ConfigError.
ServiceConfig parse_service_config(int argc, const char* const* argv);

/// Serves the line protocol over TCP. A connection whose first line starts
/// with "GET " is treated as a WebSocket upgrade; each text frame then carries
/// one message.
class TcpServer {
 public:
  TcpServer(Service& service, ListenAddress addr);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  /// Actual bound port (useful with port 0).
  std::uint16_t port() const { return port_; }

  /// Accept loop; returns after stop().
  void run();
  void stop();

 private:
  struct Client;
  void serve(std::shared_ptr<Client> c);

  Service& service_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::list<std::shared_ptr<Client>> clients_;
  std::list<std::thread> threads_;
};

/// Sec-WebSocket-Accept value for a handshake key.
std::string websocket_accept(const std::string& key);

}  // namespace pamon
