#include "pamon/server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <cstring>
#include <deque>

#include <CLI11.hpp>

#include "pamon/errors.hpp"

namespace pamon {

ListenAddress ListenAddress::parse(const std::string& text) {
  ListenAddress a;
  std::string port_text = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    if (colon > 0) a.host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const unsigned long p = std::stoul(port_text, &used);
    if (used != port_text.size() || p > 65535) throw std::out_of_range("port");
    a.port = static_cast<std::uint16_t>(p);
  } catch (const std::exception&) {
    throw ConfigError("invalid listen address '" + text + "'");
  }
  return a;
}

ServiceConfig parse_service_config(int argc, const char* const* argv) {
  CLI::App app{"Photoacoustic monitoring session service", "pamon_service"};
  ServiceConfig cfg;
  std::string listen = cfg.listen.str();
  app.add_option("--listen", listen, "host:port to listen on")
      ->envname("PAMON_LISTEN")
      ->capture_default_str();
  app.add_option("--registry", cfg.registry, "Scenario registry JSON")->envname("PAMON_REGISTRY");
  app.add_option("--record-dir", cfg.record_dir, "Directory for session files")
      ->envname("PAMON_RECORD_DIR");
  app.add_option("--time-scale", cfg.host.time_scale, "Simulated seconds per real second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--tick-interval", cfg.host.tick_interval, "Loop period in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  cfg.listen = ListenAddress::parse(listen);
  if (!cfg.record_dir.empty()) cfg.host.record_dir = cfg.record_dir;
  return cfg;
}

std::string websocket_accept(const std::string& key) {
  static constexpr char kGuid[] = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  const std::string in = key + kGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(in.data()), in.size(), digest);
  unsigned char b64[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(b64, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<char*>(b64), static_cast<std::size_t>(n));
}

namespace {

bool send_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w <= 0) return false;
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

std::string ws_text_frame(const std::string& payload) {
  std::string f;
  f.push_back(static_cast<char>(0x81));
  const std::size_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(n));
  } else if (n < 65536) {
    f.push_back(static_cast<char>(126));
    f.push_back(static_cast<char>((n >> 8) & 0xff));
    f.push_back(static_cast<char>(n & 0xff));
  } else {
    f.push_back(static_cast<char>(127));
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  }
  return f + payload;
}

}  // namespace

struct TcpServer::Client {
  int fd = -1;
  bool websocket = false;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> outbox;
  bool closed = false;
  std::thread writer;

  // Queue one message, framed for the connection's current mode.
  void push(const std::string& line) {
    {
      std::lock_guard lk(mu);
      if (closed) return;
      outbox.push_back(websocket ? ws_text_frame(line) : line + '\n');
    }
    cv.notify_one();
  }

  void push_raw(std::string bytes, bool then_websocket = false) {
    {
      std::lock_guard lk(mu);
      if (closed) return;
      outbox.push_back(std::move(bytes));
      if (then_websocket) websocket = true;
    }
    cv.notify_one();
  }

  void close() {
    {
      std::lock_guard lk(mu);
      if (closed) return;
      closed = true;
    }
    cv.notify_all();
    ::shutdown(fd, SHUT_RDWR);
  }

  void write_loop() {
    std::unique_lock lk(mu);
    for (;;) {
      cv.wait(lk, [&] { return closed || !outbox.empty(); });
      if (outbox.empty()) return;
      const std::string wire = std::move(outbox.front());
      outbox.pop_front();
      lk.unlock();
      const bool ok = send_all(fd, wire.data(), wire.size());
      lk.lock();
      if (!ok) {
        closed = true;
        outbox.clear();
        return;
      }
    }
  }
};

TcpServer::TcpServer(Service& service, ListenAddress addr) : service_(service) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(addr.port);
  if (::getaddrinfo(addr.host.empty() ? nullptr : addr.host.c_str(), port.c_str(), &hints, &res) != 0)
    throw ConfigError("cannot resolve listen address " + addr.str());
  for (addrinfo* p = res; p; p = p->ai_next) {
    const int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, p->ai_addr, p->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
      listen_fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (listen_fd_ < 0) throw ConfigError("cannot listen on " + addr.str() + ": " + std::strerror(errno));

  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&ss), &len);
  port_ = ss.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port)
                                   : ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
}

TcpServer::~TcpServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  std::list<std::thread> threads;
  {
    std::lock_guard lk(mu_);
    for (auto& c : clients_) c->close();
    threads.swap(threads_);
  }
  for (auto& t : threads)
    if (t.joinable()) t.join();
}

void TcpServer::run() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (stopping_) break;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    auto c = std::make_shared<Client>();
    c->fd = fd;
    std::lock_guard lk(mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    clients_.push_back(c);
    threads_.emplace_back([this, c] { serve(c); });
  }
}

void TcpServer::serve(std::shared_ptr<Client> c) {
  c->writer = std::thread([c] { c->write_loop(); });
  {
    Service::Connection conn(service_, [c](const std::string& line) { c->push(line); });
    std::string buf;
    char chunk[4096];
    bool first = true;

    auto read_more = [&]() -> bool {
      const ssize_t n = ::recv(c->fd, chunk, sizeof chunk, 0);
      if (n <= 0) return false;
      buf.append(chunk, static_cast<std::size_t>(n));
      return true;
    };

    for (bool alive = true; alive;) {
      if (!c->websocket) {
        const auto nl = buf.find('\n');
        if (nl == std::string::npos) {
          alive = read_more();
          continue;
        }
        std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first && line.rfind("GET ", 0) == 0) {
          // HTTP upgrade: collect headers up to the blank line.
          std::string key;
          for (;;) {
            const auto e = buf.find('\n');
            if (e == std::string::npos) {
              if (!read_more()) goto done;
              continue;
            }
            std::string h = buf.substr(0, e);
            buf.erase(0, e + 1);
            if (!h.empty() && h.back() == '\r') h.pop_back();
            if (h.empty()) break;
            const auto colon = h.find(':');
            if (colon == std::string::npos) continue;
            std::string name = h.substr(0, colon);
            std::transform(name.begin(), name.end(), name.begin(),
                           [](unsigned char ch) { return std::tolower(ch); });
            if (name == "sec-websocket-key") {
              key = h.substr(colon + 1);
              key.erase(0, key.find_first_not_of(" \t"));
              key.erase(key.find_last_not_of(" \t") + 1);
            }
          }
          const std::string resp = key.empty()
                                       ? std::string("HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n")
                                       : "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\n"
                                         "Connection: Upgrade\r\nSec-WebSocket-Accept: " +
                                             websocket_accept(key) + "\r\n\r\n";
          c->push_raw(resp, !key.empty());
          if (key.empty()) break;
          first = false;
          continue;
        }
        first = false;
        if (!line.empty()) conn.handle_line(line);
        continue;
      }

      // WebSocket frame.
      if (buf.size() < 2) {
        alive = read_more();
        continue;
      }
      const auto b0 = static_cast<unsigned char>(buf[0]);
      const auto b1 = static_cast<unsigned char>(buf[1]);
      const unsigned opcode = b0 & 0x0f;
      const bool masked = b1 & 0x80;
      std::uint64_t len = b1 & 0x7f;
      std::size_t hdr = 2;
      if (len == 126) hdr += 2;
      if (len == 127) hdr += 8;
      if (masked) hdr += 4;
      if (buf.size() < hdr) {
        alive = read_more();
        continue;
      }
      if (len == 126) {
        len = (std::uint64_t(static_cast<unsigned char>(buf[2])) << 8) | static_cast<unsigned char>(buf[3]);
      } else if (len == 127) {
        len = 0;
        for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<unsigned char>(buf[2 + i]);
      }
      if (len > (64u << 20)) break;
      if (buf.size() < hdr + len) {
        alive = read_more();
        continue;
      }
      std::string payload = buf.substr(hdr, len);
      if (masked) {
        const char* mask = buf.data() + hdr - 4;
        for (std::size_t i = 0; i < payload.size(); ++i) payload[i] ^= mask[i % 4];
      }
      buf.erase(0, hdr + len);
      if (opcode == 0x8) break;  // close
      if (opcode == 0x9) {       // ping -> pong
        std::string pong;
        pong.push_back(static_cast<char>(0x8A));
        pong.push_back(static_cast<char>(std::min<std::size_t>(payload.size(), 125)));
        pong += payload.substr(0, 125);
        c->push_raw(std::move(pong));
        continue;
      }
      if (opcode == 0x1 || opcode == 0x2) {
        // A frame may carry several newline-separated messages.
        std::size_t pos = 0;
        while (pos <= payload.size()) {
          auto e = payload.find('\n', pos);
          if (e == std::string::npos) e = payload.size();
          std::string line = payload.substr(pos, e - pos);
          if (!line.empty()) conn.handle_line(line);
          pos = e + 1;
        }
      }
    }
  }  // Connection unsubscribes here, before the outbox closes.
done:
  c->close();
  c->writer.join();
  ::close(c->fd);
  std::lock_guard lk(mu_);
  clients_.remove(c);
}

}  // namespace pamon
