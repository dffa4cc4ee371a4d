#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pamon/session.hpp"

namespace pamon {

// Wire protocol, one JSON object per line in both directions.
//
// client -> server
//   {"type":"create_session","scenario":"phantom_tattoo","seed":7,"request_id":1}
//   {"type":"command","session_id":"s1","kind":"LaserOn","request_id":2}
//   {"type":"command","session_id":"s1","kind":"SetScenario","scenario":"...","request_id":3}
//   {"type":"subscribe","session_id":"s1","after_seq":0}
//   {"type":"list_scenarios","request_id":4}
//
// server -> client; session events carry the session's own seq, replies that
// belong to no session carry session_id null and a per-connection seq.
//   {"type":"session_created","session_id":"s1","seq":1,"scenario":...,"seed":7,...}
//   {"type":"ack","session_id":"s1","seq":2,"request_id":2,"command":"LaserOn",
//    "state":"Running","laser_on":true,"scenario":"phantom_tattoo"}
//   {"type":"state","session_id":"s1","seq":3,"state":"Running","laser_on":true,...}
//   {"type":"telemetry","session_id":"s1","seq":4,"record":{...}}
//   {"type":"error","session_id":"s1","seq":5,"request_id":3,"code":"session_running",
//    "message":"..."}
//   {"type":"scenarios","session_id":null,"seq":1,"request_id":4,"scenarios":[...]}

using EventSink = std::function<void(const std::string& line)>;

struct HostOptions {
  std::optional<std::filesystem::path> record_dir;
  // Real-time mode runs a loop thread; otherwise the owner calls step().
  bool realtime = true;
  double tick_interval = 0.05;  // s of real time per loop iteration
  double time_scale = 1.0;      // simulated wall seconds per real second
};

/// Single writer for one session. Commands go through a queue and are applied
/// by the loop between ticks; subscribers receive copies of every event in
/// seq order.
class SessionHost {
 public:
  SessionHost(std::string id, Scenario scenario, SessionEngine::ScenarioLookup lookup,
              HostOptions opts);
  ~SessionHost();
  SessionHost(const SessionHost&) = delete;
  SessionHost& operator=(const SessionHost&) = delete;

  const std::string& id() const { return id_; }

  void enqueue(ControlCommand cmd, std::optional<nlohmann::json> request_id = {});

  /// Replays history after `after_seq`, then streams live events. Returns a
  /// subscription id for unsubscribe().
  std::uint64_t subscribe(std::uint64_t after_seq, EventSink sink);
  void unsubscribe(std::uint64_t subscription);

  /// Manual mode: apply queued commands, then advance by wall_dt if Running.
  void step(double wall_dt);
  /// Apply queued commands without advancing time.
  void pump();

  std::uint64_t last_seq() const;
  std::vector<std::string> history() const;
  SessionState state() const;
  bool laser_on() const;
  std::size_t pulses() const;
  std::optional<std::filesystem::path> current_record_path() const;

  void stop();

 private:
  struct Pending {
    ControlCommand cmd;
    std::optional<nlohmann::json> request_id;
  };

  void loop();
  void apply_locked(const Pending& p);
  void tick_locked(double wall_dt);
  void emit_locked(nlohmann::ordered_json event);
  nlohmann::ordered_json state_event_locked() const;
  void open_record_locked();
  void close_record_locked();

  std::string id_;
  HostOptions opts_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  SessionEngine engine_;
  std::deque<Pending> queue_;
  std::vector<std::string> history_;
  std::uint64_t seq_ = 0;
  std::map<std::uint64_t, EventSink> subscribers_;
  std::uint64_t next_subscription_ = 1;
  std::unique_ptr<std::ofstream> record_;
  std::unique_ptr<SessionWriter> writer_;
  std::optional<std::filesystem::path> record_path_;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

/// Owns the scenario registry and all session hosts. Transport-agnostic: a
/// connection feeds it request lines and receives reply lines.
class Service {
 public:
  Service(ScenarioRegistry registry, HostOptions opts);
  ~Service();

  /// Throws NotFound for an unknown scenario.
  std::shared_ptr<SessionHost> create_session(const std::string& scenario,
                                              std::optional<std::uint64_t> seed = {});
  std::shared_ptr<SessionHost> find(const std::string& id) const;
  const ScenarioRegistry& registry() const { return registry_; }

  class Connection {
   public:
    Connection(Service& svc, EventSink out) : svc_(svc), out_(std::move(out)) {}
    ~Connection();
    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    /// Handle one request line; replies and subscribed events go to `out`.
    void handle_line(const std::string& line);

   private:
    void reply(nlohmann::ordered_json msg);
    void reply_error(const std::optional<nlohmann::json>& request_id, const std::string& code,
                     const std::string& message);
    void ensure_subscribed(const std::shared_ptr<SessionHost>& host, std::uint64_t after_seq);

    Service& svc_;
    EventSink out_;
    std::mutex mu_;
    std::uint64_t seq_ = 0;
    std::map<std::string, std::pair<std::weak_ptr<SessionHost>, std::uint64_t>> subscriptions_;
  };

 private:
  ScenarioRegistry registry_;
  HostOptions opts_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<SessionHost>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace pamon
