#include "pamon/service.hpp"

#include <chrono>

#include "pamon/errors.hpp"

namespace pamon {

using nlohmann::json;
using nlohmann::ordered_json;

SessionHost::SessionHost(std::string id, Scenario scenario, SessionEngine::ScenarioLookup lookup,
                         HostOptions opts)
    : id_(std::move(id)), opts_(std::move(opts)), engine_(id_, std::move(scenario), std::move(lookup)) {
  {
    std::lock_guard lk(mu_);
    open_record_locked();
    ordered_json ev;
    ev["type"] = "session_created";
    ev["scenario"] = engine_.scenario().name;
    ev["seed"] = engine_.seed();
    ev["state"] = to_string(engine_.state());
    ev["laser_on"] = engine_.laser_on();
    ev["pulse_period"] = engine_.scenario().laser.pulse_period();
    emit_locked(std::move(ev));
  }
  if (opts_.realtime) thread_ = std::thread([this] { loop(); });
}

SessionHost::~SessionHost() {
  stop();
  std::lock_guard lk(mu_);
  close_record_locked();
}

void SessionHost::stop() {
  if (stopping_.exchange(true)) return;
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void SessionHost::enqueue(ControlCommand cmd, std::optional<json> request_id) {
  {
    std::lock_guard lk(mu_);
    queue_.push_back({std::move(cmd), std::move(request_id)});
  }
  cv_.notify_all();
}

std::uint64_t SessionHost::subscribe(std::uint64_t after_seq, EventSink sink) {
  std::lock_guard lk(mu_);
  // history_[i] has seq i + 1
  for (std::uint64_t s = after_seq; s < history_.size(); ++s) sink(history_[s]);
  const std::uint64_t id = next_subscription_++;
  subscribers_.emplace(id, std::move(sink));
  return id;
}

void SessionHost::unsubscribe(std::uint64_t subscription) {
  std::lock_guard lk(mu_);
  subscribers_.erase(subscription);
}

void SessionHost::pump() {
  std::lock_guard lk(mu_);
  while (!queue_.empty()) {
    Pending p = std::move(queue_.front());
    queue_.pop_front();
    apply_locked(p);
  }
}

void SessionHost::step(double wall_dt) {
  std::lock_guard lk(mu_);
  while (!queue_.empty()) {
    Pending p = std::move(queue_.front());
    queue_.pop_front();
    apply_locked(p);
  }
  if (engine_.state() == SessionState::Running) tick_locked(wall_dt);
}

void SessionHost::loop() {
  using clock = std::chrono::steady_clock;
  const auto interval = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(opts_.tick_interval));
  auto last = clock::now();
  std::unique_lock lk(mu_);
  while (!stopping_) {
    cv_.wait_until(lk, last + interval, [&] { return stopping_ || !queue_.empty(); });
    if (stopping_) break;
    // Time elapsed up to now belongs to the state before any queued command.
    const auto now = clock::now();
    const double dt = std::chrono::duration<double>(now - last).count() * opts_.time_scale;
    last = now;
    if (engine_.state() == SessionState::Running) tick_locked(dt);
    while (!queue_.empty()) {
      Pending p = std::move(queue_.front());
      queue_.pop_front();
      apply_locked(p);
    }
  }
}

void SessionHost::apply_locked(const Pending& p) {
  const SessionState before_state = engine_.state();
  const bool before_laser = engine_.laser_on();
  const std::uint64_t before_epoch = engine_.epoch();
  try {
    const Acknowledgment ack = engine_.handle_control(p.cmd);
    ordered_json ev;
    ev["type"] = "ack";
    ev["request_id"] = p.request_id ? *p.request_id : json(nullptr);
    ev["command"] = to_string(p.cmd.kind);
    ev["state"] = to_string(ack.state);
    ev["laser_on"] = ack.laser_on;
    ev["scenario"] = ack.scenario;
    emit_locked(std::move(ev));
  } catch (const StateError& e) {
    ordered_json ev;
    ev["type"] = "error";
    ev["request_id"] = p.request_id ? *p.request_id : json(nullptr);
    ev["command"] = to_string(p.cmd.kind);
    ev["code"] = e.code();
    ev["message"] = e.what();
    emit_locked(std::move(ev));
    return;
  }

  if (engine_.epoch() != before_epoch) {
    close_record_locked();
    open_record_locked();
  } else if (engine_.state() == SessionState::Stopped && before_state != SessionState::Stopped) {
    close_record_locked();
  }
  if (engine_.state() != before_state || engine_.laser_on() != before_laser ||
      engine_.epoch() != before_epoch)
    emit_locked(state_event_locked());
}

void SessionHost::tick_locked(double wall_dt) {
  for (const auto& r : engine_.tick(wall_dt)) {
    if (writer_) writer_->write(r);
    ordered_json ev;
    ev["type"] = "telemetry";
    ev["record"] = to_json(r);
    emit_locked(std::move(ev));
  }
  if (writer_) writer_->flush();
}

ordered_json SessionHost::state_event_locked() const {
  ordered_json ev;
  ev["type"] = "state";
  ev["state"] = to_string(engine_.state());
  ev["laser_on"] = engine_.laser_on();
  ev["scenario"] = engine_.scenario().name;
  ev["epoch"] = engine_.epoch();
  ev["pulses"] = engine_.pulses();
  ev["irradiation_time"] = engine_.tissue().elapsed_irradiation;
  return ev;
}

void SessionHost::emit_locked(ordered_json event) {
  // Put session_id and seq first so every line leads with its identity.
  ordered_json out;
  out["type"] = event["type"];
  out["session_id"] = id_;
  out["seq"] = ++seq_;
  for (auto& [k, v] : event.items())
    if (k != "type") out[k] = v;
  history_.push_back(out.dump());
  for (auto& [_, sink] : subscribers_) sink(history_.back());
}

void SessionHost::open_record_locked() {
  if (!opts_.record_dir) return;
  std::filesystem::create_directories(*opts_.record_dir);
  const std::uint64_t epoch = engine_.epoch();
  const std::string name =
      epoch == 0 ? id_ + ".pamon" : id_ + "." + std::to_string(epoch) + ".pamon";
  record_path_ = *opts_.record_dir / name;
  record_ = std::make_unique<std::ofstream>(*record_path_, std::ios::binary | std::ios::trunc);
  if (!*record_) throw ConfigError("cannot write session file " + record_path_->string());
  writer_ = std::make_unique<SessionWriter>(*record_, engine_.header());
  writer_->flush();
}

void SessionHost::close_record_locked() {
  if (!writer_) return;
  writer_->flush();
  writer_.reset();
  record_->close();
  record_.reset();
}

std::uint64_t SessionHost::last_seq() const {
  std::lock_guard lk(mu_);
  return seq_;
}

std::vector<std::string> SessionHost::history() const {
  std::lock_guard lk(mu_);
  return history_;
}

SessionState SessionHost::state() const {
  std::lock_guard lk(mu_);
  return engine_.state();
}

bool SessionHost::laser_on() const {
  std::lock_guard lk(mu_);
  return engine_.laser_on();
}

std::size_t SessionHost::pulses() const {
  std::lock_guard lk(mu_);
  return engine_.pulses();
}

std::optional<std::filesystem::path> SessionHost::current_record_path() const {
  std::lock_guard lk(mu_);
  return record_path_;
}

Service::Service(ScenarioRegistry registry, HostOptions opts)
    : registry_(std::move(registry)), opts_(std::move(opts)) {}

Service::~Service() {
  std::lock_guard lk(mu_);
  for (auto& [_, h] : sessions_) h->stop();
}

std::shared_ptr<SessionHost> Service::create_session(const std::string& scenario,
                                                     std::optional<std::uint64_t> seed) {
  Scenario sc = registry_.get(scenario);
  if (seed) sc.seed = *seed;
  std::lock_guard lk(mu_);
  const std::string id = "s" + std::to_string(next_id_++);
  auto lookup = [this](const std::string& name) { return registry_.get(name); };
  auto host = std::make_shared<SessionHost>(id, std::move(sc), lookup, opts_);
  sessions_.emplace(id, host);
  return host;
}

std::shared_ptr<SessionHost> Service::find(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Service::Connection::~Connection() {
  std::lock_guard lk(mu_);
  for (auto& [_, sub] : subscriptions_)
    if (auto h = sub.first.lock()) h->unsubscribe(sub.second);
}

void Service::Connection::reply(ordered_json msg) {
  ordered_json out;
  out["type"] = msg["type"];
  out["session_id"] = nullptr;
  {
    std::lock_guard lk(mu_);
    out["seq"] = ++seq_;
  }
  for (auto& [k, v] : msg.items())
    if (k != "type") out[k] = v;
  out_(out.dump());
}

void Service::Connection::reply_error(const std::optional<json>& request_id,
                                      const std::string& code, const std::string& message) {
  ordered_json e;
  e["type"] = "error";
  e["request_id"] = request_id ? *request_id : json(nullptr);
  e["code"] = code;
  e["message"] = message;
  reply(std::move(e));
}

void Service::Connection::ensure_subscribed(const std::shared_ptr<SessionHost>& host,
                                            std::uint64_t after_seq) {
  std::lock_guard lk(mu_);
  auto it = subscriptions_.find(host->id());
  if (it != subscriptions_.end()) {
    if (auto h = it->second.first.lock()) h->unsubscribe(it->second.second);
    subscriptions_.erase(it);
  }
  const std::uint64_t sub = host->subscribe(after_seq, out_);
  subscriptions_[host->id()] = {host, sub};
}

void Service::Connection::handle_line(const std::string& line) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::parse_error& e) {
    reply_error(std::nullopt, "bad_message", std::string("invalid JSON: ") + e.what());
    return;
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    reply_error(std::nullopt, "bad_message", "message must be an object with a string \"type\"");
    return;
  }
  std::optional<json> request_id;
  if (msg.contains("request_id")) request_id = msg["request_id"];
  const std::string type = msg["type"];

  try {
    if (type == "list_scenarios") {
      ordered_json r;
      r["type"] = "scenarios";
      r["request_id"] = request_id ? *request_id : json(nullptr);
      json list = json::array();
      for (const auto& n : svc_.registry().names()) {
        const Scenario& s = svc_.registry().get(n);
        list.push_back({{"name", s.name}, {"description", s.description}, {"seed", s.seed}});
      }
      r["scenarios"] = list;
      reply(std::move(r));
    } else if (type == "create_session") {
      const std::string name = msg.value("scenario", std::string("phantom_tattoo"));
      std::optional<std::uint64_t> seed;
      if (msg.contains("seed")) seed = msg["seed"].get<std::uint64_t>();
      std::shared_ptr<SessionHost> host;
      try {
        host = svc_.create_session(name, seed);
      } catch (const NotFound& e) {
        reply_error(request_id, "not_found", e.what());
        return;
      }
      ordered_json r;
      r["type"] = "created";
      r["request_id"] = request_id ? *request_id : json(nullptr);
      r["created_session"] = host->id();
      reply(std::move(r));
      ensure_subscribed(host, 0);
    } else if (type == "subscribe" || type == "command") {
      const std::string id = msg.at("session_id").get<std::string>();
      auto host = svc_.find(id);
      if (!host) {
        reply_error(request_id, "not_found", "unknown session '" + id + "'");
        return;
      }
      if (type == "subscribe") {
        ensure_subscribed(host, msg.value("after_seq", std::uint64_t{0}));
        return;
      }
      ControlCommand cmd;
      cmd.kind = command_kind_from_string(msg.at("kind").get<std::string>());
      if (msg.contains("scenario") && msg["scenario"].is_string())
        cmd.scenario = msg["scenario"].get<std::string>();
      bool subscribed;
      {
        std::lock_guard lk(mu_);
        subscribed = subscriptions_.contains(id);
      }
      if (!subscribed) ensure_subscribed(host, host->last_seq());
      host->enqueue(std::move(cmd), request_id);
    } else {
      reply_error(request_id, "bad_message", "unknown message type '" + type + "'");
    }
  } catch (const json::exception& e) {
    reply_error(request_id, "bad_message", e.what());
  } catch (const InvalidArgument& e) {
    reply_error(request_id, "bad_message", e.what());
  }
}

}  // namespace pamon
