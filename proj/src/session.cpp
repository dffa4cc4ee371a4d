#include "pamon/session.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "pamon/errors.hpp"

namespace pamon {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Tolerance for laser-on time reaching a pulse boundary; absorbs the rounding
// of wall_dt sums so that e.g. five 0.2 s ticks fire five pulses.
constexpr double kPulseEpsilon = 1e-9;

Stage stage_from_letter(std::string_view s) {
  if (s == "A") return Stage::Scattering;
  if (s == "B") return Stage::Oscillation;
  if (s == "C") return Stage::Scorched;
  throw InvalidArgument("unknown ground-truth stage '" + std::string(s) + "'");
}

AlarmReason alarm_reason_from_string(std::string_view s) {
  if (s == "None") return AlarmReason::None;
  if (s == "ScorchOnset") return AlarmReason::ScorchOnset;
  if (s == "ProlongedScorch") return AlarmReason::ProlongedScorch;
  throw InvalidArgument("unknown alarm reason '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Idle: return "Idle";
    case SessionState::Running: return "Running";
    case SessionState::Stopped: return "Stopped";
  }
  return "?";
}

std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::LaserOn: return "LaserOn";
    case CommandKind::LaserOff: return "LaserOff";
    case CommandKind::SetScenario: return "SetScenario";
    case CommandKind::Reset: return "Reset";
    case CommandKind::EndSession: return "EndSession";
  }
  return "?";
}

CommandKind command_kind_from_string(std::string_view s) {
  if (s == "LaserOn") return CommandKind::LaserOn;
  if (s == "LaserOff") return CommandKind::LaserOff;
  if (s == "SetScenario") return CommandKind::SetScenario;
  if (s == "Reset") return CommandKind::Reset;
  if (s == "EndSession") return CommandKind::EndSession;
  throw InvalidArgument("unknown command '" + std::string(s) + "'");
}

ordered_json to_json(const TelemetryRecord& r) {
  ordered_json j;
  j["session_id"] = r.session_id;
  j["pulse_index"] = r.pulse_index;
  j["irradiation_time"] = r.irradiation_time;
  j["wall_time"] = r.wall_time;
  j["amplitude"] = r.amplitude;
  j["low_confidence"] = r.low_confidence;
  j["stage"] = to_string(r.stage);
  j["alarm_active"] = r.alarm_active;
  j["alarm_reason"] = to_string(r.alarm_reason);
  if (r.ground_truth_stage) j["ground_truth_stage"] = stage_letter(*r.ground_truth_stage);
  return j;
}

TelemetryRecord telemetry_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("telemetry record must be a JSON object");
  TelemetryRecord r;
  r.session_id = j.at("session_id").get<std::string>();
  r.pulse_index = j.at("pulse_index").get<std::uint64_t>();
  r.irradiation_time = j.at("irradiation_time").get<double>();
  r.wall_time = j.value("wall_time", 0.0);
  r.amplitude = j.at("amplitude").get<double>();
  r.low_confidence = j.value("low_confidence", false);
  r.stage = detected_stage_from_string(j.at("stage").get<std::string>());
  r.alarm_active = j.at("alarm_active").get<bool>();
  r.alarm_reason = alarm_reason_from_string(j.value("alarm_reason", std::string("None")));
  if (auto it = j.find("ground_truth_stage"); it != j.end() && !it->is_null())
    r.ground_truth_stage = stage_from_letter(it->get<std::string>());
  return r;
}

std::string to_line(const TelemetryRecord& r) { return to_json(r).dump(); }

SessionEngine::SessionEngine(std::string id, Scenario scenario, ScenarioLookup lookup)
    : id_(std::move(id)), scenario_(std::move(scenario)), lookup_(std::move(lookup)) {
  scenario_.validate();
  restart();
}

void SessionEngine::restart() {
  state_ = SessionState::Idle;
  laser_on_ = false;
  tissue_ = TissueState::initial(scenario_.kinetics, scenario_.absorber_depth, scenario_.seed);
  monitor_ = std::make_unique<Monitor>(scenario_.monitor);
  wall_time_ = on_time_ = segment_wall_start_ = segment_on_start_ = 0.0;
  pulses_ = 0;
}

Acknowledgment SessionEngine::handle_control(const ControlCommand& cmd) {
  switch (cmd.kind) {
    case CommandKind::LaserOn:
      if (state_ == SessionState::Stopped)
        throw StateError("session_stopped", "LaserOn: session has ended");
      state_ = SessionState::Running;
      if (!laser_on_) {
        laser_on_ = true;
        segment_wall_start_ = wall_time_;
        segment_on_start_ = on_time_;
      }
      break;
    case CommandKind::LaserOff:
      if (state_ == SessionState::Stopped)
        throw StateError("session_stopped", "LaserOff: session has ended");
      if (state_ != SessionState::Running)
        throw StateError("invalid_transition", "LaserOff: session is not running");
      laser_on_ = false;
      break;
    case CommandKind::SetScenario: {
      if (state_ == SessionState::Running)
        throw StateError("session_running", "SetScenario: not allowed while running");
      if (!cmd.scenario || cmd.scenario->empty())
        throw StateError("missing_scenario", "SetScenario: no scenario name given");
      if (!lookup_) throw StateError("unknown_scenario", "SetScenario: no scenario registry");
      Scenario next;
      try {
        next = lookup_(*cmd.scenario);
      } catch (const NotFound& e) {
        throw StateError("unknown_scenario", e.what());
      }
      next.seed = scenario_.seed;  // the seed belongs to the session
      next.validate();
      scenario_ = std::move(next);
      ++epoch_;
      restart();
      break;
    }
    case CommandKind::Reset:
      ++epoch_;
      restart();
      break;
    case CommandKind::EndSession:
      if (state_ == SessionState::Stopped)
        throw StateError("session_stopped", "EndSession: session has already ended");
      state_ = SessionState::Stopped;
      laser_on_ = false;
      break;
  }
  return {state_, laser_on_, scenario_.name};
}

TelemetryRecord SessionEngine::fire_pulse() {
  const Scenario& sc = scenario_;
  const double period = sc.laser.pulse_period();
  tissue_ = advance(tissue_, period, true, sc.kinetics);
  ++pulses_;

  AcquisitionConfig acq = sc.acquisition;
  acq.seed = sc.seed;
  const Trace trace = acquire(tissue_, sc.optics, sc.laser, sc.transducer, acq, pulses_,
                              sc.static_absorbers);
  const PeakResult peak = extract_peak(trace, sc.wavelet, sc.selector);
  const StageEstimate& est = monitor_->append(peak.sample);

  TelemetryRecord r;
  r.session_id = id_;
  r.pulse_index = pulses_;
  r.irradiation_time = tissue_.elapsed_irradiation;
  r.wall_time = segment_wall_start_ + (static_cast<double>(pulses_) * period - segment_on_start_);
  r.amplitude = peak.sample.amplitude;
  r.low_confidence = peak.low_confidence;
  r.stage = est.stage;
  r.alarm_active = monitor_->alarm().active;
  r.alarm_reason = monitor_->alarm().reason;
  if (sc.synthetic) r.ground_truth_stage = ground_truth_stage(tissue_, sc.kinetics);
  return r;
}

std::vector<TelemetryRecord> SessionEngine::tick(double wall_dt) {
  if (state_ != SessionState::Running)
    throw StateError("not_running", "tick: session is " + std::string(to_string(state_)));
  if (!(std::isfinite(wall_dt) && wall_dt >= 0.0))
    throw InvalidArgument("tick: wall_dt must be finite and non-negative");

  std::vector<TelemetryRecord> out;
  if (laser_on_) {
    const double period = scenario_.laser.pulse_period();
    const double next_on = on_time_ + wall_dt;
    while (static_cast<double>(pulses_ + 1) * period <= next_on + kPulseEpsilon)
      out.push_back(fire_pulse());
    on_time_ = next_on;
  }
  wall_time_ += wall_dt;
  return out;
}

ordered_json SessionEngine::header() const {
  ordered_json h;
  h["format"] = kSessionFormat;
  h["session_id"] = id_;
  h["seed"] = scenario_.seed;
  json sc;
  to_json(sc, scenario_);
  h["scenario"] = sc;
  return h;
}

SessionWriter::SessionWriter(std::ostream& out, const ordered_json& header) : out_(out) {
  out_ << header.dump() << '\n';
}

void SessionWriter::write(const TelemetryRecord& r) { out_ << to_line(r) << '\n'; }

SessionFile read_session_file(std::istream& in) {
  SessionFile f;
  std::string line;
  std::size_t lineno = 0;
  std::size_t last_valid = 0;
  bool saw_header = false;
  double last_time = -1.0;

  while (std::getline(in, line)) {
    ++lineno;
    const bool terminated = !in.eof();
    if (!terminated)
      throw ParseError(lineno, last_valid, "truncated record (no line terminator)");
    if (line.empty()) throw ParseError(lineno, last_valid, "empty line");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, last_valid, std::string("invalid JSON: ") + e.what());
    }
    try {
      if (!saw_header) {
        if (!j.is_object() || j.value("format", std::string()) != kSessionFormat)
          throw ParseError(lineno, last_valid,
                           "missing header with format \"" + std::string(kSessionFormat) + "\"");
        f.header = j;
        f.session_id = j.at("session_id").get<std::string>();
        f.seed = j.at("seed").get<std::uint64_t>();
        f.scenario = scenario_from_json(j.at("scenario"));
        f.scenario.seed = f.seed;
        saw_header = true;
      } else {
        TelemetryRecord r = telemetry_from_json(j);
        if (!(r.irradiation_time > last_time))
          throw ParseError(lineno, last_valid, "records out of time order");
        last_time = r.irradiation_time;
        f.records.push_back(std::move(r));
        f.record_lines.push_back(line);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(lineno, last_valid, e.what());
    }
    last_valid = lineno;
  }
  if (!saw_header) throw ParseError(lineno + 1, last_valid, "empty session file");
  return f;
}

SessionFile read_session_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open session file " + path);
  return read_session_file(in);
}

std::unique_ptr<Monitor> reanalyze(const SessionFile& file) {
  auto m = std::make_unique<Monitor>(file.scenario.monitor);
  for (const auto& r : file.records) m->append({r.irradiation_time, r.amplitude, r.pulse_index});
  return m;
}

std::size_t replay(const SessionFile& file, double speed,
                   const std::function<bool(const std::string& line)>& emit,
                   const std::function<void(std::chrono::steady_clock::time_point)>& sleep_until) {
  if (!(speed > 0.0)) throw InvalidArgument("replay speed must be positive");
  const auto start = std::chrono::steady_clock::now();
  std::size_t count = 0;
  for (std::size_t i = 0; i < file.records.size(); ++i) {
    if (std::isfinite(speed)) {
      const auto due = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                   std::chrono::duration<double>(file.records[i].wall_time / speed));
      if (sleep_until)
        sleep_until(due);
      else
        std::this_thread::sleep_until(due);
    }
    if (!emit(file.record_lines[i])) break;
    ++count;
  }
  return count;
}

}  // namespace pamon
