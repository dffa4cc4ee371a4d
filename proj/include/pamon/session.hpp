#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pamon/monitor.hpp"
#include "pamon/scenario.hpp"

namespace pamon {

inline constexpr std::string_view kSessionFormat = "pamon/1";

enum class SessionState { Idle, Running, Stopped };
enum class CommandKind { LaserOn, LaserOff, SetScenario, Reset, EndSession };

std::string_view to_string(SessionState s);
std::string_view to_string(CommandKind k);
CommandKind command_kind_from_string(std::string_view s);

struct ControlCommand {
  CommandKind kind = CommandKind::LaserOn;
  std::optional<std::string> scenario;  // SetScenario only
};

struct TelemetryRecord {
  std::string session_id;
  std::uint64_t pulse_index = 0;
  double irradiation_time = 0.0;  // s
  double wall_time = 0.0;         // s since the session started running
  double amplitude = 0.0;         // V
  bool low_confidence = false;
  DetectedStage stage = DetectedStage::Insufficient;
  bool alarm_active = false;
  AlarmReason alarm_reason = AlarmReason::None;
  std::optional<Stage> ground_truth_stage;  // synthetic scenarios only

  bool operator==(const TelemetryRecord&) const = default;
};

nlohmann::ordered_json to_json(const TelemetryRecord& r);
/// Throws InvalidArgument (or nlohmann::json::exception) on a malformed record.
TelemetryRecord telemetry_from_json(const nlohmann::json& j);
/// Compact single-line JSON, no trailing newline.
std::string to_line(const TelemetryRecord& r);

struct Acknowledgment {
  SessionState state = SessionState::Idle;
  bool laser_on = false;
  std::string scenario;
};

/// One simulated treatment session: tissue, acquisition chain, peak extraction
/// and monitor driven by laser control commands and wall-clock ticks.
///
/// With the laser on, one pulse fires each time cumulative laser-on time
/// crosses a multiple of the pulse period; partial periods carry across
/// laser-off gaps. Output is a pure function of (scenario, seed, command log
/// with tick boundaries).
class SessionEngine {
 public:
  using ScenarioLookup = std::function<Scenario(const std::string&)>;

  /// `lookup` resolves SetScenario names (it should throw NotFound); without one
  /// SetScenario fails with a StateError.
  SessionEngine(std::string id, Scenario scenario, ScenarioLookup lookup = {});

  const std::string& id() const { return id_; }
  SessionState state() const { return state_; }
  bool laser_on() const { return laser_on_; }
  const Scenario& scenario() const { return scenario_; }
  std::uint64_t seed() const { return scenario_.seed; }
  const TissueState& tissue() const { return tissue_; }
  const Monitor& monitor() const { return *monitor_; }
  double wall_time() const { return wall_time_; }
  double laser_on_time() const { return on_time_; }
  std::uint64_t pulses() const { return pulses_; }
  // Incremented by Reset and SetScenario; each epoch is one recordable run.
  std::uint64_t epoch() const { return epoch_; }

  /// Throws StateError (code: invalid_transition, session_stopped,
  /// session_running, missing_scenario, unknown_scenario).
  Acknowledgment handle_control(const ControlCommand& cmd);

  /// Advance wall-clock time. Throws StateError (code not_running) unless Running.
  std::vector<TelemetryRecord> tick(double wall_dt);

  /// Header line for this session's file: format, session_id, seed, scenario.
  nlohmann::ordered_json header() const;

 private:
  void restart();
  TelemetryRecord fire_pulse();

  std::string id_;
  Scenario scenario_;
  ScenarioLookup lookup_;
  SessionState state_ = SessionState::Idle;
  bool laser_on_ = false;
  TissueState tissue_;
  std::unique_ptr<Monitor> monitor_;
  double wall_time_ = 0.0;
  double on_time_ = 0.0;
  double segment_wall_start_ = 0.0;
  double segment_on_start_ = 0.0;
  std::uint64_t pulses_ = 0;
  std::uint64_t epoch_ = 0;
};

/// Line-delimited session file writer: header first, then one record per line.
class SessionWriter {
 public:
  SessionWriter(std::ostream& out, const nlohmann::ordered_json& header);
  void write(const TelemetryRecord& r);
  void flush() { out_.flush(); }

 private:
  std::ostream& out_;
};

struct SessionFile {
  nlohmann::json header;
  std::string session_id;
  std::uint64_t seed = 0;
  Scenario scenario;
  std::vector<TelemetryRecord> records;
  std::vector<std::string> record_lines;  // verbatim, without newline
};

/// Throws ParseError with the failing line number and the last valid line.
SessionFile read_session_file(std::istream& in);
SessionFile read_session_file(const std::string& path);

/// Re-run the monitor over the recorded amplitudes.
std::unique_ptr<Monitor> reanalyze(const SessionFile& file);

/// Emit each record line verbatim, paced so that a record with wall_time w goes
/// out w / speed seconds after the start. speed = +infinity disables pacing.
/// `emit` returning false stops the replay early. Returns the number emitted.
std::size_t replay(const SessionFile& file, double speed,
                   const std::function<bool(const std::string& line)>& emit,
                   const std::function<void(std::chrono::steady_clock::time_point)>&
                       sleep_until = {});

}  // namespace pamon
