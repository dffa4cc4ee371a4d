#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "pamon/errors.hpp"
#include "pamon/session.hpp"

using namespace pamon;
using nlohmann::json;

namespace {

const ScenarioRegistry& registry() {
  static const ScenarioRegistry r = ScenarioRegistry::builtin();
  return r;
}

SessionEngine make_engine(const std::string& scenario = "phantom_tattoo", std::uint64_t seed = 42) {
  Scenario sc = registry().get(scenario);
  sc.seed = seed;
  return SessionEngine("t", sc, [](const std::string& n) { return registry().get(n); });
}

std::string code_of(SessionEngine& e, ControlCommand cmd) {
  try {
    e.handle_control(cmd);
  } catch (const StateError& err) {
    return err.code();
  }
  return "";
}

// A command log: each step either applies a command or ticks.
struct Step {
  std::optional<ControlCommand> cmd;
  double dt = 0.0;
};

std::string run_log(const std::vector<Step>& log, std::uint64_t seed) {
  SessionEngine e = make_engine("phantom_tattoo", seed);
  std::ostringstream out;
  SessionWriter w(out, e.header());
  for (const auto& s : log) {
    if (s.cmd)
      e.handle_control(*s.cmd);
    else
      for (const auto& r : e.tick(s.dt)) w.write(r);
  }
  return out.str();
}

std::string record_session(const std::string& scenario, double seconds, std::uint64_t seed,
                           std::vector<TelemetryRecord>* live = nullptr,
                           std::vector<StageTransition>* transitions = nullptr) {
  SessionEngine e = make_engine(scenario, seed);
  std::ostringstream out;
  SessionWriter w(out, e.header());
  e.handle_control({CommandKind::LaserOn, {}});
  for (const auto& r : e.tick(seconds)) {
    w.write(r);
    if (live) live->push_back(r);
  }
  if (transitions) *transitions = e.monitor().transitions();
  e.handle_control({CommandKind::EndSession, {}});
  return out.str();
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("laser on for one second at 5 Hz gives five records") {
  SessionEngine e = make_engine();
  e.handle_control({CommandKind::LaserOn, {}});
  const auto rs = e.tick(1.0);
  REQUIRE(rs.size() == 5);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(rs[i].pulse_index == i + 1);
    CHECK(rs[i].irradiation_time == doctest::Approx(0.2 * static_cast<double>(i + 1)));
    CHECK(rs[i].session_id == "t");
  }

  // Same result in small ticks.
  SessionEngine f = make_engine();
  f.handle_control({CommandKind::LaserOn, {}});
  std::vector<TelemetryRecord> small;
  for (int i = 0; i < 10; ++i)
    for (auto& r : f.tick(0.1)) small.push_back(r);
  CHECK(small == rs);
}

TEST_CASE("laser off: no records and frozen tissue") {
  SessionEngine e = make_engine();
  e.handle_control({CommandKind::LaserOn, {}});
  (void)e.tick(3.0);
  e.handle_control({CommandKind::LaserOff, {}});
  const TissueState before = e.tissue();
  const double on_before = e.laser_on_time();
  CHECK(e.tick(10.0).empty());
  CHECK(e.tissue() == before);
  CHECK(e.laser_on_time() == on_before);
  CHECK(e.wall_time() == doctest::Approx(13.0));

  // Resuming continues from the frozen level: next pulse is index 16 at 3.2 s.
  e.handle_control({CommandKind::LaserOn, {}});
  const auto rs = e.tick(0.2);
  REQUIRE(rs.size() == 1);
  CHECK(rs[0].pulse_index == 16);
  CHECK(rs[0].irradiation_time == doctest::Approx(3.2));
  CHECK(rs[0].wall_time == doctest::Approx(13.2));
}

TEST_CASE("state machine") {
  SessionEngine e = make_engine();
  CHECK(e.state() == SessionState::Idle);
  CHECK_THROWS_AS(e.tick(1.0), StateError);
  CHECK(code_of(e, {CommandKind::LaserOff, {}}) == "invalid_transition");

  const Acknowledgment ack = e.handle_control({CommandKind::LaserOn, {}});
  CHECK(ack.state == SessionState::Running);
  CHECK(ack.laser_on);
  CHECK(ack.scenario == "phantom_tattoo");

  CHECK(code_of(e, {CommandKind::SetScenario, "pigskin_tattoo_water"}) == "session_running");
  e.handle_control({CommandKind::LaserOff, {}});
  CHECK(e.state() == SessionState::Running);
  CHECK_FALSE(e.laser_on());
  CHECK(code_of(e, {CommandKind::SetScenario, "pigskin_tattoo_water"}) == "session_running");

  e.handle_control({CommandKind::EndSession, {}});
  CHECK(e.state() == SessionState::Stopped);
  CHECK_FALSE(e.laser_on());
  CHECK_THROWS_AS(e.tick(1.0), StateError);
  CHECK(code_of(e, {CommandKind::LaserOn, {}}) == "session_stopped");
  CHECK(code_of(e, {CommandKind::EndSession, {}}) == "session_stopped");

  // SetScenario is allowed from Stopped and keeps the session seed.
  CHECK(code_of(e, {CommandKind::SetScenario, {}}) == "missing_scenario");
  CHECK(code_of(e, {CommandKind::SetScenario, "nope"}) == "unknown_scenario");
  CHECK(code_of(e, {CommandKind::SetScenario, "pigskin_tattoo_water"}).empty());
  CHECK(e.state() == SessionState::Idle);
  CHECK(e.scenario().name == "pigskin_tattoo_water");
  CHECK(e.seed() == 42);
  CHECK(e.epoch() == 1);
  CHECK(e.pulses() == 0);
}

TEST_CASE("Reset re-seeds to the initial state") {
  SessionEngine e = make_engine();
  const TissueState initial = e.tissue();
  e.handle_control({CommandKind::LaserOn, {}});
  const auto first = e.tick(4.0);
  e.handle_control({CommandKind::Reset, {}});
  CHECK(e.state() == SessionState::Idle);
  CHECK_FALSE(e.laser_on());
  CHECK(e.tissue() == initial);
  CHECK(e.pulses() == 0);
  CHECK(e.monitor().series().empty());
  e.handle_control({CommandKind::LaserOn, {}});
  CHECK(e.tick(4.0) == first);
}

TEST_CASE("laser_on implies Running under random command sequences") {
  std::mt19937_64 rng(3);
  SessionEngine e = make_engine();
  const CommandKind kinds[] = {CommandKind::LaserOn, CommandKind::LaserOff, CommandKind::Reset,
                               CommandKind::EndSession, CommandKind::SetScenario};
  for (int i = 0; i < 400; ++i) {
    const CommandKind k = kinds[rng() % 5];
    ControlCommand c{k, {}};
    if (k == CommandKind::SetScenario) c.scenario = "phantom_tattoo";
    try {
      e.handle_control(c);
    } catch (const StateError&) {
    }
    if (e.state() == SessionState::Running && rng() % 2) (void)e.tick(0.05);
    CHECK((!e.laser_on() || e.state() == SessionState::Running));
  }
}

TEST_CASE("pulse accounting over random schedules") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dt(0.0, 0.7);
  for (int trial = 0; trial < 20; ++trial) {
    SessionEngine e = make_engine("phantom_tattoo", 100 + trial);
    e.handle_control({CommandKind::LaserOn, {}});
    double on_total = 0.0;
    std::size_t records = 0;
    double last_irr = 0.0;
    for (int i = 0; i < 40; ++i) {
      if (rng() % 3 == 0) {
        if (e.laser_on())
          e.handle_control({CommandKind::LaserOff, {}});
        else
          e.handle_control({CommandKind::LaserOn, {}});
      }
      const double d = dt(rng);
      const bool was_on = e.laser_on();
      const auto rs = e.tick(d);
      if (!was_on) CHECK(rs.empty());
      if (was_on) on_total += d;
      for (const auto& r : rs) {
        CHECK(r.irradiation_time > last_irr);
        last_irr = r.irradiation_time;
      }
      records += rs.size();
    }
    const auto expect = static_cast<long>(std::floor(on_total * 5.0));
    CHECK(std::labs(static_cast<long>(records) - expect) <= 1);
    CHECK(e.laser_on_time() == doctest::Approx(on_total));
  }
}

TEST_CASE("determinism: identical command logs give identical bytes") {
  std::vector<Step> log = {
      {ControlCommand{CommandKind::LaserOn, {}}, 0}, {{}, 2.3},  {{}, 0.05},
      {ControlCommand{CommandKind::LaserOff, {}}, 0}, {{}, 4.0},
      {ControlCommand{CommandKind::LaserOn, {}}, 0}, {{}, 7.77},
      {ControlCommand{CommandKind::Reset, {}}, 0},
      {ControlCommand{CommandKind::LaserOn, {}}, 0}, {{}, 1.0},
  };
  const std::string a = run_log(log, 9);
  const std::string b = run_log(log, 9);
  CHECK(a == b);
  CHECK(a != run_log(log, 10));
}

TEST_CASE("ground truth only for synthetic scenarios") {
  SessionEngine e = make_engine();
  e.handle_control({CommandKind::LaserOn, {}});
  for (const auto& r : e.tick(1.0)) CHECK(r.ground_truth_stage.has_value());

  Scenario sc = registry().get("phantom_tattoo");
  sc.synthetic = false;
  SessionEngine f("t", sc);
  f.handle_control({CommandKind::LaserOn, {}});
  for (const auto& r : f.tick(1.0)) {
    CHECK_FALSE(r.ground_truth_stage.has_value());
    CHECK(to_json(r).count("ground_truth_stage") == 0);
  }
}

TEST_CASE("telemetry json round trip") {
  SessionEngine e = make_engine();
  e.handle_control({CommandKind::LaserOn, {}});
  for (const auto& r : e.tick(2.0)) {
    const TelemetryRecord back = telemetry_from_json(json::parse(to_line(r)));
    CHECK(back == r);
    CHECK(to_line(back) == to_line(r));
  }
}

TEST_CASE("record, read back and replay are byte-faithful") {
  std::vector<TelemetryRecord> live;
  std::vector<StageTransition> live_transitions;
  const std::string text = record_session("phantom_tattoo", 30.0, 42, &live, &live_transitions);

  std::istringstream in(text);
  const SessionFile f = read_session_file(in);
  CHECK(f.session_id == "t");
  CHECK(f.seed == 42);
  CHECK(f.scenario.name == "phantom_tattoo");
  CHECK(f.header["format"] == "pamon/1");
  CHECK(f.records == live);
  REQUIRE(f.record_lines.size() == live.size());

  for (double speed : {1000.0, std::numeric_limits<double>::infinity()}) {
    std::string replayed = text.substr(0, text.find('\n') + 1);
    const std::size_t n = replay(
        f, speed,
        [&](const std::string& line) {
          replayed += line + "\n";
          return true;
        },
        [](std::chrono::steady_clock::time_point) {});
    CHECK(n == live.size());
    CHECK(replayed == text);
  }

  const auto m = reanalyze(f);
  CHECK(m->transitions() == live_transitions);
}

TEST_CASE("replay re-analysis reproduces the live stage timeline") {
  std::vector<StageTransition> live;
  const std::string text = record_session("pigskin_tattoo_water", 70.0, 5, nullptr, &live);
  std::istringstream in(text);
  const auto m = reanalyze(read_session_file(in));
  REQUIRE(live.size() >= 2);
  CHECK(m->transitions() == live);
}

TEST_CASE("replay pacing follows wall_time / speed") {
  const std::string text = record_session("phantom_tattoo", 2.0, 1);
  std::istringstream in(text);
  const SessionFile f = read_session_file(in);
  std::vector<std::chrono::steady_clock::time_point> dues;
  const auto before = std::chrono::steady_clock::now();
  replay(
      f, 4.0, [](const std::string&) { return true; },
      [&](std::chrono::steady_clock::time_point t) { dues.push_back(t); });
  REQUIRE(dues.size() == f.records.size());
  for (std::size_t i = 0; i < dues.size(); ++i) {
    const double offset = std::chrono::duration<double>(dues[i] - dues[0]).count();
    CHECK(offset == doctest::Approx((f.records[i].wall_time - f.records[0].wall_time) / 4.0)
                        .epsilon(1e-6));
  }
  CHECK(dues[0] >= before);

  // emit returning false stops the replay.
  std::size_t seen = 0;
  const std::size_t n = replay(f, std::numeric_limits<double>::infinity(),
                               [&](const std::string&) { return ++seen < 3; });
  CHECK(n == 2);
  CHECK(seen == 3);
}

TEST_CASE("truncated and malformed files") {
  const std::string text = record_session("phantom_tattoo", 2.0, 1);
  // Drop the final newline and half of the last record: line 11 is cut.
  const std::string cut = text.substr(0, text.size() - 20);
  std::istringstream in(cut);
  try {
    (void)read_session_file(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 11);
    CHECK(e.last_valid_line() == 10);
    CHECK(std::string(e.what()).find("last valid line 10") != std::string::npos);
  }

  // Garbage in the middle.
  std::string bad = text;
  const auto third = bad.find('\n', bad.find('\n', bad.find('\n') + 1) + 1);
  bad.insert(third + 1, "{not json\n");
  std::istringstream in2(bad);
  try {
    (void)read_session_file(in2);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(e.last_valid_line() == 3);
  }

  std::istringstream empty("");
  CHECK_THROWS_AS(read_session_file(empty), ParseError);
  std::istringstream no_header(text.substr(text.find('\n') + 1));
  CHECK_THROWS_AS(read_session_file(no_header), ParseError);
  std::istringstream wrong_format(R"({"format":"other/9","session_id":"x","seed":1,"scenario":{}})"
                                  "\n");
  CHECK_THROWS_AS(read_session_file(wrong_format), ParseError);
  CHECK_THROWS_AS(read_session_file(std::string("/nonexistent/file.pamon")), NotFound);

  // Header only is a valid empty session.
  std::istringstream header_only(text.substr(0, text.find('\n') + 1));
  CHECK(read_session_file(header_only).records.empty());
}

TEST_CASE("untattooed skin stays in its baseline band") {
  SessionEngine e = make_engine("pigskin_untattooed", 42);
  e.handle_control({CommandKind::LaserOn, {}});
  (void)e.tick(90.0);
  const auto band = e.scenario().baseline_band;
  REQUIRE(band);
  CHECK(baseline_check(e.monitor().series(), band->first, band->second, e.scenario().monitor));
}

}  // TEST_SUITE
