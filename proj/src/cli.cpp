#include "pamon/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include <CLI11.hpp>

#include "pamon/errors.hpp"

namespace pamon {

using nlohmann::json;
using nlohmann::ordered_json;

void RunSpec::validate() const {
  if (scenario.empty()) throw InvalidArgument("scenario name is empty");
  if (!(std::isfinite(duration) && duration >= 0.0))
    throw InvalidArgument("duration must be finite and non-negative");
  double prev_off = 0.0;
  for (std::size_t i = 0; i < laser.size(); ++i) {
    const auto [on, off] = laser[i];
    if (!(std::isfinite(on) && std::isfinite(off)) || on < 0.0 || off > duration || on > off)
      throw InvalidArgument("laser interval " + std::to_string(i + 1) +
                            " must satisfy 0 <= on <= off <= duration");
    if (i > 0 && on < prev_off)
      throw InvalidArgument("laser intervals must be ordered and disjoint");
    prev_off = off;
  }
}

SessionEngine simulate(const RunSpec& spec, const ScenarioRegistry& registry,
                       std::ostream* session_out) {
  spec.validate();
  Scenario sc = registry.get(spec.scenario);
  if (spec.seed) sc.seed = *spec.seed;
  SessionEngine engine("cli", std::move(sc),
                       [&registry](const std::string& n) { return registry.get(n); });

  std::optional<SessionWriter> writer;
  if (session_out) writer.emplace(*session_out, engine.header());
  auto write = [&](const std::vector<TelemetryRecord>& rs) {
    if (writer)
      for (const auto& r : rs) writer->write(r);
  };

  double t = 0.0;
  for (const auto& [on, off] : spec.laser) {
    if (off <= on) continue;
    if (engine.state() == SessionState::Running) write(engine.tick(on - t));
    engine.handle_control({CommandKind::LaserOn, {}});
    write(engine.tick(off - on));
    engine.handle_control({CommandKind::LaserOff, {}});
    t = off;
  }
  if (engine.state() == SessionState::Running && spec.duration > t)
    write(engine.tick(spec.duration - t));
  engine.handle_control({CommandKind::EndSession, {}});
  if (writer) writer->flush();
  return engine;
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

ordered_json analyze(const SessionFile& file) {
  ordered_json rep;
  rep["format"] = "pamon-report/1";
  rep["session_id"] = file.session_id;
  rep["scenario"] = file.scenario.name;
  rep["seed"] = file.seed;
  rep["records"] = file.records.size();

  const auto monitor = reanalyze(file);
  const auto& series = monitor->series();
  const auto& transitions = monitor->transitions();

  double fit_end = series.empty() ? 0.0 : series.back().irradiation_time;
  for (const auto& tr : transitions)
    if (tr.to == DetectedStage::B) {
      fit_end = tr.since;
      break;
    }

  ordered_json fit;
  fit["window"] = {series.empty() ? 0.0 : series.samples().front().irradiation_time, fit_end};
  try {
    const ExpFit f = fit_exponential(
        series, TimeWindow{series.empty() ? 0.0 : series.samples().front().irradiation_time, fit_end});
    fit["status"] = "ok";
    fit["a"] = finite_or_null(f.a);
    fit["k"] = finite_or_null(f.k);
    fit["c"] = finite_or_null(f.c);
    fit["r_squared"] = finite_or_null(f.r_squared);
    fit["converged"] = f.converged;
  } catch (const InsufficientData&) {
    fit["status"] = "insufficient data";
  }
  rep["stage_a_fit"] = fit;

  ordered_json trs = ordered_json::array();
  for (const auto& tr : transitions) {
    if (tr.from == DetectedStage::Insufficient) continue;
    ordered_json t;
    t["from"] = to_string(tr.from);
    t["to"] = to_string(tr.to);
    t["since"] = tr.since;
    t["decided"] = tr.decided;
    trs.push_back(std::move(t));
  }
  rep["transitions"] = trs;
  rep["final_stage"] = to_string(monitor->estimate().stage);

  const Alarm& alarm = monitor->alarm();
  ordered_json al;
  al["active"] = alarm.active;
  al["raised_at"] = alarm.raised_at ? json(*alarm.raised_at) : json(nullptr);
  al["reason"] = to_string(alarm.reason);
  rep["alarm"] = al;
  if (series.size() < monitor->config().smoothing_window) rep["status"] = "insufficient data";
  else rep["status"] = "ok";
  return rep;
}

namespace {

bool write_line(std::ostream& out, const std::string& line) {
  out << line << '\n';
  out.flush();
  return static_cast<bool>(out);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Photoacoustic treatment monitoring simulator", "pamon"};
  app.require_subcommand(1);
  std::string registry_path;
  app.add_option("--registry", registry_path, "Scenario registry JSON (overlays the built-ins)")
      ->envname("PAMON_REGISTRY");

  RunSpec spec;
  std::uint64_t seed = 0;
  std::vector<double> laser_on, laser_off;
  std::string out_path = "-";
  std::string csv_path;
  auto* sim = app.add_subcommand("simulate", "Run a scenario headlessly and write a session file");
  sim->add_option("--scenario", spec.scenario, "Scenario name")->capture_default_str();
  sim->add_option("--duration", spec.duration, "Run length in seconds")->capture_default_str();
  auto* seed_opt = sim->add_option("--seed", seed, "Random seed (default: the scenario's)");
  sim->add_option("--laser-on", laser_on, "Laser-on time in seconds (repeatable)");
  sim->add_option("--laser-off", laser_off, "Laser-off time in seconds (repeatable)");
  sim->add_option("--out", out_path, "Session file path, - for stdout")->capture_default_str();
  sim->add_option("--csv", csv_path, "Also write the monitor CSV here");

  std::string in_path;
  auto* ana = app.add_subcommand("analyze", "Report the stage-A fit, stage transitions and alarm");
  ana->add_option("file", in_path, "Session file")->required();
  ana->add_option("--csv", csv_path, "Also write the monitor CSV here");

  std::string speed_text = "max";
  auto* rep = app.add_subcommand("replay", "Re-emit a session file's records with original pacing");
  rep->add_option("file", in_path, "Session file")->required();
  rep->add_option("--speed", speed_text, "Pacing multiplier, or max")->capture_default_str();

  std::string show;
  auto* scn = app.add_subcommand("scenarios", "List scenarios, or print one as JSON");
  scn->add_option("--show", show, "Scenario to print in full");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "pamon: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const ScenarioRegistry registry =
        registry_path.empty() ? ScenarioRegistry::builtin() : ScenarioRegistry::from_file(registry_path);

    if (*sim) {
      if (laser_on.size() != laser_off.size()) {
        err << "pamon: --laser-on and --laser-off must come in pairs\n";
        return kExitUsage;
      }
      for (std::size_t i = 0; i < laser_on.size(); ++i) spec.laser.emplace_back(laser_on[i], laser_off[i]);
      if (spec.laser.empty()) spec.laser.emplace_back(0.0, spec.duration);
      if (*seed_opt) spec.seed = seed;
      try {
        spec.validate();
        (void)registry.get(spec.scenario);
      } catch (const std::exception& e) {
        err << "pamon: " << e.what() << "\n";
        return kExitUsage;
      }
      std::ofstream file;
      std::ostream* sink = &out;
      if (out_path != "-") {
        file.open(out_path, std::ios::binary | std::ios::trunc);
        if (!file) {
          err << "pamon: cannot write " << out_path << "\n";
          return kExitData;
        }
        sink = &file;
      }
      const SessionEngine engine = simulate(spec, registry, sink);
      if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
        write_monitor_csv(csv, engine.monitor().rows());
        if (!csv) {
          err << "pamon: cannot write " << csv_path << "\n";
          return kExitData;
        }
      }
      return kExitOk;
    }

    if (*ana) {
      const SessionFile file = read_session_file(in_path);
      out << analyze(file).dump(2) << "\n";
      if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
        write_monitor_csv(csv, reanalyze(file)->rows());
        if (!csv) {
          err << "pamon: cannot write " << csv_path << "\n";
          return kExitData;
        }
      }
      return kExitOk;
    }

    if (*rep) {
      double speed = std::numeric_limits<double>::infinity();
      if (speed_text != "max") {
        try {
          std::size_t used = 0;
          speed = std::stod(speed_text, &used);
          if (used != speed_text.size() || !(speed > 0.0)) throw std::invalid_argument(speed_text);
        } catch (const std::exception&) {
          err << "pamon: --speed must be a positive number or max\n";
          return kExitUsage;
        }
      }
      const SessionFile file = read_session_file(in_path);
      // A closed downstream pipe ends the replay quietly.
      replay(file, speed, [&](const std::string& line) { return write_line(out, line); });
      return kExitOk;
    }

    if (*scn) {
      if (!show.empty()) {
        if (!registry.contains(show)) {
          err << "pamon: unknown scenario '" << show << "'\n";
          return kExitUsage;
        }
        json j;
        to_json(j, registry.get(show));
        out << j.dump(2) << "\n";
      } else {
        for (const auto& n : registry.names())
          out << n << "\t" << registry.get(n).description << "\n";
      }
      return kExitOk;
    }
  } catch (const ParseError& e) {
    err << "pamon: " << in_path << ": " << e.what() << "\n";
    return kExitData;
  } catch (const NotFound& e) {
    err << "pamon: " << e.what() << "\n";
    return kExitData;
  } catch (const ConfigError& e) {
    err << "pamon: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "pamon: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace pamon
