#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pamon/session.hpp"

namespace pamon {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct RunSpec {
  std::string scenario = "phantom_tattoo";
  double duration = 90.0;  // s
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<double, double>> laser;  // (on_at, off_at), s

  /// Intervals must be ordered, disjoint and inside [0, duration]. Throws InvalidArgument.
  void validate() const;
};

/// Run a spec headlessly. Returns the engine after EndSession; records are
/// written to `session_out` when given.
SessionEngine simulate(const RunSpec& spec, const ScenarioRegistry& registry,
                       std::ostream* session_out);

/// Analysis of a session file: stage-A fit over [first sample, A->B onset],
/// transitions and alarm, from re-running the monitor over the recording.
nlohmann::ordered_json analyze(const SessionFile& file);

/// `pamon` entry point: simulate | analyze | replay | scenarios.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pamon
