#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pamon/acoustic.hpp"
#include "pamon/dsp.hpp"
#include "pamon/monitor.hpp"
#include "pamon/tissue.hpp"

namespace pamon {

/// Everything needed to reproduce a monitored treatment run.
struct Scenario {
  std::string name;
  std::string description;
  OpticalProperties optics;
  LaserPulseConfig laser;
  TreatmentKinetics kinetics;
  double absorber_depth = 2.4e-3;  // m
  std::vector<StaticAbsorber> static_absorbers;
  TransducerModel transducer;
  AcquisitionConfig acquisition;
  WaveletConfig wavelet;
  PeakSelector selector;
  MonitorConfig monitor;
  // Expected amplitude band of a stable baseline, when the scenario has one.
  std::optional<std::pair<double, double>> baseline_band;
  // Ground-truth stages are known (and reported) only for synthetic scenarios.
  bool synthetic = true;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Built-ins: phantom_tattoo, pigskin_tattoo_water, pigskin_untattooed,
/// pigskin_tattoo_gel.
class ScenarioRegistry {
 public:
  static ScenarioRegistry builtin();

  /// Built-ins overlaid with the scenarios in a JSON file: either an array of
  /// scenario objects or an object keyed by name. Entries may be partial; missing
  /// fields take the built-in of the same name (or the defaults). Throws
  /// NotFound if the file cannot be opened, ConfigError if it is malformed.
  static ScenarioRegistry from_file(const std::filesystem::path& path);

  void add(Scenario s);
  /// Throws NotFound for an unknown name.
  const Scenario& get(const std::string& name) const;
  bool contains(const std::string& name) const { return scenarios_.contains(name); }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Scenario> scenarios_;
};

void to_json(nlohmann::json& j, const Scenario& s);
/// Fields absent from `j` keep the values already in `s`.
void merge_from_json(const nlohmann::json& j, Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j);

}  // namespace pamon
