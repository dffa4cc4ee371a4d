#include "pamon/scenario.hpp"

#include <fstream>

#include "pamon/errors.hpp"

namespace pamon {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

json window_json(const TimeWindow& w) { return json::array({w.begin, w.end}); }

Scenario phantom_tattoo() {
  Scenario s;
  s.name = "phantom_tattoo";
  s.description = "Agar phantom with black ink injected at 2.4 mm, water coupling, "
                  "irradiated past complete scattering until the phantom perforates";
  s.selector.mode = PeakMode::GlobalMax;
  return s;
}

Scenario pigskin_tattoo_water() {
  Scenario s;
  s.name = "pigskin_tattoo_water";
  s.description = "Red-tattooed ex vivo pig skin, water coupling; the monitored peak is the "
                  "second envelope peak, behind the superficial skin arrival";
  s.static_absorbers = {StaticAbsorber{1.2e-3, 20.0}};
  s.selector.mode = PeakMode::NthEnvelopePeak;
  s.selector.peak_index = 2;
  // The arrivals are 0.8 us apart; ringing between them merges into the taller one.
  s.selector.min_separation = 0.6e-6;
  return s;
}

Scenario pigskin_untattooed() {
  Scenario s = pigskin_tattoo_water();
  s.name = "pigskin_untattooed";
  s.description = "Untattooed pig skin under the same irradiation: a slow scorch-like decline "
                  "inside the 1.5-2 V band";
  s.kinetics.mu_a_initial = 61.5;
  s.kinetics.mu_a_floor = 61.1;
  s.kinetics.decay_rate = 0.05;
  s.kinetics.t_scatter = 1.0;
  s.kinetics.t_scorch = 2.0;
  s.kinetics.oscillation_sigma = 0.0;
  s.kinetics.scorch_decay_rate = 0.0010;
  s.baseline_band = std::pair{1.5, 2.0};
  return s;
}

Scenario pigskin_tattoo_gel() {
  Scenario s = pigskin_tattoo_water();
  s.name = "pigskin_tattoo_gel";
  s.description = "Tattooed pig skin with coupling gel: uneven gel lowers coupling to 0.8 and "
                  "raises noise 1.5x; scattering completes near 30 s with no scorch phase";
  s.acquisition.speed_of_sound = 1520.0;
  s.acquisition.coupling_efficiency = 0.8;
  s.acquisition.noise_sigma *= 1.5;
  s.kinetics.decay_rate = 0.06;
  s.kinetics.t_scatter = 30.0;
  s.kinetics.t_scorch = 1.0e4;
  s.kinetics.oscillation_sigma = 0.04;
  s.monitor.oscillation_std_threshold = 0.1;
  return s;
}

}  // namespace

void Scenario::validate() const {
  if (name.empty()) throw InvalidArgument("scenario name is empty");
  optics.validate();
  laser.validate();
  kinetics.validate();
  if (!(absorber_depth > 0.0)) throw InvalidArgument("absorber_depth must be positive");
  for (const auto& a : static_absorbers)
    if (!(a.depth > 0.0 && a.absorption >= 0.0))
      throw InvalidArgument("static absorber needs positive depth and non-negative absorption");
  acquisition.validate(transducer);
  wavelet.validate(acquisition.num_samples);
  if (selector.peak_index < 1) throw InvalidArgument("peak_index must be >= 1");
  const double duration = static_cast<double>(acquisition.num_samples) / acquisition.sample_rate;
  if (!(selector.search_window.begin >= 0.0 &&
        selector.search_window.begin < selector.search_window.end &&
        selector.search_window.end <= duration + 1e-12))
    throw InvalidArgument("search_window must lie within the trace");
  monitor.validate();
  if (baseline_band && !(baseline_band->first < baseline_band->second))
    throw InvalidArgument("baseline band must be increasing");
}

void to_json(json& j, const Scenario& s) {
  json bands = json::array();
  for (auto b : s.wavelet.selected_bands) bands.push_back(b);
  json layers = json::array();
  for (const auto& a : s.static_absorbers)
    layers.push_back({{"depth", a.depth}, {"absorption", a.absorption}});

  j = json{
      {"name", s.name},
      {"description", s.description},
      {"optics",
       {{"grueneisen", s.optics.grueneisen},
        {"conversion_efficiency", s.optics.conversion_efficiency}}},
      {"laser",
       {{"wavelength", s.laser.wavelength},
        {"pulse_energy", s.laser.pulse_energy},
        {"spot_diameter", s.laser.spot_diameter},
        {"repetition_rate", s.laser.repetition_rate}}},
      {"kinetics",
       {{"mu_a_initial", s.kinetics.mu_a_initial},
        {"mu_a_floor", s.kinetics.mu_a_floor},
        {"decay_rate", s.kinetics.decay_rate},
        {"t_scatter", s.kinetics.t_scatter},
        {"t_scorch", s.kinetics.t_scorch},
        {"oscillation_sigma", s.kinetics.oscillation_sigma},
        {"scorch_decay_rate", s.kinetics.scorch_decay_rate}}},
      {"absorber_depth", s.absorber_depth},
      {"static_absorbers", layers},
      {"transducer",
       {{"center_frequency", s.transducer.center_frequency},
        {"fractional_bandwidth", s.transducer.fractional_bandwidth},
        {"sensitivity", s.transducer.sensitivity}}},
      {"acquisition",
       {{"sample_rate", s.acquisition.sample_rate},
        {"num_samples", s.acquisition.num_samples},
        {"gain_db", s.acquisition.gain_db},
        {"num_averages", s.acquisition.num_averages},
        {"noise_sigma", s.acquisition.noise_sigma},
        {"speed_of_sound", s.acquisition.speed_of_sound},
        {"coupling_efficiency", s.acquisition.coupling_efficiency},
        {"absorber_radius", s.acquisition.absorber_radius}}},
      {"wavelet",
       {{"family", to_string(s.wavelet.family)},
        {"levels", s.wavelet.levels},
        {"selected_bands", bands},
        {"boundary", to_string(s.wavelet.boundary)}}},
      {"selector",
       {{"mode", to_string(s.selector.mode)},
        {"peak_index", s.selector.peak_index},
        {"search_window", window_json(s.selector.search_window)},
        {"min_relative_height", s.selector.min_relative_height},
        {"noise_factor", s.selector.noise_factor},
        {"min_separation", s.selector.min_separation}}},
      {"monitor",
       {{"smoothing_window", s.monitor.smoothing_window},
        {"slope_fall_threshold", s.monitor.slope_fall_threshold},
        {"slope_flat_band", s.monitor.slope_flat_band},
        {"oscillation_std_threshold", s.monitor.oscillation_std_threshold},
        {"stage_hold", s.monitor.stage_hold},
        {"alarm_hold", s.monitor.alarm_hold},
        {"slope_span", s.monitor.slope_span}}},
      {"baseline_band", s.baseline_band
                            ? json::array({s.baseline_band->first, s.baseline_band->second})
                            : json(nullptr)},
      {"synthetic", s.synthetic},
      {"seed", s.seed},
  };
}

void merge_from_json(const json& j, Scenario& s) {
  if (!j.is_object()) throw InvalidArgument("scenario must be a JSON object");
  read(j, "name", s.name);
  read(j, "description", s.description);
  if (auto o = j.find("optics"); o != j.end()) {
    read(*o, "grueneisen", s.optics.grueneisen);
    read(*o, "conversion_efficiency", s.optics.conversion_efficiency);
  }
  if (auto o = j.find("laser"); o != j.end()) {
    read(*o, "wavelength", s.laser.wavelength);
    read(*o, "pulse_energy", s.laser.pulse_energy);
    read(*o, "spot_diameter", s.laser.spot_diameter);
    read(*o, "repetition_rate", s.laser.repetition_rate);
  }
  if (auto o = j.find("kinetics"); o != j.end()) {
    read(*o, "mu_a_initial", s.kinetics.mu_a_initial);
    read(*o, "mu_a_floor", s.kinetics.mu_a_floor);
    read(*o, "decay_rate", s.kinetics.decay_rate);
    read(*o, "t_scatter", s.kinetics.t_scatter);
    read(*o, "t_scorch", s.kinetics.t_scorch);
    read(*o, "oscillation_sigma", s.kinetics.oscillation_sigma);
    read(*o, "scorch_decay_rate", s.kinetics.scorch_decay_rate);
  }
  read(j, "absorber_depth", s.absorber_depth);
  if (auto o = j.find("static_absorbers"); o != j.end() && o->is_array()) {
    s.static_absorbers.clear();
    for (const auto& a : *o) {
      StaticAbsorber layer;
      read(a, "depth", layer.depth);
      read(a, "absorption", layer.absorption);
      s.static_absorbers.push_back(layer);
    }
  }
  if (auto o = j.find("transducer"); o != j.end()) {
    read(*o, "center_frequency", s.transducer.center_frequency);
    read(*o, "fractional_bandwidth", s.transducer.fractional_bandwidth);
    read(*o, "sensitivity", s.transducer.sensitivity);
  }
  if (auto o = j.find("acquisition"); o != j.end()) {
    read(*o, "sample_rate", s.acquisition.sample_rate);
    read(*o, "num_samples", s.acquisition.num_samples);
    read(*o, "gain_db", s.acquisition.gain_db);
    read(*o, "num_averages", s.acquisition.num_averages);
    read(*o, "noise_sigma", s.acquisition.noise_sigma);
    read(*o, "speed_of_sound", s.acquisition.speed_of_sound);
    read(*o, "coupling_efficiency", s.acquisition.coupling_efficiency);
    read(*o, "absorber_radius", s.acquisition.absorber_radius);
  }
  if (auto o = j.find("wavelet"); o != j.end()) {
    if (auto f = o->find("family"); f != o->end())
      s.wavelet.family = wavelet_family_from_string(f->get<std::string>());
    read(*o, "levels", s.wavelet.levels);
    if (auto b = o->find("selected_bands"); b != o->end())
      s.wavelet.selected_bands = b->get<std::set<std::size_t>>();
    if (auto m = o->find("boundary"); m != o->end())
      s.wavelet.boundary = boundary_mode_from_string(m->get<std::string>());
  }
  if (auto o = j.find("selector"); o != j.end()) {
    if (auto m = o->find("mode"); m != o->end())
      s.selector.mode = peak_mode_from_string(m->get<std::string>());
    read(*o, "peak_index", s.selector.peak_index);
    if (auto w = o->find("search_window"); w != o->end()) {
      if (!w->is_array() || w->size() != 2)
        throw InvalidArgument("search_window must be [begin, end]");
      s.selector.search_window = {(*w)[0].get<double>(), (*w)[1].get<double>()};
    }
    read(*o, "min_relative_height", s.selector.min_relative_height);
    read(*o, "noise_factor", s.selector.noise_factor);
    read(*o, "min_separation", s.selector.min_separation);
  }
  if (auto o = j.find("monitor"); o != j.end()) {
    read(*o, "smoothing_window", s.monitor.smoothing_window);
    read(*o, "slope_fall_threshold", s.monitor.slope_fall_threshold);
    read(*o, "slope_flat_band", s.monitor.slope_flat_band);
    read(*o, "oscillation_std_threshold", s.monitor.oscillation_std_threshold);
    read(*o, "stage_hold", s.monitor.stage_hold);
    read(*o, "alarm_hold", s.monitor.alarm_hold);
    read(*o, "slope_span", s.monitor.slope_span);
  }
  if (auto b = j.find("baseline_band"); b != j.end()) {
    if (b->is_null())
      s.baseline_band.reset();
    else if (b->is_array() && b->size() == 2)
      s.baseline_band = std::pair{(*b)[0].get<double>(), (*b)[1].get<double>()};
    else
      throw InvalidArgument("baseline_band must be [low, high] or null");
  }
  read(j, "synthetic", s.synthetic);
  read(j, "seed", s.seed);
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  merge_from_json(j, s);
  s.validate();
  return s;
}

ScenarioRegistry ScenarioRegistry::builtin() {
  ScenarioRegistry r;
  for (auto s : {phantom_tattoo(), pigskin_tattoo_water(), pigskin_untattooed(),
                 pigskin_tattoo_gel()})
    r.add(std::move(s));
  return r;
}

ScenarioRegistry ScenarioRegistry::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open scenario registry " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario registry " + path.string() + ": " + e.what());
  }

  ScenarioRegistry r = builtin();
  auto load = [&](const json& entry, const std::string& key_name) {
    std::string name = key_name;
    if (auto it = entry.find("name"); it != entry.end()) name = it->get<std::string>();
    if (name.empty()) throw InvalidArgument("scenario registry entry without a name");
    Scenario s = r.contains(name) ? r.get(name) : Scenario{};
    s.name = name;
    merge_from_json(entry, s);
    s.name = name;
    r.add(std::move(s));
  };
  try {
    if (doc.is_array()) {
      for (const auto& e : doc) load(e, "");
    } else if (doc.is_object()) {
      for (const auto& [k, v] : doc.items()) load(v, k);
    } else {
      throw InvalidArgument("scenario registry must be an array or object");
    }
  } catch (const json::exception& e) {
    throw ConfigError("scenario registry " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError("scenario registry " + path.string() + ": " + e.what());
  }
  return r;
}

void ScenarioRegistry::add(Scenario s) {
  s.validate();
  auto name = s.name;
  scenarios_.insert_or_assign(std::move(name), std::move(s));
}

const Scenario& ScenarioRegistry::get(const std::string& name) const {
  auto it = scenarios_.find(name);
  if (it == scenarios_.end()) throw NotFound("unknown scenario '" + name + "'");
  return it->second;
}

std::vector<std::string> ScenarioRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : scenarios_) out.push_back(k);
  return out;
}

}  // namespace pamon
