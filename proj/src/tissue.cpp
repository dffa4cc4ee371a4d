#include "pamon/tissue.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pamon/errors.hpp"
#include "pamon/random.hpp"

namespace pamon {

namespace {

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void OpticalProperties::validate() const {
  if (!(std::isfinite(grueneisen) && grueneisen > 0.0))
    throw InvalidArgument("grueneisen must be positive");
  if (!(finite_nonneg(conversion_efficiency) && conversion_efficiency <= 1.0))
    throw InvalidArgument("conversion_efficiency must lie in [0, 1]");
  if (!finite_nonneg(absorption_coeff))
    throw InvalidArgument("absorption_coeff must be non-negative");
}

double LaserPulseConfig::fluence() const {
  const double r = 0.5 * spot_diameter;
  return pulse_energy / (std::numbers::pi * r * r);
}

void LaserPulseConfig::validate() const {
  if (!(std::isfinite(pulse_energy) && pulse_energy > 0.0))
    throw InvalidArgument("pulse_energy must be positive");
  if (!(std::isfinite(repetition_rate) && repetition_rate > 0.0))
    throw InvalidArgument("repetition_rate must be positive");
  if (!(std::isfinite(spot_diameter) && spot_diameter > 0.0))
    throw InvalidArgument("spot_diameter must be positive");
}

void TreatmentKinetics::validate() const {
  if (!(finite_nonneg(mu_a_floor) && std::isfinite(mu_a_initial) && mu_a_floor < mu_a_initial))
    throw InvalidArgument("kinetics require 0 <= mu_a_floor < mu_a_initial");
  if (!(t_scatter > 0.0 && t_scatter < t_scorch))
    throw InvalidArgument("kinetics require 0 < t_scatter < t_scorch");
  if (!(std::isfinite(decay_rate) && decay_rate > 0.0))
    throw InvalidArgument("decay_rate must be positive");
  if (!finite_nonneg(oscillation_sigma)) throw InvalidArgument("oscillation_sigma must be >= 0");
  if (!finite_nonneg(scorch_decay_rate)) throw InvalidArgument("scorch_decay_rate must be >= 0");
}

std::string_view stage_letter(Stage s) {
  switch (s) {
    case Stage::Scattering: return "A";
    case Stage::Oscillation: return "B";
    case Stage::Scorched: return "C";
  }
  return "?";
}

TissueState TissueState::initial(const TreatmentKinetics& kinetics, double depth,
                                 std::uint64_t seed) {
  kinetics.validate();
  if (!(std::isfinite(depth) && depth > 0.0)) throw InvalidArgument("depth must be positive");
  TissueState s;
  s.mu_a_current = kinetics.mu_a_initial;
  s.depth = depth;
  s.seed = seed;
  return s;
}

double initial_pressure(const OpticalProperties& props, double fluence) {
  if (!finite_nonneg(props.grueneisen) || !finite_nonneg(props.conversion_efficiency) ||
      !finite_nonneg(props.absorption_coeff) || !finite_nonneg(fluence))
    throw InvalidArgument("initial_pressure: inputs must be finite and non-negative");
  return props.grueneisen * props.conversion_efficiency * props.absorption_coeff * fluence;
}

Stage ground_truth_stage(const TissueState& state, const TreatmentKinetics& kinetics) {
  if (state.elapsed_irradiation < kinetics.t_scatter) return Stage::Scattering;
  if (state.elapsed_irradiation < kinetics.t_scorch) return Stage::Oscillation;
  return Stage::Scorched;
}

TissueState advance(const TissueState& state, double dt, bool laser_on,
                    const TreatmentKinetics& kinetics) {
  if (!(std::isfinite(dt) && dt > 0.0)) throw InvalidArgument("advance: dt must be positive");

  TissueState next = state;
  next.wall_time += dt;
  if (!laser_on) return next;

  next.elapsed_irradiation += dt;
  next.stage = ground_truth_stage(next, kinetics);
  const double t = next.elapsed_irradiation;
  const double mu0 = kinetics.mu_a_initial;
  const double mu_f = kinetics.mu_a_floor;

  switch (next.stage) {
    case Stage::Scattering:
      next.mu_a_current = mu_f + (mu0 - mu_f) * std::exp(-kinetics.decay_rate * t);
      next.modulation = 1.0;
      next.scorch_level = 0.0;
      break;
    case Stage::Oscillation: {
      next.mu_a_current = mu_f;
      Rng rng(derive_seed(state.seed, streams::kTissue, state.draws));
      std::normal_distribution<double> normal(0.0, 1.0);
      const double z = std::clamp(normal(rng), -3.0, 3.0);
      next.modulation = std::max(0.0, 1.0 + kinetics.oscillation_sigma * z);
      next.draws = state.draws + 1;
      next.scorch_level = 0.0;
      break;
    }
    case Stage::Scorched:
      next.mu_a_current = mu_f;
      next.modulation = 1.0;
      next.scorch_level = 1.0 - std::exp(-kinetics.scorch_decay_rate * (t - kinetics.t_scorch));
      break;
  }
  // Guard the closed form against rounding past the bounds.
  next.mu_a_current = std::clamp(next.mu_a_current, mu_f, mu0);
  return next;
}

}  // namespace pamon
