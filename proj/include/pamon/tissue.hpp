#pragma once

#include <cstdint>
#include <string_view>

namespace pamon {

/// Thermoelastic properties of the irradiated absorber.
struct OpticalProperties {
  double grueneisen = 0.2;             // dimensionless
  double conversion_efficiency = 0.5;  // optical absorption -> pressure, in [0, 1]
  double absorption_coeff = 0.0;       // 1/m

  void validate() const;
};

struct LaserPulseConfig {
  double wavelength = 532.0;     // nm
  double pulse_energy = 0.067;   // J
  double spot_diameter = 5e-3;   // m
  double repetition_rate = 5.0;  // Hz

  /// Per-pulse fluence in J/m^2 over a uniform circular spot.
  double fluence() const;
  double pulse_period() const { return 1.0 / repetition_rate; }
  void validate() const;
};

/// Time constants of the absorption kinetics. Times are cumulative irradiation
/// seconds, not wall-clock.
struct TreatmentKinetics {
  double mu_a_initial = 100.0;      // 1/m
  double mu_a_floor = 60.0;         // 1/m
  double decay_rate = 0.05;         // 1/s
  double t_scatter = 35.0;          // s, end of pigment scattering
  double t_scorch = 50.0;           // s, onset of scorching
  double oscillation_sigma = 0.08;  // relative std of the plateau perturbation
  double scorch_decay_rate = 0.01;  // 1/s

  void validate() const;
};

enum class Stage { Scattering, Oscillation, Scorched };

std::string_view stage_letter(Stage s);  // "A", "B", "C"

struct TissueState {
  double elapsed_irradiation = 0.0;  // s, laser-on time only
  double wall_time = 0.0;            // s, all advance() time
  double mu_a_current = 0.0;         // 1/m
  Stage stage = Stage::Scattering;
  double scorch_level = 0.0;  // [0, 1]
  double modulation = 1.0;    // plateau oscillation factor, 1 outside Oscillation
  double depth = 2.4e-3;      // m
  std::uint64_t seed = 0;
  std::uint64_t draws = 0;  // perturbation draws consumed

  static TissueState initial(const TreatmentKinetics& kinetics, double depth,
                             std::uint64_t seed);

  /// Absorption seen by the acoustic source: the pigment absorption scaled by
  /// the plateau oscillation and attenuated by scorching.
  double effective_absorption() const {
    return mu_a_current * modulation * (1.0 - scorch_level);
  }

  bool operator==(const TissueState&) const = default;
};

/// Initial photoacoustic pressure p0 = Gamma * eta_th * mu_a * F in Pa.
/// Throws InvalidArgument on negative or non-finite input.
double initial_pressure(const OpticalProperties& props, double fluence);

/// Advance the tissue by dt seconds. With the laser off only wall_time moves.
///
/// Absorption follows an exponential relaxation toward mu_a_floor while
/// scattering, is held at the floor with a seeded multiplicative perturbation
/// during the oscillation plateau, and once scorched the effective source
/// decays at scorch_decay_rate through scorch_level. Each laser-on call during
/// the plateau consumes one perturbation draw, so trajectories are a pure
/// function of (seed, call sequence).
TissueState advance(const TissueState& state, double dt, bool laser_on,
                    const TreatmentKinetics& kinetics);

Stage ground_truth_stage(const TissueState& state, const TreatmentKinetics& kinetics);

}  // namespace pamon
