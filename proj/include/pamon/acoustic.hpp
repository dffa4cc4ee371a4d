#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pamon/tissue.hpp"

namespace pamon {

struct TransducerModel {
  double center_frequency = 5e6;     // Hz
  double fractional_bandwidth = 0.6;  // -6 dB width / center frequency
  double sensitivity = 1.216e-6;       // V/Pa at the center frequency

  void validate() const;
};

struct AcquisitionConfig {
  double sample_rate = 100e6;  // Hz
  std::size_t num_samples = 2048;
  double gain_db = 46.0;
  std::size_t num_averages = 60;
  double noise_sigma = 0.76;       // V, per raw (pre-average) trace, after gain
  double speed_of_sound = 1500.0;  // m/s
  double coupling_efficiency = 1.0;
  double absorber_radius = 0.1e-3;  // m, sets the N-wave duration
  std::uint64_t seed = 0;

  /// Throws ConfigError when the sampling rate is below 4x the transducer
  /// center frequency, InvalidArgument for other malformed fields.
  void validate(const TransducerModel& transducer) const;
};

/// One sampled voltage waveform. Sample i is at t0 + i / sample_rate.
struct Trace {
  std::vector<double> samples;
  double sample_rate = 100e6;
  double t0 = 0.0;
  double irradiation_time = 0.0;
  std::uint64_t pulse_index = 0;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  double time_at(std::size_t i) const { return t0 + static_cast<double>(i) / sample_rate; }
  bool operator==(const Trace&) const = default;
};

/// Absorber that does not evolve with treatment (e.g. a superficial skin layer).
struct StaticAbsorber {
  double depth = 1.2e-3;     // m
  double absorption = 20.0;  // 1/m
};

/// Centered N-shaped pressure pulse, 2*m+1 samples long with the zero crossing at
/// index m, where m = max(1, round(half_width * sample_rate)). Sample m-j equals
/// p0 * j/m, sample m+j its negation, so the pulse is exactly antisymmetric.
std::vector<double> source_wavelet(double p0, double sample_rate, double half_width);

/// Arrival time of a source at `depth`.
double propagation_delay(double depth, double speed_of_sound);

/// Zero-phase gaussian-windowed cosine impulse response, normalised to unit gain
/// at the center frequency. Its length is 2*L+1 with L = ceil(4 sigma_t fs).
std::vector<double> transducer_impulse_response(const TransducerModel& model,
                                                double sample_rate);

/// Same-length convolution of `waveform` with the impulse response, aligned so
/// that an impulse at index n produces a response centred at n.
std::vector<double> transducer_filter(std::span<const double> waveform,
                                      const TransducerModel& model, double sample_rate);

std::vector<double> apply_gain_db(std::span<const double> waveform, double gain_db);

/// Samplewise mean; metadata is taken from the first trace.
Trace average_traces(std::span<const Trace> traces);

/// The noiseless received voltage: every source's N-wave placed at its
/// propagation delay, band-limited by the transducer, scaled by sensitivity,
/// coupling efficiency and gain.
std::vector<double> clean_signal(const TissueState& state, const OpticalProperties& props,
                                 const LaserPulseConfig& laser, const TransducerModel& td,
                                 const AcquisitionConfig& acq,
                                 std::span<const StaticAbsorber> static_absorbers = {});

/// Full acquisition of one monitored point: the clean signal plus independent
/// white gaussian noise on each of num_averages raw traces, averaged. The noise
/// generator is seeded from (acq.seed, pulse_index) so the result is a pure
/// function of the arguments.
Trace acquire(const TissueState& state, const OpticalProperties& props,
              const LaserPulseConfig& laser, const TransducerModel& td,
              const AcquisitionConfig& acq, std::uint64_t pulse_index = 0,
              std::span<const StaticAbsorber> static_absorbers = {});

}  // namespace pamon
