#include "pamon/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/random/normal_distribution.hpp>

#include "pamon/errors.hpp"
#include "pamon/random.hpp"

namespace pamon {

void TransducerModel::validate() const {
  if (!(std::isfinite(center_frequency) && center_frequency > 0.0))
    throw InvalidArgument("center_frequency must be positive");
  if (!(fractional_bandwidth > 0.0 && fractional_bandwidth < 2.0))
    throw InvalidArgument("fractional_bandwidth must lie in (0, 2)");
  if (!(std::isfinite(sensitivity) && sensitivity >= 0.0))
    throw InvalidArgument("sensitivity must be non-negative");
}

void AcquisitionConfig::validate(const TransducerModel& transducer) const {
  transducer.validate();
  if (!(std::isfinite(sample_rate) && sample_rate > 0.0))
    throw InvalidArgument("sample_rate must be positive");
  if (sample_rate < 4.0 * transducer.center_frequency)
    throw ConfigError("sample_rate must be at least 4x the transducer center frequency");
  if (num_samples == 0) throw InvalidArgument("num_samples must be positive");
  if (num_averages < 1) throw InvalidArgument("num_averages must be >= 1");
  if (!std::isfinite(gain_db)) throw InvalidArgument("gain_db must be finite");
  if (!(std::isfinite(noise_sigma) && noise_sigma >= 0.0))
    throw InvalidArgument("noise_sigma must be non-negative");
  if (!(std::isfinite(speed_of_sound) && speed_of_sound > 0.0))
    throw InvalidArgument("speed_of_sound must be positive");
  if (!(coupling_efficiency >= 0.0 && coupling_efficiency <= 1.0))
    throw InvalidArgument("coupling_efficiency must lie in [0, 1]");
  if (!(std::isfinite(absorber_radius) && absorber_radius > 0.0))
    throw InvalidArgument("absorber_radius must be positive");
}

std::vector<double> source_wavelet(double p0, double sample_rate, double half_width) {
  if (!(std::isfinite(p0) && p0 >= 0.0)) throw InvalidArgument("source_wavelet: p0 must be >= 0");
  if (!(sample_rate > 0.0 && half_width > 0.0))
    throw InvalidArgument("source_wavelet: sample_rate and half_width must be positive");
  const auto m = std::max<std::ptrdiff_t>(1, std::lround(half_width * sample_rate));
  std::vector<double> w(static_cast<std::size_t>(2 * m + 1), 0.0);
  for (std::ptrdiff_t j = 1; j <= m; ++j) {
    const double v = p0 * static_cast<double>(j) / static_cast<double>(m);
    w[static_cast<std::size_t>(m - j)] = v;
    w[static_cast<std::size_t>(m + j)] = -v;
  }
  return w;
}

double propagation_delay(double depth, double speed_of_sound) {
  if (!(std::isfinite(depth) && depth > 0.0 && std::isfinite(speed_of_sound) &&
        speed_of_sound > 0.0))
    throw InvalidArgument("propagation_delay: depth and speed of sound must be positive");
  return depth / speed_of_sound;
}

std::vector<double> transducer_impulse_response(const TransducerModel& model,
                                                double sample_rate) {
  model.validate();
  if (sample_rate < 4.0 * model.center_frequency)
    throw ConfigError("sample_rate must be at least 4x the transducer center frequency");

  // -6 dB full width of the gaussian spectrum is fractional_bandwidth * fc.
  const double bw = model.fractional_bandwidth * model.center_frequency;
  const double sigma_f = bw / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  const double sigma_t = 1.0 / (2.0 * std::numbers::pi * sigma_f);
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma_t * sample_rate));

  std::vector<double> h(static_cast<std::size_t>(2 * half + 1));
  const double w = 2.0 * std::numbers::pi * model.center_frequency;
  double gain = 0.0;
  for (std::ptrdiff_t n = -half; n <= half; ++n) {
    const double t = static_cast<double>(n) / sample_rate;
    const double v = std::exp(-0.5 * t * t / (sigma_t * sigma_t)) * std::cos(w * t);
    h[static_cast<std::size_t>(n + half)] = v;
    gain += v * std::cos(w * t);  // real part of H(fc); imaginary part vanishes by symmetry
  }
  for (double& v : h) v /= gain;
  return h;
}

std::vector<double> transducer_filter(std::span<const double> waveform,
                                      const TransducerModel& model, double sample_rate) {
  const auto h = transducer_impulse_response(model, sample_rate);
  const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(waveform.size());
  std::vector<double> out(waveform.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double x = waveform[static_cast<std::size_t>(i)];
    if (x == 0.0) continue;
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    for (std::ptrdiff_t k = lo; k <= hi; ++k)
      out[static_cast<std::size_t>(k)] += x * h[static_cast<std::size_t>(k - i + half)];
  }
  return out;
}

std::vector<double> apply_gain_db(std::span<const double> waveform, double gain_db) {
  if (!std::isfinite(gain_db)) throw InvalidArgument("apply_gain_db: gain must be finite");
  const double g = std::pow(10.0, gain_db / 20.0);
  std::vector<double> out(waveform.begin(), waveform.end());
  for (double& v : out) v *= g;
  return out;
}

Trace average_traces(std::span<const Trace> traces) {
  if (traces.empty()) throw InvalidArgument("average_traces: no traces");
  const Trace& first = traces.front();
  for (const Trace& t : traces) {
    if (t.samples.size() != first.samples.size() || t.sample_rate != first.sample_rate)
      throw InvalidArgument("average_traces: traces differ in length or sample rate");
  }
  Trace out = first;
  if (traces.size() == 1) return out;
  std::fill(out.samples.begin(), out.samples.end(), 0.0);
  for (const Trace& t : traces)
    for (std::size_t i = 0; i < t.samples.size(); ++i) out.samples[i] += t.samples[i];
  const double inv = 1.0 / static_cast<double>(traces.size());
  for (double& v : out.samples) v *= inv;
  return out;
}

namespace {

void place(std::vector<double>& buffer, std::span<const double> pulse, double arrival,
           double sample_rate) {
  const auto n = static_cast<std::ptrdiff_t>(buffer.size());
  const auto half = static_cast<std::ptrdiff_t>(pulse.size() / 2);
  const std::ptrdiff_t center = std::lround(arrival * sample_rate);
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(pulse.size()); ++j) {
    const std::ptrdiff_t k = center - half + j;
    if (k >= 0 && k < n) buffer[static_cast<std::size_t>(k)] += pulse[static_cast<std::size_t>(j)];
  }
}

}  // namespace

std::vector<double> clean_signal(const TissueState& state, const OpticalProperties& props,
                                 const LaserPulseConfig& laser, const TransducerModel& td,
                                 const AcquisitionConfig& acq,
                                 std::span<const StaticAbsorber> static_absorbers) {
  props.validate();
  laser.validate();
  acq.validate(td);

  const double fluence = laser.fluence();
  const double half_width = acq.absorber_radius / acq.speed_of_sound;
  std::vector<double> pressure(acq.num_samples, 0.0);

  auto add_source = [&](double absorption, double depth) {
    OpticalProperties p = props;
    p.absorption_coeff = absorption;
    const double p0 = initial_pressure(p, fluence);
    if (p0 == 0.0) return;
    const auto pulse = source_wavelet(p0, acq.sample_rate, half_width);
    place(pressure, pulse, propagation_delay(depth, acq.speed_of_sound), acq.sample_rate);
  };
  for (const StaticAbsorber& layer : static_absorbers) add_source(layer.absorption, layer.depth);
  add_source(state.effective_absorption(), state.depth);

  auto received = transducer_filter(pressure, td, acq.sample_rate);
  const double scale = td.sensitivity * acq.coupling_efficiency;
  for (double& v : received) v *= scale;
  return apply_gain_db(received, acq.gain_db);
}

Trace acquire(const TissueState& state, const OpticalProperties& props,
              const LaserPulseConfig& laser, const TransducerModel& td,
              const AcquisitionConfig& acq, std::uint64_t pulse_index,
              std::span<const StaticAbsorber> static_absorbers) {
  const auto clean = clean_signal(state, props, laser, td, acq, static_absorbers);

  Trace out;
  out.sample_rate = acq.sample_rate;
  out.irradiation_time = state.elapsed_irradiation;
  out.pulse_index = pulse_index;
  out.samples.assign(acq.num_samples, 0.0);

  if (acq.noise_sigma == 0.0) {
    out.samples = clean;
    return out;
  }

  // Accumulate each raw trace's noise directly into the running mean; the
  // result is the same as building num_averages traces and averaging them.
  Rng rng(derive_seed(acq.seed, streams::kAcquisition, pulse_index));
  // Ziggurat sampler; libstdc++'s polar method is ~2.5x slower here.
  boost::random::normal_distribution<double> noise(0.0, acq.noise_sigma);
  for (std::size_t r = 0; r < acq.num_averages; ++r)
    for (std::size_t i = 0; i < acq.num_samples; ++i) out.samples[i] += clean[i] + noise(rng);
  const double inv = 1.0 / static_cast<double>(acq.num_averages);
  for (double& v : out.samples) v *= inv;
  return out;
}

}  // namespace pamon
