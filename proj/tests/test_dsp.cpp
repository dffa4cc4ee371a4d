#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "pamon/acoustic.hpp"
#include "pamon/dsp.hpp"
#include "pamon/errors.hpp"

using namespace pamon;

namespace {

// Gaussian-enveloped 5 MHz tone whose analytic envelope peaks at `center`
// samples with height `amp`.
Trace tone_burst(double amp, double center, std::size_t n = 2048, double sigma_t = 0.3e-6) {
  Trace t{std::vector<double>(n, 0.0), 100e6};
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = (static_cast<double>(i) - center) / 100e6;
    t.samples[i] = amp * std::exp(-0.5 * dt * dt / (sigma_t * sigma_t)) *
                   std::cos(2.0 * std::numbers::pi * 5e6 * dt);
  }
  return t;
}

TissueState tissue_with(double mu) {
  TissueState s = TissueState::initial(TreatmentKinetics{}, 2.4e-3, 0);
  s.mu_a_current = mu;
  return s;
}

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("analytic envelope of a tone burst") {
  const Trace t = tone_burst(2.0, 700.0);
  const auto env = analytic_envelope(t.samples);
  const auto peak = std::max_element(env.begin(), env.end()) - env.begin();
  CHECK(peak == 700);
  CHECK(env[700] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(env[700 + 30] == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-3));
}

TEST_CASE("noiseless arrival: amplitude within 2 percent, time within a sample") {
  const Trace t = tone_burst(1.5, 812.0);
  const PeakResult r = extract_peak(t, WaveletConfig{}, PeakSelector{});
  CHECK_FALSE(r.low_confidence);
  CHECK(r.sample.amplitude == doctest::Approx(1.5).epsilon(0.02));
  CHECK(std::abs(static_cast<double>(r.peak_sample) - 812.0) <= 1.0);
  CHECK(r.peak_time == doctest::Approx(812e-8));
}

TEST_CASE("all-zero trace is reported with low confidence") {
  const Trace t{std::vector<double>(2048, 0.0), 100e6};
  const PeakResult r = extract_peak(t, WaveletConfig{}, PeakSelector{});
  CHECK(r.sample.amplitude == 0.0);
  CHECK(r.low_confidence);
}

TEST_CASE("single arrival: global max equals the first envelope peak") {
  Trace t = tone_burst(1.0, 400.0);
  t.irradiation_time = 3.4;
  t.pulse_index = 17;
  PeakSelector nth;
  nth.mode = PeakMode::NthEnvelopePeak;
  nth.peak_index = 1;
  const PeakResult a = extract_peak(t, WaveletConfig{}, PeakSelector{});
  const PeakResult b = extract_peak(t, WaveletConfig{}, nth);
  CHECK(a.sample == b.sample);
  CHECK(a.peak_sample == b.peak_sample);
  CHECK(a.sample.irradiation_time == 3.4);
  CHECK(a.sample.pulse_index == 17);
}

TEST_CASE("second envelope peak selects the later arrival") {
  Trace t = tone_burst(2.0, 300.0);
  const Trace late = tone_burst(0.8, 900.0);
  for (std::size_t i = 0; i < t.samples.size(); ++i) t.samples[i] += late.samples[i];
  PeakSelector sel;
  sel.mode = PeakMode::NthEnvelopePeak;
  sel.peak_index = 2;
  const PeakResult r = extract_peak(t, WaveletConfig{}, sel);
  CHECK_FALSE(r.low_confidence);
  CHECK(std::abs(static_cast<double>(r.peak_sample) - 900.0) <= 1.0);
  CHECK(r.sample.amplitude == doctest::Approx(0.8).epsilon(0.02));
  sel.peak_index = 3;
  CHECK(extract_peak(t, WaveletConfig{}, sel).low_confidence);
  CHECK(std::abs(static_cast<double>(extract_peak(t, WaveletConfig{}, PeakSelector{}).peak_sample) - 300.0) <= 1.0);
}

TEST_CASE("search window restricts the peak") {
  Trace t = tone_burst(2.0, 300.0);
  const Trace late = tone_burst(0.8, 900.0);
  for (std::size_t i = 0; i < t.samples.size(); ++i) t.samples[i] += late.samples[i];
  PeakSelector sel;
  sel.search_window = {6e-6, 12e-6};
  const PeakResult r = extract_peak(t, WaveletConfig{}, sel);
  CHECK(std::abs(static_cast<double>(r.peak_sample) - 900.0) <= 1.0);
  sel.search_window = {0.0, 30e-6};
  CHECK_THROWS_AS(extract_peak(t, WaveletConfig{}, sel), InvalidArgument);
  sel = {};
  sel.peak_index = 0;
  CHECK_THROWS_AS(sel.validate(t), InvalidArgument);
}

TEST_CASE("peak time is shift covariant") {
  const AcquisitionConfig acq;
  const auto clean = clean_signal(tissue_with(100.0), OpticalProperties{}, LaserPulseConfig{},
                                  TransducerModel{}, acq);
  const Trace base{clean, acq.sample_rate};
  const std::size_t p0 = extract_peak(base, WaveletConfig{}, PeakSelector{}).peak_sample;
  for (std::size_t m : {1u, 2u, 3u, 7u, 50u, 333u}) {
    Trace shifted{std::vector<double>(clean.size(), 0.0), acq.sample_rate};
    for (std::size_t i = 0; i + m < clean.size(); ++i) shifted.samples[i + m] = clean[i];
    CHECK(extract_peak(shifted, WaveletConfig{}, PeakSelector{}).peak_sample == p0 + m);
  }
}

TEST_CASE("amplitude is homogeneous of degree one") {
  const AcquisitionConfig acq;
  const auto clean = clean_signal(tissue_with(100.0), OpticalProperties{}, LaserPulseConfig{},
                                  TransducerModel{}, acq);
  const Trace base{clean, acq.sample_rate};
  const double a = extract_peak(base, WaveletConfig{}, PeakSelector{}).sample.amplitude;
  for (double c : {0.01, 0.5, 3.0, 250.0}) {
    Trace scaled = base;
    for (auto& v : scaled.samples) v *= c;
    const double b = extract_peak(scaled, WaveletConfig{}, PeakSelector{}).sample.amplitude;
    CHECK(std::abs(b - c * a) / (c * a) < 1e-9);
  }
}

TEST_CASE("default bands retain at least 80 percent of a clean arrival") {
  const AcquisitionConfig acq;
  const auto clean = clean_signal(tissue_with(100.0), OpticalProperties{}, LaserPulseConfig{},
                                  TransducerModel{}, acq);
  const auto env = analytic_envelope(clean);
  const double full = *std::max_element(env.begin(), env.end());
  const double selected = extract_peak(Trace{clean, acq.sample_rate}, WaveletConfig{}, PeakSelector{})
                              .sample.amplitude;
  CHECK(selected >= 0.8 * full);
  CHECK(selected <= 1.05 * full);
}

TEST_CASE("snr in decibels") {
  Trace t{std::vector<double>(2000, 0.0), 100e6};
  for (std::size_t i = 1000; i < 2000; ++i) t.samples[i] = (i % 2 ? 0.1 : -0.1);
  t.samples[200] = 1.0;
  const TimeWindow signal{0.0, 9e-6}, noise{10e-6, 19.99e-6};
  CHECK(snr_db(t, noise, signal) == doctest::Approx(20.0).epsilon(1e-9));

  Trace quiet{std::vector<double>(2000, 0.0), 100e6};
  quiet.samples[200] = 1.0;
  CHECK(std::isinf(snr_db(quiet, noise, signal)));
  CHECK(snr_db(quiet, noise, signal) > 0.0);

  CHECK_THROWS_AS(snr_db(t, TimeWindow{5e-6, 12e-6}, signal), InvalidArgument);
  CHECK_THROWS_AS(snr_db(t, TimeWindow{10e-6, 30e-6}, signal), InvalidArgument);
}

TEST_CASE("averaging sixty traces gains about 17.8 dB") {
  OpticalProperties props;
  LaserPulseConfig laser;
  TransducerModel td;
  // Peak-based SNR is biased upward when noise is comparable to the peak, so
  // the sqrt(N) law is checked where the single-trace SNR is already high.
  AcquisitionConfig one, sixty;
  one.num_averages = 1;
  one.seed = sixty.seed = 5;
  one.noise_sigma = sixty.noise_sigma = 0.02;
  const TimeWindow signal{1.5e-6, 1.7e-6}, noise{6e-6, 20e-6};
  double gain = 0.0;
  const int reps = 30;
  for (int r = 0; r < reps; ++r) {
    const TissueState s = tissue_with(100.0);
    gain += snr_db(acquire(s, props, laser, td, sixty, r), noise, signal) -
            snr_db(acquire(s, props, laser, td, one, r), noise, signal);
  }
  CHECK(std::abs(gain / reps - 10.0 * std::log10(60.0)) <= 1.0);
}

TEST_CASE("robust noise estimate") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<double> v(20000);
  for (auto& x : v) x = n(rng);
  CHECK(mad_sigma(v) == doctest::Approx(0.3).epsilon(0.03));
  v[0] = 1e6;  // an outlier barely moves it
  CHECK(mad_sigma(v) == doctest::Approx(0.3).epsilon(0.03));
}

TEST_CASE("envelope peak finder honours threshold and separation") {
  std::vector<double> env(100, 0.0);
  env[10] = 1.0;
  env[14] = 0.9;  // too close to 10
  env[40] = 0.5;
  env[70] = 0.05;  // below threshold
  const auto p = find_envelope_peaks(env, 0, 99, 0.1, 10);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == 10);
  CHECK(p[1] == 40);
  CHECK(find_envelope_peaks(env, 20, 99, 0.1, 10) == std::vector<std::size_t>{40});
}

TEST_CASE("peak mode names round-trip") {
  CHECK(peak_mode_from_string("global_max") == PeakMode::GlobalMax);
  CHECK(peak_mode_from_string(to_string(PeakMode::NthEnvelopePeak)) == PeakMode::NthEnvelopePeak);
  CHECK_THROWS_AS(peak_mode_from_string("first"), InvalidArgument);
}

}  // TEST_SUITE
