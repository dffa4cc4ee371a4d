#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "pamon/acoustic.hpp"
#include "pamon/dsp.hpp"
#include "pamon/errors.hpp"

using namespace pamon;

namespace {

double population_std(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / v.size());
}

TissueState tissue_with(double mu) {
  TreatmentKinetics k;
  TissueState s = TissueState::initial(k, 2.4e-3, 0);
  s.mu_a_current = mu;
  return s;
}

}  // namespace

TEST_SUITE("acoustic") {

TEST_CASE("source wavelet: zero, linear, zero-mean and antisymmetric") {
  const auto zero = source_wavelet(0.0, 100e6, 0.1e-3 / 1500.0);
  CHECK(std::all_of(zero.begin(), zero.end(), [](double x) { return x == 0.0; }));

  const auto a = source_wavelet(500.0, 100e6, 0.1e-3 / 1500.0);
  const auto b = source_wavelet(1000.0, 100e6, 0.1e-3 / 1500.0);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() % 2 == 1);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == 2.0 * a[i]);

  const double peak = *std::max_element(a.begin(), a.end());
  CHECK(peak == doctest::Approx(500.0));
  const double sum = std::accumulate(a.begin(), a.end(), 0.0);
  CHECK(std::abs(sum / a.size()) < 1e-12 * peak);
  const std::size_t m = a.size() / 2;
  for (std::size_t j = 0; j <= m; ++j) CHECK(a[m - j] == -a[m + j]);
  CHECK(a.front() > 0.0);

  CHECK_THROWS_AS(source_wavelet(-1.0, 100e6, 1e-7), InvalidArgument);
}

TEST_CASE("propagation delay is depth over speed") {
  CHECK(propagation_delay(2.4e-3, 1500.0) == doctest::Approx(1.6e-6).epsilon(1e-12));
  CHECK(propagation_delay(0.0015, 1500.0) == doctest::Approx(1.0e-6).epsilon(1e-12));
  CHECK(propagation_delay(4.8e-3, 1500.0) == doctest::Approx(2.0 * propagation_delay(2.4e-3, 1500.0)));
  CHECK_THROWS_AS(propagation_delay(0.0, 1500.0), InvalidArgument);
  CHECK_THROWS_AS(propagation_delay(1e-3, -1.0), InvalidArgument);
}

TEST_CASE("transducer filter: linear, zero-preserving") {
  TransducerModel td;
  std::vector<double> zero(512, 0.0);
  const auto z = transducer_filter(zero, td, 100e6);
  CHECK(std::all_of(z.begin(), z.end(), [](double x) { return x == 0.0; }));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::vector<double> x(512), x3(512);
  for (std::size_t i = 0; i < x.size(); ++i) x3[i] = 3.0 * (x[i] = n(rng));
  const auto y = transducer_filter(x, td, 100e6);
  const auto y3 = transducer_filter(x3, td, 100e6);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y3[i] == doctest::Approx(3.0 * y[i]).epsilon(1e-12));
}

TEST_CASE("transducer impulse response peaks at the center frequency") {
  TransducerModel td;
  const double fs = 100e6;
  std::vector<double> impulse(1024, 0.0);
  impulse[512] = 1.0;
  const auto h = transducer_filter(impulse, td, fs);
  const auto ir = transducer_impulse_response(td, fs);
  const std::size_t half = ir.size() / 2;
  for (std::size_t j = 0; j < ir.size(); ++j) CHECK(h[512 - half + j] == doctest::Approx(ir[j]));

  // Independent oracle: direct DFT magnitude on a 10 kHz grid.
  double best_f = 0.0, best_mag = -1.0;
  for (double f = 0.5e6; f <= 20e6; f += 1e4) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i)
      acc += h[i] * std::polar(1.0, -2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
    if (std::abs(acc) > best_mag) best_mag = std::abs(acc), best_f = f;
  }
  CHECK(best_f >= 4.5e6);
  CHECK(best_f <= 5.5e6);
  CHECK(best_mag == doctest::Approx(1.0).epsilon(0.01));  // unit gain at fc
}

TEST_CASE("sampling below four times the center frequency is a configuration error") {
  TransducerModel td;
  std::vector<double> x(64, 1.0);
  CHECK_THROWS_AS(transducer_filter(x, td, 15e6), ConfigError);
  AcquisitionConfig acq;
  acq.sample_rate = 19.9e6;
  CHECK_THROWS_AS(acq.validate(td), ConfigError);
  acq = {};
  acq.num_averages = 0;
  CHECK_THROWS_AS(acq.validate(td), InvalidArgument);
  td.fractional_bandwidth = 2.0;
  CHECK_THROWS_AS(td.validate(), InvalidArgument);
}

TEST_CASE("gain in decibels") {
  const std::vector<double> x{1.0, -2.0, 0.5};
  CHECK(apply_gain_db(x, 0.0) == x);
  const auto g20 = apply_gain_db(x, 20.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(g20[i] == doctest::Approx(10.0 * x[i]));
  const double g46 = std::pow(10.0, 2.3);
  CHECK(g46 == doctest::Approx(199.526).epsilon(2e-6));
  const auto y = apply_gain_db(x, 46.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(g46 * x[i]).epsilon(1e-14));
}

TEST_CASE("averaging traces") {
  Trace a{{1.0, -2.0, 3.0}, 100e6, 0.0, 4.2, 7};
  CHECK(average_traces(std::span<const Trace>(&a, 1)) == a);

  Trace neg = a;
  for (auto& v : neg.samples) v = -v;
  neg.pulse_index = 8;
  const std::vector<Trace> pair{a, neg};
  const Trace z = average_traces(pair);
  CHECK(std::all_of(z.samples.begin(), z.samples.end(), [](double v) { return v == 0.0; }));
  CHECK(z.pulse_index == 7);
  CHECK(z.irradiation_time == 4.2);

  CHECK_THROWS_AS(average_traces(std::span<const Trace>{}), InvalidArgument);
  Trace shorter{{1.0}, 100e6};
  const std::vector<Trace> bad{a, shorter};
  CHECK_THROWS_AS(average_traces(bad), InvalidArgument);
  Trace other_rate = a;
  other_rate.sample_rate = 50e6;
  const std::vector<Trace> bad2{a, other_rate};
  CHECK_THROWS_AS(average_traces(bad2), InvalidArgument);
}

TEST_CASE("sixty noise traces average down by sqrt(60)") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n;
  std::vector<Trace> raw(60, Trace{std::vector<double>(256), 100e6});
  double sum_std = 0.0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    for (auto& t : raw)
      for (auto& v : t.samples) v = n(rng);
    sum_std += population_std(average_traces(raw).samples);
  }
  const double expected = 1.0 / std::sqrt(60.0);
  CHECK(expected == doctest::Approx(0.129).epsilon(0.01));
  CHECK(std::abs(sum_std / reps - expected) / expected < 0.10);
}

TEST_CASE("acquire: zero absorption leaves only averaged noise") {
  OpticalProperties props;
  LaserPulseConfig laser;
  TransducerModel td;
  AcquisitionConfig acq;
  const Trace t = acquire(tissue_with(0.0), props, laser, td, acq, 1);
  REQUIRE(t.samples.size() == acq.num_samples);
  const double floor = 5.0 * acq.noise_sigma / std::sqrt(60.0);
  for (double v : t.samples) CHECK(std::abs(v) <= floor);
}

TEST_CASE("acquire: envelope peak arrives at depth over speed of sound") {
  OpticalProperties props;
  LaserPulseConfig laser;
  TransducerModel td;
  AcquisitionConfig acq;
  acq.seed = 42;
  const Trace t = acquire(tissue_with(100.0), props, laser, td, acq, 1);
  const auto env = analytic_envelope(t.samples);
  const auto peak = std::max_element(env.begin(), env.end()) - env.begin();
  CHECK(std::abs(t.time_at(static_cast<std::size_t>(peak)) - 1.6e-6) <= 1.0 / acq.sample_rate);
}

TEST_CASE("acquire is deterministic under its seed") {
  OpticalProperties props;
  LaserPulseConfig laser;
  TransducerModel td;
  AcquisitionConfig acq;
  acq.seed = 9;
  const TissueState s = tissue_with(80.0);
  const Trace a = acquire(s, props, laser, td, acq, 3);
  const Trace b = acquire(s, props, laser, td, acq, 3);
  CHECK(a == b);
  CHECK(a.samples != acquire(s, props, laser, td, acq, 4).samples);
  acq.seed = 10;
  CHECK(a.samples != acquire(s, props, laser, td, acq, 3).samples);
}

TEST_CASE("acquire without noise is linear in absorption") {
  OpticalProperties props;
  LaserPulseConfig laser;
  TransducerModel td;
  AcquisitionConfig acq;
  acq.noise_sigma = 0.0;
  const Trace ref = acquire(tissue_with(25.0), props, laser, td, acq);
  const double ref_peak = *std::max_element(ref.samples.begin(), ref.samples.end());
  for (double mu : {50.0, 100.0}) {
    const Trace t = acquire(tissue_with(mu), props, laser, td, acq);
    const double peak = *std::max_element(t.samples.begin(), t.samples.end());
    CHECK(std::abs(peak / ref_peak - mu / 25.0) / (mu / 25.0) < 1e-9);
  }
}

TEST_CASE("residual noise scales as one over sqrt(N)") {
  OpticalProperties props;
  LaserPulseConfig laser;
  TransducerModel td;
  for (std::size_t n : {1u, 4u, 16u, 60u}) {
    AcquisitionConfig acq;
    acq.num_averages = n;
    acq.seed = 77;
    double sum = 0.0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r)
      sum += population_std(acquire(tissue_with(0.0), props, laser, td, acq, r).samples);
    const double expected = acq.noise_sigma / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(sum / reps - expected) / expected < 0.10);
  }
}

TEST_CASE("static absorbers add an earlier arrival") {
  OpticalProperties props;
  LaserPulseConfig laser;
  TransducerModel td;
  AcquisitionConfig acq;
  const std::vector<StaticAbsorber> skin{{1.2e-3, 20.0}};
  const auto with = clean_signal(tissue_with(0.0), props, laser, td, acq, skin);
  const auto env = analytic_envelope(with);
  const auto peak = std::max_element(env.begin(), env.end()) - env.begin();
  CHECK(std::abs(static_cast<double>(peak) - 80.0) <= 1.0);  // 1.2 mm / 1500 m/s = 0.8 us
}

}  // TEST_SUITE
