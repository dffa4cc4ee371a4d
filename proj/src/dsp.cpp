#include "pamon/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <string>

#include "pamon/errors.hpp"

namespace pamon {

namespace {

// fftw planning is not thread safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (data == nullptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

struct FftwPlan {
  FftwPlan(int n, fftw_complex* in, fftw_complex* out, int sign) {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(n, in, out, sign, FFTW_ESTIMATE);
  }
  ~FftwPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
  fftw_plan plan;
};

std::pair<std::size_t, std::size_t> window_indices(const Trace& trace, const TimeWindow& w) {
  const double fs = trace.sample_rate;
  const auto n = static_cast<double>(trace.samples.size());
  const double lo = std::ceil((w.begin - trace.t0) * fs - 1e-9);
  const double hi = std::floor((w.end - trace.t0) * fs + 1e-9);
  const double clo = std::clamp(lo, 0.0, n - 1.0);
  const double chi = std::clamp(hi, 0.0, n - 1.0);
  return {static_cast<std::size_t>(clo), static_cast<std::size_t>(chi)};
}

}  // namespace

std::string_view to_string(PeakMode m) {
  return m == PeakMode::GlobalMax ? "global_max" : "nth_envelope_peak";
}

PeakMode peak_mode_from_string(std::string_view s) {
  if (s == "global_max") return PeakMode::GlobalMax;
  if (s == "nth_envelope_peak") return PeakMode::NthEnvelopePeak;
  throw InvalidArgument("unknown peak mode '" + std::string(s) + "'");
}

void PeakSelector::validate(const Trace& trace) const {
  if (peak_index < 1) throw InvalidArgument("peak_index must be >= 1");
  if (!(search_window.begin < search_window.end))
    throw InvalidArgument("search_window must be non-empty");
  const double end = trace.t0 + trace.duration();
  if (search_window.begin < trace.t0 - 1e-12 || search_window.end > end + 1e-12)
    throw InvalidArgument("search_window lies outside the trace");
}

std::vector<double> analytic_envelope(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n == 0) return {};
  FftwBuffer buf(n);
  FftwPlan forward(static_cast<int>(n), buf.data, buf.data, FFTW_FORWARD);
  FftwPlan backward(static_cast<int>(n), buf.data, buf.data, FFTW_BACKWARD);

  for (std::size_t i = 0; i < n; ++i) {
    buf.data[i][0] = signal[i];
    buf.data[i][1] = 0.0;
  }
  fftw_execute(forward.plan);
  // Keep DC (and Nyquist for even n), double positive frequencies, drop negative.
  const std::size_t positive_end = (n + 1) / 2;
  for (std::size_t k = 1; k < positive_end; ++k) {
    buf.data[k][0] *= 2.0;
    buf.data[k][1] *= 2.0;
  }
  for (std::size_t k = n / 2 + 1; k < n; ++k) buf.data[k][0] = buf.data[k][1] = 0.0;
  fftw_execute(backward.plan);

  std::vector<double> env(n);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) env[i] = std::hypot(buf.data[i][0], buf.data[i][1]) * inv;
  return env;
}

std::vector<double> band_limit(std::span<const double> signal, const WaveletConfig& cfg) {
  cfg.validate(signal.size());
  const auto bands = swt_decompose(signal, cfg.family, cfg.levels);
  return swt_reconstruct_bands(bands, cfg.selected_bands);
}

double mad_sigma(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> v(values.begin(), values.end());
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double median = *mid;
  for (double& x : v) x = std::abs(x - median);
  std::nth_element(v.begin(), mid, v.end());
  return *mid / 0.6744897501960817;
}

std::vector<std::size_t> find_envelope_peaks(std::span<const double> envelope, std::size_t lo,
                                             std::size_t hi, double threshold,
                                             std::size_t min_gap) {
  std::vector<std::size_t> peaks;
  if (envelope.empty() || lo > hi) return peaks;
  hi = std::min(hi, envelope.size() - 1);
  for (std::size_t i = lo; i <= hi; ++i) {
    const double v = envelope[i];
    if (!(v > threshold)) continue;
    const bool left_ok = i == 0 || envelope[i - 1] < v;
    const bool right_ok = i + 1 >= envelope.size() || envelope[i + 1] <= v;
    if (!left_ok || !right_ok) continue;
    if (!peaks.empty() && i - peaks.back() < min_gap) {
      if (v > envelope[peaks.back()]) peaks.back() = i;
      continue;
    }
    peaks.push_back(i);
  }
  return peaks;
}

PeakResult extract_peak(const Trace& trace, const WaveletConfig& wl, const PeakSelector& sel) {
  if (trace.samples.empty()) throw InvalidArgument("extract_peak: empty trace");
  sel.validate(trace);

  const auto limited = band_limit(trace.samples, wl);
  const auto envelope = analytic_envelope(limited);
  const auto [lo, hi] = window_indices(trace, sel.search_window);

  std::size_t max_at = lo;
  for (std::size_t i = lo; i <= hi; ++i)
    if (envelope[i] > envelope[max_at]) max_at = i;
  const double window_max = envelope[max_at];

  const double threshold =
      std::max(sel.min_relative_height * window_max, sel.noise_factor * mad_sigma(limited));
  const auto min_gap = static_cast<std::size_t>(std::llround(sel.min_separation * trace.sample_rate));
  const auto peaks = find_envelope_peaks(envelope, lo, hi, threshold, std::max<std::size_t>(1, min_gap));

  PeakResult r;
  r.low_confidence = true;
  r.peak_sample = max_at;
  if (sel.mode == PeakMode::GlobalMax) {
    if (!peaks.empty()) {
      r.peak_sample = *std::max_element(peaks.begin(), peaks.end(), [&](auto a, auto b) {
        return envelope[a] < envelope[b];
      });
      r.low_confidence = false;
    }
  } else if (peaks.size() >= sel.peak_index) {
    r.peak_sample = peaks[sel.peak_index - 1];
    r.low_confidence = false;
  }
  r.peak_time = trace.time_at(r.peak_sample);
  r.sample.amplitude = envelope[r.peak_sample];
  r.sample.irradiation_time = trace.irradiation_time;
  r.sample.pulse_index = trace.pulse_index;
  return r;
}

double snr_db(const Trace& trace, const TimeWindow& noise_window,
              const TimeWindow& signal_window) {
  if (noise_window.overlaps(signal_window))
    throw InvalidArgument("snr_db: noise and signal windows overlap");
  const double end = trace.t0 + trace.duration();
  for (const TimeWindow* w : {&noise_window, &signal_window})
    if (!(w->begin < w->end) || w->begin < trace.t0 || w->end > end)
      throw InvalidArgument("snr_db: window outside the trace");

  const auto [nlo, nhi] = window_indices(trace, noise_window);
  const auto [slo, shi] = window_indices(trace, signal_window);
  if (nhi <= nlo) throw InvalidArgument("snr_db: noise window holds fewer than two samples");

  double mean = 0.0;
  for (std::size_t i = nlo; i <= nhi; ++i) mean += trace.samples[i];
  const auto count = static_cast<double>(nhi - nlo + 1);
  mean /= count;
  double var = 0.0;
  for (std::size_t i = nlo; i <= nhi; ++i) var += (trace.samples[i] - mean) * (trace.samples[i] - mean);
  const double sd = std::sqrt(var / count);

  double peak = 0.0;
  for (std::size_t i = slo; i <= shi; ++i) peak = std::max(peak, std::abs(trace.samples[i]));
  if (sd == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak / sd);
}

}  // namespace pamon
