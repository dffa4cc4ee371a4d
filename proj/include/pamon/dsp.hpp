#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "pamon/acoustic.hpp"
#include "pamon/wavelet.hpp"

namespace pamon {

/// Closed time interval in seconds, relative to the trace trigger.
struct TimeWindow {
  double begin = 0.0;
  double end = 0.0;

  bool contains(double t) const { return t >= begin && t <= end; }
  bool overlaps(const TimeWindow& o) const { return begin <= o.end && o.begin <= end; }
};

enum class PeakMode { GlobalMax, NthEnvelopePeak };

std::string_view to_string(PeakMode m);
PeakMode peak_mode_from_string(std::string_view s);

struct PeakSelector {
  PeakMode mode = PeakMode::GlobalMax;
  std::size_t peak_index = 1;  // 1-based, NthEnvelopePeak only
  TimeWindow search_window{0.0, 20.48e-6};
  // Envelope local maxima count as peaks only above both
  // min_relative_height * (window maximum) and noise_factor * (noise estimate),
  // and must be at least min_separation apart.
  double min_relative_height = 0.1;
  double noise_factor = 5.0;
  double min_separation = 0.3e-6;  // s

  void validate(const Trace& trace) const;
};

struct AmplitudeSample {
  double irradiation_time = 0.0;  // s
  double amplitude = 0.0;         // V
  std::uint64_t pulse_index = 0;

  bool operator==(const AmplitudeSample&) const = default;
};

struct PeakResult {
  AmplitudeSample sample;
  std::size_t peak_sample = 0;  // index into the trace
  double peak_time = 0.0;       // s after trigger
  bool low_confidence = false;
};

/// Magnitude of the analytic signal (FFT-based Hilbert pair).
std::vector<double> analytic_envelope(std::span<const double> signal);

/// Band-limited copy of `signal`: stationary wavelet transform with the
/// configured family and levels, inverse over the selected bands only.
std::vector<double> band_limit(std::span<const double> signal, const WaveletConfig& cfg);

/// Robust noise standard deviation from the median absolute deviation.
double mad_sigma(std::span<const double> values);

/// Indices of envelope peaks inside [lo, hi] above `threshold`, at least
/// `min_gap` samples apart (the taller of two close peaks wins), in time order.
std::vector<std::size_t> find_envelope_peaks(std::span<const double> envelope, std::size_t lo,
                                             std::size_t hi, double threshold,
                                             std::size_t min_gap);

/// Selected PA peak of one trace. When no envelope peak clears the detection
/// threshold (or fewer than peak_index exist) the largest envelope sample in the
/// window is returned with low_confidence set.
PeakResult extract_peak(const Trace& trace, const WaveletConfig& wl, const PeakSelector& sel);

/// 20 log10(max |signal window| / std(noise window)). A zero-variance noise
/// window yields +infinity. Throws InvalidArgument for overlapping windows or
/// windows outside the trace.
double snr_db(const Trace& trace, const TimeWindow& noise_window,
              const TimeWindow& signal_window);

}  // namespace pamon
