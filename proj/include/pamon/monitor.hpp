#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "pamon/dsp.hpp"

namespace pamon {

/// Time-ordered stream of monitored peak amplitudes.
class AmplitudeSeries {
 public:
  AmplitudeSeries() = default;

  /// Throws OrderingError unless s.irradiation_time is strictly after the last
  /// sample, InvalidArgument for a non-finite or negative amplitude.
  void append(const AmplitudeSample& s);

  std::span<const AmplitudeSample> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const AmplitudeSample& back() const { return samples_.back(); }

 private:
  std::vector<AmplitudeSample> samples_;
};

/// Value-returning form of AmplitudeSeries::append.
AmplitudeSeries append(AmplitudeSeries series, const AmplitudeSample& s);

/// y = a * exp(-k t) + c with t in absolute seconds.
struct ExpFit {
  double a = 0.0;
  double k = 0.0;
  double c = 0.0;
  double r_squared = 0.0;
  bool converged = false;
  std::size_t iterations = 0;

  double operator()(double t) const;
};

struct FitOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-12;  // relative change in SSE and parameters
};

/// Damped Gauss-Newton (Levenberg-Marquardt) least-squares fit. Starting point:
/// c0 just below min(y), a0 = y(t_first) - c0, k0 from a log-linear regression
/// of y - c0. A series with zero total variance yields r_squared = 0 and
/// converged = false without iterating.
/// Throws InsufficientData with fewer than 4 points.
ExpFit fit_exponential(std::span<const double> t, std::span<const double> y,
                       const FitOptions& options = {});
ExpFit fit_exponential(const AmplitudeSeries& series, const TimeWindow& range,
                       const FitOptions& options = {});

struct MonitorConfig {
  std::size_t smoothing_window = 7;     // samples
  double slope_fall_threshold = 0.02;   // V/s
  double slope_flat_band = 0.005;       // V/s
  double oscillation_std_threshold = 0.08;  // V; the oscillation flag clears below half of it
  double stage_hold = 4.0;              // s
  double alarm_hold = 10.0;             // s
  double slope_span = 5.0;              // s, regression span of the trend slope

  void validate() const;
};

enum class DetectedStage { Insufficient, A, B, C };

std::string_view to_string(DetectedStage s);
DetectedStage detected_stage_from_string(std::string_view s);

struct StageEstimate {
  DetectedStage stage = DetectedStage::Insufficient;
  double since = 0.0;        // s, when the current stage's entry condition began to hold
  double at = 0.0;           // s, time of the newest sample
  double confidence = 0.0;   // [0, 1]
  double slope = 0.0;        // V/s
  double rolling_std = 0.0;  // V, detrended, over smoothing_window samples

  bool operator==(const StageEstimate&) const = default;
};

struct StageTransition {
  DetectedStage from = DetectedStage::Insufficient;
  DetectedStage to = DetectedStage::Insufficient;
  double since = 0.0;     // onset of the entry condition
  double decided = 0.0;   // sample time at which the hold was satisfied

  bool operator==(const StageTransition&) const = default;
};

/// Causal A -> B -> C state machine over the amplitude stream.
///
/// A: entered once smoothing_window samples exist.
/// A -> B: the oscillation flag is set, or (after a decline steeper than
///   slope_fall_threshold has held for stage_hold) the trend slope sits inside
///   +-slope_flat_band, continuously for stage_hold.
/// B -> C: the oscillation flag has been clear for stage_hold and the slope
///   over that quiet run is below -slope_flat_band.
/// The oscillation flag is a Schmitt trigger on rolling_std: it sets above
/// oscillation_std_threshold and clears below half of it. Transitions never
/// regress.
class StageClassifier {
 public:
  explicit StageClassifier(MonitorConfig cfg);

  /// Consume the newest sample; `history` is every sample so far, newest last.
  const StageEstimate& update(std::span<const AmplitudeSample> history);

  const StageEstimate& estimate() const { return estimate_; }
  const std::vector<StageTransition>& transitions() const { return transitions_; }
  const MonitorConfig& config() const { return cfg_; }

 private:
  void enter(DetectedStage to, double since, double now);

  MonitorConfig cfg_;
  StageEstimate estimate_;
  std::vector<StageTransition> transitions_;
  bool oscillating_ = false;
  bool decline_confirmed_ = false;
  std::optional<double> decline_onset_;
  std::optional<double> b_onset_;
  std::optional<double> quiet_onset_;
};

/// Batch classification: the classifier run over every prefix of the series.
StageEstimate classify_stage(const AmplitudeSeries& series, const MonitorConfig& cfg);
std::vector<StageTransition> stage_transitions(const AmplitudeSeries& series,
                                               const MonitorConfig& cfg);

enum class AlarmReason { None, ScorchOnset, ProlongedScorch };

std::string_view to_string(AlarmReason r);

struct Alarm {
  bool active = false;
  std::optional<double> raised_at;
  AlarmReason reason = AlarmReason::None;

  bool operator==(const Alarm&) const = default;
};

/// Latching overtreatment alarm. Raises ScorchOnset (raised_at = est.at) the
/// first time stage C is seen and upgrades to ProlongedScorch once C has lasted
/// alarm_hold. An active alarm is never cleared; start from Alarm{} to reset.
Alarm overtreatment_alarm(const Alarm& previous, const StageEstimate& est,
                          const MonitorConfig& cfg);

/// True iff every full-window moving average of the amplitudes lies in
/// [band_low, band_high] and the smoothed trend slope is <= slope_flat_band.
/// Throws InsufficientData with fewer than smoothing_window samples.
bool baseline_check(const AmplitudeSeries& series, double band_low, double band_high,
                    const MonitorConfig& cfg);

struct MonitorRow {
  std::uint64_t pulse_index = 0;
  double irradiation_time = 0.0;
  double amplitude = 0.0;
  DetectedStage stage = DetectedStage::Insufficient;
  bool alarm_active = false;
};

struct MonitorSnapshot {
  std::size_t sample_count = 0;
  std::optional<AmplitudeSample> last;
  StageEstimate estimate;
  Alarm alarm;
};

/// Series, classifier and alarm advanced together, one sample at a time. A
/// single writer calls append(); snapshot() may be called from any thread.
class Monitor {
 public:
  explicit Monitor(MonitorConfig cfg);

  /// Same errors as AmplitudeSeries::append; on error nothing changes.
  const StageEstimate& append(const AmplitudeSample& s);

  const AmplitudeSeries& series() const { return series_; }
  const StageEstimate& estimate() const { return classifier_.estimate(); }
  const Alarm& alarm() const { return alarm_; }
  const std::vector<StageTransition>& transitions() const { return classifier_.transitions(); }
  const std::vector<MonitorRow>& rows() const { return rows_; }
  const MonitorConfig& config() const { return classifier_.config(); }

  std::shared_ptr<const MonitorSnapshot> snapshot() const;

 private:
  AmplitudeSeries series_;
  StageClassifier classifier_;
  Alarm alarm_;
  std::vector<MonitorRow> rows_;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const MonitorSnapshot> snapshot_;
};

/// Columns: pulse_index,irradiation_time_s,amplitude_v,stage,alarm_active.
/// Floating-point values are printed with 17 significant digits.
void write_monitor_csv(std::ostream& out, std::span<const MonitorRow> rows);

}  // namespace pamon
