#include "pamon/monitor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "pamon/errors.hpp"

namespace pamon {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_std = 0.0;
};

LineFit fit_line(std::span<const AmplitudeSample> s) {
  LineFit f;
  const auto n = static_cast<double>(s.size());
  if (s.size() < 2) return f;
  double mt = 0.0, my = 0.0;
  for (const auto& x : s) {
    mt += x.irradiation_time;
    my += x.amplitude;
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0;
  for (const auto& x : s) {
    const double dt = x.irradiation_time - mt;
    stt += dt * dt;
    sty += dt * (x.amplitude - my);
  }
  f.slope = stt > 0.0 ? sty / stt : 0.0;
  f.intercept = my - f.slope * mt;
  if (s.size() > 2) {
    double ssr = 0.0;
    for (const auto& x : s) {
      const double r = x.amplitude - (f.intercept + f.slope * x.irradiation_time);
      ssr += r * r;
    }
    f.residual_std = std::sqrt(ssr / (n - 2.0));
  }
  return f;
}

// Samples with time >= t_from, but never fewer than `min_count` (when available).
std::span<const AmplitudeSample> tail_since(std::span<const AmplitudeSample> h, double t_from,
                                            std::size_t min_count) {
  auto it = std::lower_bound(h.begin(), h.end(), t_from, [](const AmplitudeSample& s, double t) {
    return s.irradiation_time < t;
  });
  auto count = static_cast<std::size_t>(h.end() - it);
  count = std::min(h.size(), std::max(count, min_count));
  return h.last(count);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Solve the 3x3 system m x = b by Gaussian elimination with partial pivoting.
bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> b,
            std::array<double, 3>& x) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (m[piv][col] == 0.0 || !std::isfinite(m[piv][col])) return false;
    std::swap(m[piv], m[col]);
    std::swap(b[piv], b[col]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 3; ++c) m[r][c] -= f * m[col][c];
      b[r] -= f * b[col];
    }
  }
  for (int r = 2; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < 3; ++c) s -= m[r][c] * x[c];
    x[r] = s / m[r][r];
  }
  return std::isfinite(x[0]) && std::isfinite(x[1]) && std::isfinite(x[2]);
}

}  // namespace

void AmplitudeSeries::append(const AmplitudeSample& s) {
  if (!std::isfinite(s.amplitude) || s.amplitude < 0.0)
    throw InvalidArgument("amplitude must be finite and non-negative");
  if (!std::isfinite(s.irradiation_time) || s.irradiation_time < 0.0)
    throw InvalidArgument("irradiation_time must be finite and non-negative");
  if (!samples_.empty() && !(s.irradiation_time > samples_.back().irradiation_time))
    throw OrderingError("sample at t=" + std::to_string(s.irradiation_time) +
                        " s does not follow t=" +
                        std::to_string(samples_.back().irradiation_time) + " s");
  samples_.push_back(s);
}

AmplitudeSeries append(AmplitudeSeries series, const AmplitudeSample& s) {
  series.append(s);
  return series;
}

double ExpFit::operator()(double t) const { return a * std::exp(-k * t) + c; }

ExpFit fit_exponential(std::span<const double> t, std::span<const double> y,
                       const FitOptions& options) {
  if (t.size() != y.size()) throw InvalidArgument("fit_exponential: t and y differ in length");
  const std::size_t n = t.size();
  if (n < 4) throw InsufficientData("fit_exponential needs at least 4 samples");

  const double t0 = t.front();
  const double ymean = [&] {
    double s = 0.0;
    for (double v : y) s += v;
    return s / static_cast<double>(n);
  }();
  double ss_tot = 0.0;
  for (double v : y) ss_tot += (v - ymean) * (v - ymean);

  ExpFit fit;
  const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
  const double yrange = *ymax_it - *ymin_it;
  if (!(ss_tot > 1e-24 * std::max(1.0, ymean * ymean) * static_cast<double>(n))) {
    fit.c = ymean;
    return fit;
  }

  // Work in tau = t - t0; the fitted scale is mapped back to absolute t at the end.
  const double eps = 0.01 * yrange;
  double c = *ymin_it - eps;
  double k = 0.0;
  {
    double mt = 0.0, mz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mt += t[i] - t0;
      mz += std::log(y[i] - c);
    }
    mt /= static_cast<double>(n);
    mz /= static_cast<double>(n);
    double stt = 0.0, stz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dt = t[i] - t0 - mt;
      stt += dt * dt;
      stz += dt * (std::log(y[i] - c) - mz);
    }
    k = stt > 0.0 ? -stz / stt : 0.0;
    const double span = t.back() - t0;
    if (!(k > 0.0) && span > 0.0) k = 1.0 / span;
  }
  double a = y.front() - c;

  auto sse_of = [&](double pa, double pk, double pc) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - (pa * std::exp(-pk * (t[i] - t0)) + pc);
      s += r * r;
    }
    return s;
  };

  double sse = sse_of(a, k, c);
  double lambda = 1e-3;
  bool converged = false;
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    std::array<std::array<double, 3>, 3> jtj{};
    std::array<double, 3> jtr{};
    for (std::size_t i = 0; i < n; ++i) {
      const double tau = t[i] - t0;
      const double e = std::exp(-k * tau);
      const std::array<double, 3> g{e, -a * tau * e, 1.0};
      const double r = y[i] - (a * e + c);
      for (int p = 0; p < 3; ++p) {
        jtr[p] += g[p] * r;
        for (int q = 0; q < 3; ++q) jtj[p][q] += g[p] * g[q];
      }
    }

    bool improved = false;
    while (lambda < 1e16) {
      auto m = jtj;
      for (int p = 0; p < 3; ++p) m[p][p] += lambda * std::max(jtj[p][p], 1e-300);
      std::array<double, 3> step{};
      if (!solve3(m, jtr, step)) {
        lambda *= 10.0;
        continue;
      }
      const double na = a + step[0], nk = k + step[1], nc = c + step[2];
      const double nsse = sse_of(na, nk, nc);
      if (std::isfinite(nsse) && nsse <= sse) {
        const double dsse = sse - nsse;
        const double pnorm = std::abs(a) + std::abs(k) + std::abs(c);
        const double snorm = std::abs(step[0]) + std::abs(step[1]) + std::abs(step[2]);
        a = na;
        k = nk;
        c = nc;
        sse = nsse;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        if (dsse <= options.tolerance * nsse || snorm <= options.tolerance * (pnorm + 1e-300))
          converged = true;
        break;
      }
      lambda *= 10.0;
    }
    // No damping level reduces SSE: the current point is a numerical minimum.
    if (!improved) converged = true;
    if (converged) break;
  }

  fit.a = a * std::exp(k * t0);
  fit.k = k;
  fit.c = c;
  fit.iterations = it + (converged ? 1 : 0);
  fit.r_squared = 1.0 - sse / ss_tot;
  fit.converged = converged && k > 0.0 && a > 0.0 && std::isfinite(fit.a);
  return fit;
}

ExpFit fit_exponential(const AmplitudeSeries& series, const TimeWindow& range,
                       const FitOptions& options) {
  std::vector<double> t, y;
  for (const auto& s : series.samples()) {
    if (range.contains(s.irradiation_time)) {
      t.push_back(s.irradiation_time);
      y.push_back(s.amplitude);
    }
  }
  return fit_exponential(t, y, options);
}

void MonitorConfig::validate() const {
  if (smoothing_window < 3) throw InvalidArgument("smoothing_window must be >= 3");
  for (double v : {slope_fall_threshold, slope_flat_band, oscillation_std_threshold, stage_hold,
                   alarm_hold, slope_span})
    if (!(std::isfinite(v) && v > 0.0)) throw InvalidArgument("monitor thresholds must be > 0");
  if (!(slope_flat_band < slope_fall_threshold))
    throw InvalidArgument("slope_flat_band must be below slope_fall_threshold");
}

std::string_view to_string(DetectedStage s) {
  switch (s) {
    case DetectedStage::Insufficient: return "Insufficient";
    case DetectedStage::A: return "A";
    case DetectedStage::B: return "B";
    case DetectedStage::C: return "C";
  }
  return "?";
}

DetectedStage detected_stage_from_string(std::string_view s) {
  if (s == "Insufficient") return DetectedStage::Insufficient;
  if (s == "A") return DetectedStage::A;
  if (s == "B") return DetectedStage::B;
  if (s == "C") return DetectedStage::C;
  throw InvalidArgument("unknown stage '" + std::string(s) + "'");
}

std::string_view to_string(AlarmReason r) {
  switch (r) {
    case AlarmReason::None: return "None";
    case AlarmReason::ScorchOnset: return "ScorchOnset";
    case AlarmReason::ProlongedScorch: return "ProlongedScorch";
  }
  return "?";
}

StageClassifier::StageClassifier(MonitorConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void StageClassifier::enter(DetectedStage to, double since, double now) {
  transitions_.push_back({estimate_.stage, to, since, now});
  estimate_.stage = to;
  estimate_.since = since;
}

const StageEstimate& StageClassifier::update(std::span<const AmplitudeSample> history) {
  if (history.empty()) return estimate_;
  const double now = history.back().irradiation_time;
  estimate_.at = now;
  const std::size_t w = cfg_.smoothing_window;
  if (history.size() < w) {
    estimate_.stage = DetectedStage::Insufficient;
    estimate_.since = history.front().irradiation_time;
    estimate_.confidence = 0.0;
    return estimate_;
  }

  const LineFit local = fit_line(history.last(w));
  const LineFit trend = fit_line(tail_since(history, now - cfg_.slope_span, w));
  estimate_.rolling_std = local.residual_std;
  estimate_.slope = trend.slope;

  if (!oscillating_ && local.residual_std > cfg_.oscillation_std_threshold)
    oscillating_ = true;
  else if (oscillating_ && local.residual_std < 0.5 * cfg_.oscillation_std_threshold)
    oscillating_ = false;

  // Holds for `cfg_.stage_hold` while `cond` keeps holding; resets otherwise.
  auto held = [&](bool cond, std::optional<double>& onset) {
    if (!cond) {
      onset.reset();
      return false;
    }
    if (!onset) onset = now;
    return now - *onset >= cfg_.stage_hold;
  };

  switch (estimate_.stage) {
    case DetectedStage::Insufficient:
      enter(DetectedStage::A, history.front().irradiation_time, now);
      [[fallthrough]];
    case DetectedStage::A: {
      if (held(trend.slope < -cfg_.slope_fall_threshold, decline_onset_)) decline_confirmed_ = true;
      const bool flat = decline_confirmed_ && std::abs(trend.slope) < cfg_.slope_flat_band;
      if (held(oscillating_ || flat, b_onset_)) {
        enter(DetectedStage::B, *b_onset_, now);
        estimate_.confidence = oscillating_
                                   ? clamp01(local.residual_std / cfg_.oscillation_std_threshold)
                                   : clamp01(1.0 - std::abs(trend.slope) / cfg_.slope_flat_band);
      } else {
        estimate_.confidence = clamp01(-trend.slope / cfg_.slope_fall_threshold);
      }
      break;
    }
    case DetectedStage::B: {
      bool scorched = false;
      double quiet_slope = 0.0;
      if (held(!oscillating_, quiet_onset_)) {
        const auto quiet = tail_since(history, *quiet_onset_, 0);
        quiet_slope = fit_line(quiet).slope;
        scorched = quiet.size() >= 3 && quiet_slope < -cfg_.slope_flat_band;
      }
      if (scorched) {
        enter(DetectedStage::C, *quiet_onset_, now);
        estimate_.confidence = clamp01(-quiet_slope / cfg_.slope_fall_threshold);
      } else if (oscillating_) {
        estimate_.confidence = clamp01(local.residual_std / cfg_.oscillation_std_threshold);
      } else {
        estimate_.confidence = clamp01(1.0 - std::abs(trend.slope) / cfg_.slope_fall_threshold);
      }
      break;
    }
    case DetectedStage::C:
      estimate_.confidence = clamp01(0.5 + 0.5 * (-trend.slope / cfg_.slope_fall_threshold));
      break;
  }
  return estimate_;
}

StageEstimate classify_stage(const AmplitudeSeries& series, const MonitorConfig& cfg) {
  StageClassifier clf(cfg);
  const auto all = series.samples();
  for (std::size_t i = 1; i <= all.size(); ++i) clf.update(all.first(i));
  return clf.estimate();
}

std::vector<StageTransition> stage_transitions(const AmplitudeSeries& series,
                                               const MonitorConfig& cfg) {
  StageClassifier clf(cfg);
  const auto all = series.samples();
  for (std::size_t i = 1; i <= all.size(); ++i) clf.update(all.first(i));
  return clf.transitions();
}

Alarm overtreatment_alarm(const Alarm& previous, const StageEstimate& est,
                          const MonitorConfig& cfg) {
  Alarm next = previous;
  if (est.stage != DetectedStage::C) return next;
  if (!next.active) {
    next.active = true;
    next.raised_at = est.at;
    next.reason = AlarmReason::ScorchOnset;
  }
  if (est.at - est.since >= cfg.alarm_hold) next.reason = AlarmReason::ProlongedScorch;
  return next;
}

bool baseline_check(const AmplitudeSeries& series, double band_low, double band_high,
                    const MonitorConfig& cfg) {
  const std::size_t w = cfg.smoothing_window;
  const auto s = series.samples();
  if (s.size() < w) throw InsufficientData("baseline_check needs smoothing_window samples");

  std::vector<AmplitudeSample> smoothed;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    acc += s[i].amplitude;
    if (i >= w) acc -= s[i - w].amplitude;
    if (i + 1 < w) continue;
    const double mean = acc / static_cast<double>(w);
    if (mean < band_low || mean > band_high) return false;
    smoothed.push_back({s[i].irradiation_time, mean, s[i].pulse_index});
  }
  return fit_line(smoothed).slope <= cfg.slope_flat_band;
}

Monitor::Monitor(MonitorConfig cfg)
    : classifier_(cfg), snapshot_(std::make_shared<MonitorSnapshot>()) {}

const StageEstimate& Monitor::append(const AmplitudeSample& s) {
  series_.append(s);
  const auto& est = classifier_.update(series_.samples());
  alarm_ = overtreatment_alarm(alarm_, est, classifier_.config());
  rows_.push_back({s.pulse_index, s.irradiation_time, s.amplitude, est.stage, alarm_.active});

  auto snap = std::make_shared<MonitorSnapshot>();
  snap->sample_count = series_.size();
  snap->last = s;
  snap->estimate = est;
  snap->alarm = alarm_;
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(snap);
  return est;
}

std::shared_ptr<const MonitorSnapshot> Monitor::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

void write_monitor_csv(std::ostream& out, std::span<const MonitorRow> rows) {
  out << "pulse_index,irradiation_time_s,amplitude_v,stage,alarm_active\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,", static_cast<unsigned long long>(r.pulse_index),
                  r.irradiation_time, r.amplitude);
    out << buf << to_string(r.stage) << ',' << (r.alarm_active ? 1 : 0) << '\n';
  }
}

}  // namespace pamon
