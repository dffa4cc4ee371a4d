#include "pamon/wavelet.hpp"

#include <array>
#include <string>

#include "pamon/errors.hpp"

namespace pamon {

namespace {

constexpr std::array<double, 2> kHaar{0.7071067811865476, 0.7071067811865476};

constexpr std::array<double, 4> kDb2{0.48296291314453416, 0.8365163037378079,
                                     0.2241438680420134, -0.12940952255126037};

constexpr std::array<double, 8> kDb4{0.2303778133088965,   0.7148465705529157,
                                     0.6308807679298589,   -0.027983769416859854,
                                     -0.18703481171909309, 0.030841381835560764,
                                     0.0328830116668852,   -0.010597401785069032};

struct FilterBank {
  std::vector<double> lo;  // scaling coefficients
  std::vector<double> hi;  // wavelet coefficients, hi[k] = (-1)^k lo[L-1-k]
};

FilterBank filter_bank(WaveletFamily family) {
  const auto h = scaling_coefficients(family);
  FilterBank fb;
  fb.lo.assign(h.begin(), h.end());
  const std::size_t n = h.size();
  fb.hi.resize(n);
  for (std::size_t k = 0; k < n; ++k) fb.hi[k] = (k % 2 == 0 ? 1.0 : -1.0) * h[n - 1 - k];
  return fb;
}

std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  i %= m;
  return static_cast<std::size_t>(i < 0 ? i + m : i);
}

// Half-sample symmetric reflection: x[-1] = x[0], x[n] = x[n-1].
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  const std::ptrdiff_t period = 2 * m;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < m ? i : period - 1 - i);
}

void periodic_step(std::span<const double> x, const FilterBank& fb, std::vector<double>& a,
                   std::vector<double>& d) {
  const std::size_t n = x.size();
  const std::size_t half = n / 2;
  a.assign(half, 0.0);
  d.assign(half, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    double sa = 0.0, sd = 0.0;
    for (std::size_t k = 0; k < fb.lo.size(); ++k) {
      const double v = x[wrap(static_cast<std::ptrdiff_t>(2 * i + k), n)];
      sa += fb.lo[k] * v;
      sd += fb.hi[k] * v;
    }
    a[i] = sa;
    d[i] = sd;
  }
}

std::vector<double> periodic_inverse(std::span<const double> a, std::span<const double> d,
                                     const FilterBank& fb) {
  const std::size_t n = 2 * a.size();
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < fb.lo.size(); ++k)
      x[wrap(static_cast<std::ptrdiff_t>(2 * i + k), n)] += fb.lo[k] * a[i] + fb.hi[k] * d[i];
  return x;
}

// Convolution at odd positions of the symmetrically extended signal; output
// length floor((n + L - 1) / 2).
void symmetric_step(std::span<const double> x, const FilterBank& fb, std::vector<double>& a,
                    std::vector<double>& d) {
  const std::size_t n = x.size();
  const std::size_t taps = fb.lo.size();
  const std::size_t m = (n + taps - 1) / 2;
  a.assign(m, 0.0);
  d.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double sa = 0.0, sd = 0.0;
    for (std::size_t k = 0; k < taps; ++k) {
      // The analysis filters are the time-reversed synthesis filters.
      const double v = x[reflect(static_cast<std::ptrdiff_t>(2 * i + 1) -
                                     static_cast<std::ptrdiff_t>(k),
                                 n)];
      sa += fb.lo[taps - 1 - k] * v;
      sd += fb.hi[taps - 1 - k] * v;
    }
    a[i] = sa;
    d[i] = sd;
  }
}

std::vector<double> symmetric_inverse(std::span<const double> a, std::span<const double> d,
                                      const FilterBank& fb, std::size_t out_len) {
  const auto taps = static_cast<std::ptrdiff_t>(fb.lo.size());
  const auto m = static_cast<std::ptrdiff_t>(a.size());
  std::vector<double> x(out_len, 0.0);
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(out_len); ++n) {
    double s = 0.0;
    for (std::ptrdiff_t i = 0; i < m; ++i) {
      const std::ptrdiff_t k = n + taps - 2 - 2 * i;
      if (k < 0 || k >= taps) continue;
      s += fb.lo[static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(i)] +
           fb.hi[static_cast<std::size_t>(k)] * d[static_cast<std::size_t>(i)];
    }
    x[static_cast<std::size_t>(n)] = s;
  }
  return x;
}

void check_selection(const WaveletBands& bands, const std::set<std::size_t>& selected) {
  if (selected.empty()) throw InvalidArgument("band selection is empty");
  for (std::size_t b : selected)
    if (b < 1 || b > bands.band_count())
      throw InvalidArgument("band " + std::to_string(b) + " out of range [1, " +
                            std::to_string(bands.band_count()) + "]");
}

}  // namespace

std::string_view to_string(WaveletFamily f) {
  switch (f) {
    case WaveletFamily::Haar: return "haar";
    case WaveletFamily::Db2: return "db2";
    case WaveletFamily::Db4: return "db4";
  }
  return "?";
}

WaveletFamily wavelet_family_from_string(std::string_view s) {
  if (s == "haar") return WaveletFamily::Haar;
  if (s == "db2") return WaveletFamily::Db2;
  if (s == "db4") return WaveletFamily::Db4;
  throw InvalidArgument("unknown wavelet family '" + std::string(s) + "'");
}

std::string_view to_string(BoundaryMode m) {
  return m == BoundaryMode::Periodic ? "periodic" : "symmetric";
}

BoundaryMode boundary_mode_from_string(std::string_view s) {
  if (s == "periodic") return BoundaryMode::Periodic;
  if (s == "symmetric") return BoundaryMode::Symmetric;
  throw InvalidArgument("unknown boundary mode '" + std::string(s) + "'");
}

std::span<const double> scaling_coefficients(WaveletFamily family) {
  switch (family) {
    case WaveletFamily::Haar: return kHaar;
    case WaveletFamily::Db2: return kDb2;
    case WaveletFamily::Db4: return kDb4;
  }
  throw InvalidArgument("unknown wavelet family");
}

void WaveletConfig::validate(std::size_t signal_length) const {
  if (levels < 1) throw InvalidArgument("wavelet levels must be >= 1");
  if (levels >= 8 * sizeof(std::size_t) || (std::size_t{1} << levels) > signal_length)
    throw InvalidArgument("signal of length " + std::to_string(signal_length) +
                          " is too short for " + std::to_string(levels) + " levels");
  if (boundary == BoundaryMode::Periodic && signal_length % (std::size_t{1} << levels) != 0)
    throw InvalidArgument("periodic boundary needs the length divisible by 2^levels");
  if (selected_bands.empty()) throw InvalidArgument("selected_bands is empty");
  for (std::size_t b : selected_bands)
    if (b < 1 || b > levels + 1) throw InvalidArgument("selected band out of range");
}

WaveletBands dwt_decompose(std::span<const double> signal, const WaveletConfig& cfg) {
  if (cfg.levels < 1 || cfg.levels >= 8 * sizeof(std::size_t) ||
      (std::size_t{1} << cfg.levels) > signal.size())
    throw InvalidArgument("dwt_decompose: signal too short for the requested levels");
  if (cfg.boundary == BoundaryMode::Periodic &&
      signal.size() % (std::size_t{1} << cfg.levels) != 0)
    throw InvalidArgument("dwt_decompose: periodic boundary needs length divisible by 2^levels");

  const FilterBank fb = filter_bank(cfg.family);
  WaveletBands out;
  out.family = cfg.family;
  out.boundary = cfg.boundary;
  out.signal_length = signal.size();

  std::vector<double> approx(signal.begin(), signal.end());
  std::vector<double> a, d;
  for (std::size_t level = 0; level < cfg.levels; ++level) {
    out.level_lengths.push_back(approx.size());
    if (cfg.boundary == BoundaryMode::Periodic)
      periodic_step(approx, fb, a, d);
    else
      symmetric_step(approx, fb, a, d);
    out.bands.push_back(std::move(d));
    approx = std::move(a);
  }
  out.bands.push_back(std::move(approx));
  return out;
}

std::vector<double> dwt_reconstruct(const WaveletBands& bands) {
  if (bands.bands.empty()) return {};
  const FilterBank fb = filter_bank(bands.family);
  std::vector<double> approx = bands.bands.back();
  for (std::size_t level = bands.levels(); level-- > 0;) {
    const auto& detail = bands.bands[level];
    if (bands.boundary == BoundaryMode::Periodic)
      approx = periodic_inverse(approx, detail, fb);
    else
      approx = symmetric_inverse(approx, detail, fb, bands.level_lengths[level]);
  }
  return approx;
}

std::vector<double> reconstruct_bands(const WaveletBands& bands,
                                      const std::set<std::size_t>& selected) {
  check_selection(bands, selected);
  WaveletBands masked = bands;
  for (std::size_t b = 1; b <= masked.band_count(); ++b)
    if (!selected.contains(b))
      std::fill(masked.bands[b - 1].begin(), masked.bands[b - 1].end(), 0.0);
  return dwt_reconstruct(masked);
}

WaveletBands swt_decompose(std::span<const double> signal, WaveletFamily family,
                           std::size_t levels) {
  if (levels < 1 || levels >= 8 * sizeof(std::size_t) ||
      (std::size_t{1} << levels) > signal.size())
    throw InvalidArgument("swt_decompose: signal too short for the requested levels");
  const FilterBank fb = filter_bank(family);
  const std::size_t n = signal.size();

  WaveletBands out;
  out.family = family;
  out.boundary = BoundaryMode::Periodic;
  out.signal_length = n;
  std::vector<double> approx(signal.begin(), signal.end());
  for (std::size_t level = 0; level < levels; ++level) {
    out.level_lengths.push_back(n);
    const auto step = static_cast<std::ptrdiff_t>(std::size_t{1} << level);
    std::vector<double> a(n, 0.0), d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double sa = 0.0, sd = 0.0;
      for (std::size_t k = 0; k < fb.lo.size(); ++k) {
        const double v =
            approx[wrap(static_cast<std::ptrdiff_t>(i) + step * static_cast<std::ptrdiff_t>(k), n)];
        sa += fb.lo[k] * v;
        sd += fb.hi[k] * v;
      }
      a[i] = sa;
      d[i] = sd;
    }
    out.bands.push_back(std::move(d));
    approx = std::move(a);
  }
  out.bands.push_back(std::move(approx));
  return out;
}

std::vector<double> swt_reconstruct_bands(const WaveletBands& bands,
                                          const std::set<std::size_t>& selected) {
  check_selection(bands, selected);
  const FilterBank fb = filter_bank(bands.family);
  const std::size_t n = bands.signal_length;
  const std::size_t levels = bands.levels();

  std::vector<double> approx = selected.contains(levels + 1) ? bands.bands.back()
                                                             : std::vector<double>(n, 0.0);
  for (std::size_t level = levels; level-- > 0;) {
    const bool keep_detail = selected.contains(level + 1);
    const auto& detail = bands.bands[level];
    const auto step = static_cast<std::ptrdiff_t>(std::size_t{1} << level);
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < fb.lo.size(); ++k) {
        const std::size_t j =
            wrap(static_cast<std::ptrdiff_t>(i) - step * static_cast<std::ptrdiff_t>(k), n);
        s += fb.lo[k] * approx[j];
        if (keep_detail) s += fb.hi[k] * detail[j];
      }
      next[i] = 0.5 * s;
    }
    approx = std::move(next);
  }
  return approx;
}

}  // namespace pamon
