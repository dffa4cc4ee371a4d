#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string_view>
#include <vector>

namespace pamon {

enum class WaveletFamily { Haar, Db2, Db4 };

// Periodic extension keeps the decimated transform orthogonal (energy
// preserving) and needs the signal length divisible by 2^levels. Symmetric
// (half-sample) extension accepts any length >= 2^levels; it reconstructs
// perfectly but carries redundant boundary coefficients.
enum class BoundaryMode { Periodic, Symmetric };

std::string_view to_string(WaveletFamily f);
WaveletFamily wavelet_family_from_string(std::string_view s);
std::string_view to_string(BoundaryMode m);
BoundaryMode boundary_mode_from_string(std::string_view s);

/// Orthonormal scaling (reconstruction low-pass) coefficients; they sum to sqrt(2).
std::span<const double> scaling_coefficients(WaveletFamily family);

/// Bands are numbered from 1: band j (1 <= j <= levels) is the detail at level j,
/// finest first; band levels+1 is the final approximation.
struct WaveletConfig {
  WaveletFamily family = WaveletFamily::Db4;
  std::size_t levels = 4;
  std::set<std::size_t> selected_bands{3, 4};
  BoundaryMode boundary = BoundaryMode::Periodic;

  void validate(std::size_t signal_length) const;
};

struct WaveletBands {
  WaveletFamily family = WaveletFamily::Db4;
  BoundaryMode boundary = BoundaryMode::Periodic;
  std::size_t signal_length = 0;
  // Input length at each level (level_lengths[0] == signal_length); the
  // symmetric inverse trims to these.
  std::vector<std::size_t> level_lengths;
  // bands[j-1] holds band j.
  std::vector<std::vector<double>> bands;

  std::size_t levels() const { return bands.empty() ? 0 : bands.size() - 1; }
  std::size_t band_count() const { return bands.size(); }
};

/// Multilevel decimated discrete wavelet transform.
/// Throws InvalidArgument if the signal is shorter than 2^levels (or, for the
/// periodic boundary, not divisible by it).
WaveletBands dwt_decompose(std::span<const double> signal, const WaveletConfig& cfg);

/// Inverse transform of all bands.
std::vector<double> dwt_reconstruct(const WaveletBands& bands);

/// Inverse transform with every band outside `selected` zeroed.
/// Throws InvalidArgument for an empty selection or an out-of-range band.
std::vector<double> reconstruct_bands(const WaveletBands& bands,
                                      const std::set<std::size_t>& selected);

// Undecimated (stationary) transform with periodic boundary, same band
// numbering; every band has the signal's length. It commutes with circular
// shifts, which the decimated transform does not.
WaveletBands swt_decompose(std::span<const double> signal, WaveletFamily family,
                           std::size_t levels);
std::vector<double> swt_reconstruct_bands(const WaveletBands& bands,
                                          const std::set<std::size_t>& selected);

}  // namespace pamon
