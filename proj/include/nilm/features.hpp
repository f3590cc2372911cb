#pragma once

// Per-window feature extraction: real, apparent and reactive power plus the
// odd 50 Hz current harmonics taken from a zero-padded 1024-point FFT.

#include <array>
#include <charconv>
#include <complex>
#include <set>
#include <string>
#include <vector>

#include "nilm/common.hpp"
#include "nilm/fft.hpp"
#include "nilm/signal.hpp"

namespace nilm {

inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kSpectrumBins = kFftSize / 2 + 1;
inline constexpr int kMaxHarmonicOrder = 99;
inline constexpr double kHarmonicBaseHz = 50.0;

enum class HarmonicMode : std::uint8_t { complex_pairs = 0, magnitude = 1 };

enum class FeatureKind : std::uint8_t { real_power, apparent_power, reactive_power, harmonic_re, harmonic_im, harmonic_mag };

struct FeatureDescriptor {
  std::string name;
  std::string unit;
  FeatureKind kind;
  int order = 0;  // harmonic order, 0 for time-domain entries
};

/// Ordered feature descriptors. The default layout is
/// [P, S_abs, Q, H1_re, H1_im, H3_re, H3_im, ..., H99_re, H99_im] (103 entries);
/// magnitude mode replaces each pair by a single H<k>_mag entry (53 entries).
class FeatureLayout {
 public:
  explicit FeatureLayout(HarmonicMode mode = HarmonicMode::complex_pairs) : mode_(mode) {
    entries_.push_back({"P", "W", FeatureKind::real_power});
    entries_.push_back({"S_abs", "VA", FeatureKind::apparent_power});
    entries_.push_back({"Q", "VAR", FeatureKind::reactive_power});
    for (int k = 1; k <= kMaxHarmonicOrder; k += 2) {
      const std::string h = "H" + std::to_string(k);
      if (mode == HarmonicMode::complex_pairs) {
        entries_.push_back({h + "_re", "A", FeatureKind::harmonic_re, k});
        entries_.push_back({h + "_im", "A", FeatureKind::harmonic_im, k});
      } else {
        entries_.push_back({h + "_mag", "A", FeatureKind::harmonic_mag, k});
      }
    }
  }

  HarmonicMode mode() const { return mode_; }
  std::size_t size() const { return entries_.size(); }
  const FeatureDescriptor& operator[](std::size_t k) const { return entries_.at(k); }
  const std::vector<FeatureDescriptor>& descriptors() const { return entries_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  static constexpr std::size_t time_domain_count() { return 3; }

  std::vector<std::size_t> time_domain_indices() const { return {0, 1, 2}; }
  std::vector<std::size_t> frequency_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t k = time_domain_count(); k < entries_.size(); ++k) out.push_back(k);
    return out;
  }

  bool operator==(const FeatureLayout& other) const { return mode_ == other.mode_; }

 private:
  HarmonicMode mode_;
  std::vector<FeatureDescriptor> entries_;
};

struct FeatureVector {
  std::vector<double> values;
  std::size_t window_index = 0;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }
};

struct Spectrum {
  std::array<std::complex<double>, kSpectrumBins> bins{};
  double bin_hz = static_cast<double>(kSampleRateHz) / kFftSize;
};

inline double real_power(const SampleWindow& w) {
  double acc = 0.0;
  for (std::size_t k = 0; k < kWindowSamples; ++k) acc += w.v[k] * w.i[k];
  return acc / static_cast<double>(kWindowSamples);
}

inline double rms(std::span<const double> x) {
  double acc = 0.0;
  for (double s : x) acc += s * s;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double apparent_power(const SampleWindow& w) { return rms(w.v) * rms(w.i); }

/// Q = sqrt(max(0, |S|^2 - P^2)); the clamp absorbs rounding when |P| marginally exceeds |S|.
inline double reactive_power(double p, double s_abs) { return std::sqrt(std::max(0.0, s_abs * s_abs - p * p)); }

/// One-sided spectrum of the current zero-padded from 1000 to 1024 samples.
inline Spectrum fft_1024(std::span<const double> current) {
  require(current.size() == kWindowSamples, ErrorKind::Dimension,
          "fft_1024 expects 1000 samples, got " + std::to_string(current.size()));
  std::array<std::complex<double>, kFftSize> buf{};
  for (std::size_t k = 0; k < kWindowSamples; ++k) buf[k] = current[k];
  fft_plan_1024().transform(buf);
  Spectrum s;
  for (std::size_t k = 0; k < kSpectrumBins; ++k) s.bins[k] = buf[k];
  // Real input: DC and Nyquist are real up to rounding; pin them exactly.
  s.bins[0].imag(0.0);
  s.bins[kSpectrumBins - 1].imag(0.0);
  return s;
}

/// Spectrum bin nearest to the k-th harmonic of 50 Hz.
inline std::size_t harmonic_bin(int order) {
  return static_cast<std::size_t>(std::lround(kHarmonicBaseHz * order * kFftSize / kSampleRateHz));
}

/// Odd-harmonic components scaled by 2/1000 so a bin-aligned tone of
/// amplitude A maps to roughly A amperes.
inline std::vector<double> extract_harmonics(const Spectrum& spec, const FeatureLayout& layout) {
  constexpr double scale = 2.0 / static_cast<double>(kWindowSamples);
  std::vector<double> out;
  out.reserve(layout.size() - FeatureLayout::time_domain_count());
  for (int k = 1; k <= kMaxHarmonicOrder; k += 2) {
    const auto c = spec.bins[harmonic_bin(k)] * scale;
    if (layout.mode() == HarmonicMode::complex_pairs) {
      out.push_back(c.real());
      out.push_back(c.imag());
    } else {
      out.push_back(std::abs(c));
    }
  }
  return out;
}

inline FeatureVector extract_features(const SampleWindow& w, const FeatureLayout& layout = FeatureLayout{}) {
  FeatureVector fv;
  fv.window_index = w.index;
  fv.values.reserve(layout.size());
  const double p = real_power(w);
  const double s = apparent_power(w);
  fv.values.push_back(p);
  fv.values.push_back(s);
  fv.values.push_back(reactive_power(p, s));
  const auto h = extract_harmonics(fft_1024(w.i), layout);
  fv.values.insert(fv.values.end(), h.begin(), h.end());
  return fv;
}

inline void validate_indices(std::span<const std::size_t> indices, std::size_t bound) {
  std::set<std::size_t> seen;
  for (auto idx : indices) {
    require(idx < bound, ErrorKind::Validation,
            "feature index " + std::to_string(idx) + " out of bounds (" + std::to_string(bound) + ")");
    require(seen.insert(idx).second, ErrorKind::Validation, "duplicate feature index " + std::to_string(idx));
  }
}

inline std::vector<double> select_features(std::span<const double> values, std::span<const std::size_t> indices) {
  validate_indices(indices, values.size());
  std::vector<double> out;
  out.reserve(indices.size());
  for (auto idx : indices) out.push_back(values[idx]);
  return out;
}

inline FeatureVector select_features(const FeatureVector& v, std::span<const std::size_t> indices) {
  return {select_features(std::span<const double>(v.values), indices), v.window_index};
}

/// Which extraction stages a set of selected features requires.
struct FeatureGroups {
  bool real_power = false;
  bool apparent_power = false;
  bool reactive_power = false;
  bool harmonics = false;

  bool needs_voltage() const { return real_power || apparent_power || reactive_power; }
  bool all() const { return real_power && apparent_power && reactive_power && harmonics; }
  bool operator==(const FeatureGroups&) const = default;
};

inline FeatureGroups feature_groups(const FeatureLayout& layout, std::span<const std::size_t> indices) {
  FeatureGroups g;
  for (auto idx : indices) {
    switch (layout[idx].kind) {
      case FeatureKind::real_power: g.real_power = true; break;
      case FeatureKind::apparent_power: g.apparent_power = true; break;
      case FeatureKind::reactive_power: g.reactive_power = true; break;
      default: g.harmonics = true; break;
    }
  }
  return g;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = k;
  return out;
}

/// Feature CSV: `window_index,<layout names...>`, one row per window.
inline std::string features_to_csv(const std::vector<FeatureVector>& rows, const FeatureLayout& layout) {
  std::string out = "window_index";
  for (const auto& d : layout.descriptors()) out += "," + d.name;
  out += '\n';
  char buf[64];
  for (const auto& fv : rows) {
    out += std::to_string(fv.window_index);
    for (double x : fv.values) {
      auto res = std::to_chars(buf, buf + sizeof(buf), x);
      out += ',';
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

}  // namespace nilm
