#pragma once

// Sample acquisition path of the measurement node: ADC calibration,
// 20 kHz -> 10 kHz averaging, 100 ms windowing, and a synthetic load
// generator that stands in for recorded appliance data.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nilm/common.hpp"

namespace nilm {

struct CalibrationCoefficients {
  double gain_v = 0.0;    // V per code
  double offset_v = 0.0;  // V
  double gain_i = 0.0;    // A per code
  double offset_i = 0.0;  // A

  /// Bipolar mapping of the unipolar 14-bit range: mid-scale code reads 0.
  static CalibrationCoefficients bipolar(double v_full_scale, double i_full_scale) {
    const double codes = static_cast<double>(kAdcMaxCode + 1);
    return {2.0 * v_full_scale / codes, -v_full_scale, 2.0 * i_full_scale / codes, -i_full_scale};
  }

  void validate() const {
    require(gain_v > 0.0 && std::isfinite(gain_v), ErrorKind::Validation, "gain_v must be > 0");
    require(gain_i > 0.0 && std::isfinite(gain_i), ErrorKind::Validation, "gain_i must be > 0");
  }
};

struct RawSampleBlock {
  std::vector<std::int32_t> codes_v;
  std::vector<std::int32_t> codes_i;
  int rate_hz = kRawSampleRateHz;

  void validate() const {
    require(codes_v.size() == codes_i.size(), ErrorKind::LengthMismatch,
            "voltage and current channels differ in length (" + std::to_string(codes_v.size()) + " vs " +
                std::to_string(codes_i.size()) + ")");
    auto in_range = [](std::int32_t c) { return c >= 0 && c <= kAdcMaxCode; };
    require(std::all_of(codes_v.begin(), codes_v.end(), in_range) &&
                std::all_of(codes_i.begin(), codes_i.end(), in_range),
            ErrorKind::Validation, "ADC code outside the 14-bit range");
  }
};

/// Paired calibrated voltage/current stream.
struct Stream {
  std::vector<double> v;
  std::vector<double> i;
  double rate_hz = kSampleRateHz;

  std::size_t size() const { return v.size(); }
  bool operator==(const Stream&) const = default;
};

inline Stream calibrate_raw(const RawSampleBlock& block, const CalibrationCoefficients& coeffs) {
  require(block.codes_v.size() == block.codes_i.size(), ErrorKind::LengthMismatch,
          "voltage and current channels differ in length");
  block.validate();
  coeffs.validate();
  Stream out;
  out.rate_hz = block.rate_hz;
  out.v.resize(block.codes_v.size());
  out.i.resize(block.codes_i.size());
  for (std::size_t k = 0; k < block.codes_v.size(); ++k) {
    out.v[k] = block.codes_v[k] * coeffs.gain_v + coeffs.offset_v;
    out.i[k] = block.codes_i[k] * coeffs.gain_i + coeffs.offset_i;
  }
  return out;
}

inline std::vector<double> decimate_average(std::span<const double> in) {
  require(in.size() % 2 == 0, ErrorKind::LengthMismatch,
          "decimation needs an even number of samples, got " + std::to_string(in.size()));
  std::vector<double> out(in.size() / 2);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (in[2 * k] + in[2 * k + 1]) / 2.0;
  return out;
}

inline Stream decimate_average(const Stream& in) {
  require(in.v.size() == in.i.size(), ErrorKind::LengthMismatch, "voltage and current channels differ in length");
  return {decimate_average(in.v), decimate_average(in.i), in.rate_hz / 2.0};
}

/// One 100 ms frame: exactly 1000 samples per channel at 10 kHz.
struct SampleWindow {
  std::array<double, kWindowSamples> v{};
  std::array<double, kWindowSamples> i{};
  int rate_hz = kSampleRateHz;
  std::size_t index = 0;
};

/// Single-consumer cursor over the non-overlapping windows of a stream.
/// Alignment starts at sample 0; a trailing partial window is never produced.
class WindowReader {
 public:
  explicit WindowReader(const Stream& stream) : stream_(&stream) {
    require(stream.v.size() == stream.i.size(), ErrorKind::LengthMismatch,
            "voltage and current channels differ in length");
  }

  std::optional<SampleWindow> next() {
    const std::size_t begin = next_index_ * kWindowSamples;
    if (begin + kWindowSamples > stream_->size()) return std::nullopt;
    SampleWindow w;
    std::copy_n(stream_->v.begin() + static_cast<std::ptrdiff_t>(begin), kWindowSamples, w.v.begin());
    std::copy_n(stream_->i.begin() + static_cast<std::ptrdiff_t>(begin), kWindowSamples, w.i.begin());
    w.index = next_index_++;
    return w;
  }

  std::size_t window_count() const { return stream_->size() / kWindowSamples; }

 private:
  const Stream* stream_;
  std::size_t next_index_ = 0;
};

inline std::vector<SampleWindow> window_stream(const Stream& stream) {
  WindowReader reader(stream);
  std::vector<SampleWindow> out;
  out.reserve(reader.window_count());
  while (auto w = reader.next()) out.push_back(*w);
  return out;
}

// --- synthetic loads -------------------------------------------------------

struct Mains {
  double amplitude_v = 230.0 * std::numbers::sqrt2;
  double freq_hz = 50.0;

  double rms() const { return amplitude_v / std::numbers::sqrt2; }
  double voltage(double t) const { return amplitude_v * std::sin(kTwoPi * freq_hz * t); }
};

enum class ApplianceKind { resistive, reactive, rectifier, phase_cut };

inline const char* to_string(ApplianceKind kind) {
  switch (kind) {
    case ApplianceKind::resistive: return "resistive";
    case ApplianceKind::reactive: return "reactive";
    case ApplianceKind::rectifier: return "rectifier";
    case ApplianceKind::phase_cut: return "phase_cut";
  }
  return "?";
}

inline ApplianceKind parse_appliance_kind(std::string_view s) {
  if (s == "resistive") return ApplianceKind::resistive;
  if (s == "reactive") return ApplianceKind::reactive;
  if (s == "rectifier") return ApplianceKind::rectifier;
  if (s == "phase_cut") return ApplianceKind::phase_cut;
  fail(ErrorKind::Parse, "unknown appliance kind '" + std::string(s) + "'");
}

struct ApplianceModel {
  ApplianceKind kind = ApplianceKind::resistive;
  double nominal_power_w = 0.0;
  double phase_rad = 0.0;                    // reactive
  std::map<int, double> harmonic_profile{};  // rectifier: odd order -> relative amplitude
  double cut_angle_rad = 0.0;                // phase_cut
  double noise_rms_a = 0.0;

  void validate() const {
    require(nominal_power_w > 0.0 && std::isfinite(nominal_power_w), ErrorKind::Validation,
            "nominal power must be positive");
    require(noise_rms_a >= 0.0, ErrorKind::Validation, "noise rms must be non-negative");
    if (kind == ApplianceKind::rectifier) {
      require(!harmonic_profile.empty(), ErrorKind::Validation, "rectifier needs a harmonic profile");
      for (auto [order, amp] : harmonic_profile) {
        require(order >= 1 && order % 2 == 1, ErrorKind::Validation, "harmonic orders must be odd and >= 1");
        require(amp >= 0.0 && amp <= 1.0, ErrorKind::Validation, "relative harmonic amplitude outside [0,1]");
      }
      auto it = harmonic_profile.find(1);
      require(it != harmonic_profile.end() && it->second == 1.0, ErrorKind::Validation,
              "order-1 amplitude must be 1");
    }
    if (kind == ApplianceKind::phase_cut) {
      require(cut_angle_rad >= 0.0 && cut_angle_rad < std::numbers::pi, ErrorKind::Validation,
              "cut angle must lie in [0, pi)");
    }
  }
};

namespace detail {

inline std::size_t samples_for(double duration_s, double rate_hz) {
  return static_cast<std::size_t>(std::llround(duration_s * rate_hz));
}

}  // namespace detail

/// Current drawn by one appliance on clean mains, sampled at 10 kHz from t = 0.
inline std::vector<double> synth_appliance(const ApplianceModel& model, const Mains& mains, double duration_s,
                                           std::uint64_t seed) {
  model.validate();
  require(duration_s > 0.0, ErrorKind::Validation, "duration must be positive");
  const std::size_t n = detail::samples_for(duration_s, kSampleRateHz);
  const double vrms = mains.rms();
  const double omega = kTwoPi * mains.freq_hz;
  std::vector<double> out(n);
  switch (model.kind) {
    case ApplianceKind::resistive: {
      const double g = model.nominal_power_w / (vrms * vrms);
      for (std::size_t k = 0; k < n; ++k) out[k] = g * mains.voltage(static_cast<double>(k) / kSampleRateHz);
      break;
    }
    case ApplianceKind::reactive: {
      // |S| = P_nom, so the real power is P_nom * cos(phase).
      const double amp = std::numbers::sqrt2 * model.nominal_power_w / vrms;
      for (std::size_t k = 0; k < n; ++k) {
        out[k] = amp * std::sin(omega * static_cast<double>(k) / kSampleRateHz - model.phase_rad);
      }
      break;
    }
    case ApplianceKind::rectifier: {
      const double fundamental = std::numbers::sqrt2 * model.nominal_power_w / vrms;
      for (std::size_t k = 0; k < n; ++k) {
        const double phase = omega * static_cast<double>(k) / kSampleRateHz;
        double acc = 0.0;
        for (auto [order, amp] : model.harmonic_profile) acc += amp * std::sin(order * phase);
        out[k] = fundamental * acc;
      }
      break;
    }
    case ApplianceKind::phase_cut: {
      // Conduction starts at the cut angle of every half-cycle. The
      // conductance comes from the sampled waveform over one second so the
      // delivered real power equals P_nom at 10 kHz, not just in the limit.
      const double a = model.cut_angle_rad;
      auto conducts = [&](std::size_t k) { return std::fmod(omega * static_cast<double>(k) / kSampleRateHz, std::numbers::pi) >= a; };
      const auto per_second = static_cast<std::size_t>(kSampleRateHz);
      double v2 = 0.0;
      for (std::size_t k = 0; k < per_second; ++k) {
        if (conducts(k)) v2 += std::pow(mains.voltage(static_cast<double>(k) / kSampleRateHz), 2);
      }
      const double g = model.nominal_power_w / (v2 / static_cast<double>(per_second));
      for (std::size_t k = 0; k < n; ++k) out[k] = conducts(k) ? g * mains.voltage(static_cast<double>(k) / kSampleRateHz) : 0.0;
      break;
    }
  }
  if (model.noise_rms_a > 0.0) {
    Rng rng(seed);
    for (double& x : out) x += model.noise_rms_a * rng.normal();
  }
  return out;
}

inline std::vector<double> mains_voltage(const Mains& mains, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = mains.voltage(static_cast<double>(k) / kSampleRateHz);
  return v;
}

enum class SwitchAction { on, off };

struct ScriptEvent {
  double time_s = 0.0;
  std::string appliance_id;
  SwitchAction action = SwitchAction::on;
};

using ApplianceRegistry = std::map<std::string, ApplianceModel>;

struct ScenarioScript {
  Mains mains{};
  std::vector<ScriptEvent> events;
  double duration_s = 0.0;

  /// Throws when events are unsorted, outside the run, or switch an
  /// appliance into the state it is already in.
  void validate() const {
    require(duration_s > 0.0, ErrorKind::Validation, "scenario duration must be positive");
    std::set<std::string> on;
    for (std::size_t e = 0; e < events.size(); ++e) {
      const auto& ev = events[e];
      require(ev.time_s >= 0.0 && ev.time_s < duration_s, ErrorKind::Validation,
              "event time outside [0, duration)");
      if (e > 0) require(events[e - 1].time_s <= ev.time_s, ErrorKind::Validation, "events must be sorted by time");
      if (ev.action == SwitchAction::on) {
        require(on.insert(ev.appliance_id).second, ErrorKind::Validation,
                "appliance '" + ev.appliance_id + "' switched on twice");
      } else {
        require(on.erase(ev.appliance_id) == 1, ErrorKind::Validation,
                "appliance '" + ev.appliance_id + "' switched off while off");
      }
    }
  }

  /// True when consecutive events are at least `min_gap_s` apart (4.1 s for
  /// the 41-window differential feature).
  bool events_spaced(double min_gap_s = 4.1) const {
    for (std::size_t e = 1; e < events.size(); ++e) {
      if (events[e].time_s - events[e - 1].time_s < min_gap_s - 1e-9) return false;
    }
    return true;
  }
};

struct WindowLabel {
  std::size_t index = 0;
  std::vector<std::string> active;   // sorted; empty means "none"
  std::vector<std::string> toggled;  // appliances switched inside this window
};

struct ScenarioOutput {
  Stream stream;
  std::vector<WindowLabel> labels;
};

inline std::size_t event_sample(double time_s) {
  return static_cast<std::size_t>(std::ceil(time_s * kSampleRateHz - 1e-6));
}

inline std::size_t event_window(double time_s) { return event_sample(time_s) / kWindowSamples; }

/// Noise stream of an appliance inside a scenario depends only on the
/// scenario seed and the appliance id.
inline std::uint64_t appliance_seed(std::uint64_t scenario_seed, std::string_view id) {
  return derive_seed(scenario_seed, fnv1a(id));
}

inline ScenarioOutput synth_scenario(const ScenarioScript& script, const ApplianceRegistry& registry,
                                     std::uint64_t seed) {
  script.validate();
  for (const auto& ev : script.events) {
    require(registry.count(ev.appliance_id) == 1, ErrorKind::Validation,
            "unknown appliance id '" + ev.appliance_id + "'");
  }
  const std::size_t n = detail::samples_for(script.duration_s, kSampleRateHz);
  ScenarioOutput out;
  out.stream.v = mains_voltage(script.mains, n);
  out.stream.i.assign(n, 0.0);
  out.stream.rate_hz = kSampleRateHz;

  // Per-appliance on-intervals in samples, [begin, end).
  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> intervals;
  std::map<std::string, std::size_t> open;
  for (const auto& ev : script.events) {
    const std::size_t s = std::min(event_sample(ev.time_s), n);
    if (ev.action == SwitchAction::on) {
      open[ev.appliance_id] = s;
    } else {
      intervals[ev.appliance_id].emplace_back(open.at(ev.appliance_id), s);
      open.erase(ev.appliance_id);
    }
  }
  for (const auto& [id, begin] : open) intervals[id].emplace_back(begin, n);

  for (const auto& [id, spans] : intervals) {
    const auto current = synth_appliance(registry.at(id), script.mains, script.duration_s, appliance_seed(seed, id));
    for (auto [b, e] : spans) {
      for (std::size_t k = b; k < e && k < n; ++k) out.stream.i[k] += current[k];
    }
  }

  const std::size_t windows = n / kWindowSamples;
  out.labels.resize(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    out.labels[w].index = w;
    const std::size_t wb = w * kWindowSamples;
    const std::size_t we = wb + kWindowSamples;
    for (const auto& [id, spans] : intervals) {
      const bool active = std::any_of(spans.begin(), spans.end(), [&](auto s) { return s.first < we && s.second > wb; });
      if (active) out.labels[w].active.push_back(id);
    }
  }
  for (const auto& ev : script.events) {
    const std::size_t w = event_window(ev.time_s);
    if (w < windows) out.labels[w].toggled.push_back(ev.appliance_id);
  }
  return out;
}

}  // namespace nilm
