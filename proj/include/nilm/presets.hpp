#pragma once

// Synthetic appliance catalogues and the datasets built from them.
//
//   single7    seven loads for single-appliance recognition
//   multi5     five loads switched in shared scenarios (multi-appliance)
//   harmonic4  four rectifiers with equal P and |S| that differ only in
//              which harmonics carry the distortion

#include <string>
#include <vector>

#include "nilm/pipeline.hpp"
#include "nilm/train.hpp"

namespace nilm {

struct PresetAppliance {
  std::string id;
  ApplianceModel model;
};

struct Preset {
  std::string name;
  std::vector<PresetAppliance> appliances;

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& a : appliances) out.push_back(a.id);
    return out;
  }

  ClassId class_of(const std::string& id) const {
    for (std::size_t k = 0; k < appliances.size(); ++k) {
      if (appliances[k].id == id) return static_cast<ClassId>(k);
    }
    fail(ErrorKind::Validation, "appliance '" + id + "' is not in preset " + name);
  }
};

inline constexpr double kPresetNoiseA = 0.01;

namespace detail {

inline ApplianceModel resistive(double w) {
  ApplianceModel m;
  m.kind = ApplianceKind::resistive;
  m.nominal_power_w = w;
  m.noise_rms_a = kPresetNoiseA;
  return m;
}

inline ApplianceModel reactive(double w, double phase) {
  ApplianceModel m = resistive(w);
  m.kind = ApplianceKind::reactive;
  m.phase_rad = phase;
  return m;
}

inline ApplianceModel rectifier(double w, std::map<int, double> harmonics) {
  ApplianceModel m = resistive(w);
  m.kind = ApplianceKind::rectifier;
  m.harmonic_profile = std::move(harmonics);
  return m;
}

}  // namespace detail

inline std::vector<std::string> preset_names() { return {"single7", "multi5", "harmonic4"}; }

inline Preset make_preset(std::string_view name) {
  using namespace detail;
  Preset p;
  p.name = std::string(name);
  if (name == "single7") {
    p.appliances = {
        {"phone_charger", rectifier(8, {{1, 1.0}, {3, 0.8}, {5, 0.6}, {7, 0.4}, {9, 0.2}})},
        {"monitor", rectifier(25, {{1, 1.0}, {3, 0.7}, {5, 0.4}, {7, 0.2}})},
        {"fan_min", reactive(30, 0.5)},
        {"fan_med", reactive(45, 0.45)},
        {"fan_max", reactive(60, 0.4)},
        {"light_bulb", resistive(75)},
        {"laptop", rectifier(45, {{1, 1.0}, {3, 0.6}, {5, 0.3}, {7, 0.15}})},
    };
  } else if (name == "multi5") {
    p.appliances = {
        {"fan_min", reactive(30, 0.5)},
        {"coffee_machine", resistive(900)},
        {"light_bulb", resistive(60)},
        {"monitor", rectifier(25, {{1, 1.0}, {3, 0.7}, {5, 0.4}, {7, 0.2}})},
        {"power_bank", rectifier(12, {{1, 1.0}, {3, 0.7}, {5, 0.5}, {7, 0.3}})},
    };
  } else if (name == "harmonic4") {
    // Distortion energy 0.36 relative to the fundamental in every class.
    p.appliances = {
        {"rect_h3", rectifier(40, {{1, 1.0}, {3, 0.6}})},
        {"rect_h5", rectifier(40, {{1, 1.0}, {5, 0.6}})},
        {"rect_h7", rectifier(40, {{1, 1.0}, {7, 0.6}})},
        {"rect_h35", rectifier(40, {{1, 1.0}, {3, 0.6 / std::numbers::sqrt2}, {5, 0.6 / std::numbers::sqrt2}})},
    };
  } else {
    fail(ErrorKind::Validation, "unknown preset '" + std::string(name) + "'");
  }
  return p;
}

/// Instance-to-instance variation: nominal power +-4%.
inline ApplianceModel jitter_appliance(const ApplianceModel& m, Rng& rng) {
  ApplianceModel out = m;
  out.nominal_power_w *= rng.uniform(0.96, 1.04);
  return out;
}

/// Grid variation: amplitude +-1%, frequency +-freq_jitter_hz.
inline Mains jitter_mains(Rng& rng, double freq_jitter_hz = 0.1) {
  Mains m;
  m.amplitude_v *= rng.uniform(0.99, 1.01);
  m.freq_hz += rng.uniform(-freq_jitter_hz, freq_jitter_hz);
  return m;
}

/// One steady-state window per instance. Each instance has its own power,
/// mains and noise draw, and the window starts at a random point of the
/// mains cycle.
inline Dataset window_dataset(const Preset& preset, std::size_t per_class, std::uint64_t seed,
                              HarmonicMode mode = HarmonicMode::complex_pairs) {
  require(per_class >= 2, ErrorKind::Validation, "need at least 2 instances per class");
  const FeatureLayout layout(mode);
  Dataset d;
  d.classes = preset.ids();
  d.layout_mode = mode;
  d.columns = all_indices(layout.size());
  d.provenance = "synthetic:" + preset.name + ":seed=" + std::to_string(seed);
  constexpr std::size_t kMaxOffset = 200;  // one mains period at 10 kHz
  const double duration = static_cast<double>(kWindowSamples + kMaxOffset) / kSampleRateHz;
  for (std::size_t c = 0; c < preset.appliances.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      Rng rng(derive_seed(seed, c * 1000003 + k));
      const auto model = jitter_appliance(preset.appliances[c].model, rng);
      const auto mains = jitter_mains(rng);
      const auto current = synth_appliance(model, mains, duration, rng.bits());
      const auto voltage = mains_voltage(mains, current.size());
      const std::size_t offset = rng.below(kMaxOffset);
      SampleWindow w;
      std::copy_n(voltage.begin() + static_cast<std::ptrdiff_t>(offset), kWindowSamples, w.v.begin());
      std::copy_n(current.begin() + static_cast<std::ptrdiff_t>(offset), kWindowSamples, w.i.begin());
      d.x.append_row(extract_features(w, layout).values);
      d.y.push_back(static_cast<ClassId>(c));
    }
  }
  d.validate();
  return d;
}

/// Random switching script over the preset: each event toggles a uniformly
/// chosen appliance; gaps are uniform in [min_gap_s, max_gap_s] and the run
/// keeps `margin_s` of steady state at both ends.
inline ScenarioFile random_scenario(const Preset& preset, std::size_t n_events, std::uint64_t seed,
                                    double min_gap_s = 4.5, double max_gap_s = 6.0, double margin_s = 3.0) {
  require(min_gap_s > 0 && max_gap_s >= min_gap_s, ErrorKind::Validation, "invalid gap range");
  Rng rng(seed);
  ScenarioFile file;
  // Sampling is taken as locked to the grid: any frequency offset would turn
  // the harmonics of loads that stay on into a drifting phasor over the
  // 4 s differential span.
  file.script.mains = jitter_mains(rng, 0.0);
  for (const auto& a : preset.appliances) file.registry[a.id] = jitter_appliance(a.model, rng);
  std::map<std::string, bool> on;
  double t = margin_s;
  for (std::size_t e = 0; e < n_events; ++e) {
    if (e > 0) t += rng.uniform(min_gap_s, max_gap_s);
    const auto& id = preset.appliances[rng.below(preset.appliances.size())].id;
    file.script.events.push_back({t, id, on[id] ? SwitchAction::off : SwitchAction::on});
    on[id] = !on[id];
  }
  file.script.duration_s = std::ceil((t + margin_s) * 10.0) / 10.0;
  file.script.validate();
  return file;
}

/// For each script event, the detected event it produced: the first
/// detection at the event window or the next one with the matching
/// direction.
inline std::vector<std::optional<std::size_t>> match_events(const ScenarioScript& script,
                                                            std::span<const SwitchEvent> detected) {
  std::vector<std::optional<std::size_t>> out;
  for (const auto& ev : script.events) {
    const std::size_t w = event_window(ev.time_s);
    const auto dir = ev.action == SwitchAction::on ? Direction::on : Direction::off;
    std::optional<std::size_t> hit;
    for (std::size_t k = 0; k < detected.size() && !hit; ++k) {
      if ((detected[k].window_index == w || detected[k].window_index == w + 1) && detected[k].direction == dir) hit = k;
    }
    out.push_back(hit);
  }
  return out;
}

/// Differential-feature dataset: every guard-valid detected event of
/// `scenarios` random runs, labeled with the appliance the script toggled.
inline Dataset delta_dataset(const Preset& preset, std::size_t scenarios, std::size_t events_per_scenario,
                             std::uint64_t seed, DeltaSign sign = DeltaSign::pre_minus_post,
                             HarmonicMode mode = HarmonicMode::complex_pairs) {
  const FeatureLayout layout(mode);
  Dataset d;
  d.classes = preset.ids();
  d.layout_mode = mode;
  d.source = FeatureSource::delta;
  d.delta_sign = sign;
  d.columns = all_indices(layout.size());
  d.provenance = "synthetic:" + preset.name + ":delta:seed=" + std::to_string(seed);
  for (std::size_t s = 0; s < scenarios; ++s) {
    const auto file = random_scenario(preset, events_per_scenario, derive_seed(seed, 2 * s));
    const auto run = synth_scenario(file.script, file.registry, derive_seed(seed, 2 * s + 1));
    const auto feats = extract_stream(run.stream, layout);
    const auto events = detect_events(feats);
    const auto valid = event_guard(events);
    const auto matched = match_events(file.script, events);
    for (std::size_t e = 0; e < matched.size(); ++e) {
      if (!matched[e] || !valid[*matched[e]]) continue;
      const auto delta = delta_at(feats, events[*matched[e]].window_index, sign);
      if (!delta) continue;
      d.x.append_row(*delta);
      d.y.push_back(preset.class_of(file.script.events[e].appliance_id));
    }
  }
  d.validate(1);
  return d;
}

}  // namespace nilm
