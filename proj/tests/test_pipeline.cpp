#include "helpers.hpp"
#include "nilm/presets.hpp"

using namespace nilm;

namespace {

ModelFile window_rf(const Preset& p, std::uint64_t seed) {
  Hyper h;
  h.trees = 30;
  return fit_model(window_dataset(p, 30, seed), h, seed);
}

}  // namespace

TEST(Presets, Catalogues) {
  EXPECT_EQ(make_preset("single7").appliances.size(), 7u);
  EXPECT_EQ(make_preset("multi5").appliances.size(), 5u);
  const auto h4 = make_preset("harmonic4");
  for (const auto& a : h4.appliances) {
    double distortion = 0;
    for (auto [order, amp] : a.model.harmonic_profile) {
      if (order > 1) distortion += amp * amp;
    }
    EXPECT_NEAR(distortion, 0.36, 1e-12) << a.id;
    EXPECT_EQ(a.model.nominal_power_w, 40.0);
  }
  EXPECT_NILM_ERROR(make_preset("nope"), ErrorKind::Validation);
}

TEST(Presets, WindowDatasetSeeded) {
  const auto p = make_preset("harmonic4");
  const auto a = window_dataset(p, 3, 5), b = window_dataset(p, 3, 5), c = window_dataset(p, 3, 6);
  EXPECT_EQ(a.x, b.x);
  EXPECT_NE(a.x, c.x);
  EXPECT_EQ(a.size(), 12u);
  EXPECT_EQ(a.dim(), 103u);
}

TEST(Presets, RandomScenarioRespectsGaps) {
  const auto f = random_scenario(make_preset("multi5"), 12, 3);
  EXPECT_TRUE(f.script.events_spaced(4.5));
  EXPECT_GE(f.script.events.front().time_s, 3.0);
  EXPECT_GE(f.script.duration_s - f.script.events.back().time_s, 3.0);
  EXPECT_EQ(f.script.mains.freq_hz, 50.0);
  EXPECT_EQ(scenario_to_text(random_scenario(make_preset("multi5"), 12, 3)), scenario_to_text(f));
}

TEST(Superposition, DeltaPowerMatchesSoloLoad) {
  const auto p = make_preset("multi5");
  auto f = random_scenario(p, 10, 17);
  // on window boundaries, so no window straddles an event
  for (auto& ev : f.script.events) ev.time_s = std::round(ev.time_s * 10.0) / 10.0;
  const auto run = synth_scenario(f.script, f.registry, 17);
  const auto feats = extract_stream(run.stream);
  const auto events = detect_events(feats);
  const auto matched = match_events(f.script, events);
  std::size_t checked = 0;
  for (std::size_t e = 0; e < matched.size(); ++e) {
    ASSERT_TRUE(matched[e]) << "event " << e << " undetected";
    const auto d = delta_at(feats, events[*matched[e]].window_index, DeltaSign::post_minus_pre);
    if (!d) continue;
    const auto& ev = f.script.events[e];
    const auto& m = f.registry.at(ev.appliance_id);
    const double solo_p = m.kind == ApplianceKind::reactive ? m.nominal_power_w * std::cos(m.phase_rad) : m.nominal_power_w;
    const double sign = ev.action == SwitchAction::on ? 1.0 : -1.0;
    EXPECT_NEAR((*d)[0] * sign, solo_p, 0.02 * solo_p + 0.2) << ev.appliance_id;
    ++checked;
  }
  EXPECT_GE(checked, 8u);
}

TEST(Online, SingleModeMatchesOfflineFeatures) {
  const auto p = make_preset("single7");
  const auto model = window_rf(p, 1);
  const auto f = parse_scenario(read_file(std::string(NILM_SOURCE_DIR) + "/scenarios/single7_sequence.txt"));
  const auto run = synth_scenario(f.script, f.registry, 2);
  const auto labels = classify_stream(run.stream, model, ClassifyMode::single);
  const auto feats = extract_stream(run.stream);
  const auto events = detect_events(feats);
  ASSERT_EQ(labels.size(), events.size());
  ASSERT_EQ(labels.size(), f.script.events.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const std::size_t j = events[k].window_index;
    const auto& src = events[k].direction == Direction::on ? feats[j + 1] : feats[j - 2];
    EXPECT_EQ(labels[k].status, EventStatus::labeled);
    EXPECT_EQ(*labels[k].label, model.classify(src.values));
    EXPECT_EQ(model.class_names[*labels[k].label], f.script.events[k].appliance_id) << k;
  }
}

TEST(Online, MultiModeMatchesOfflineDelta) {
  const auto p = make_preset("multi5");
  const auto d = delta_dataset(p, 4, 8, 3);
  Hyper h;
  h.trees = 20;
  const auto model = fit_model(d, h, 3);
  const auto f = random_scenario(p, 8, 99);
  const auto run = synth_scenario(f.script, f.registry, 98);
  const auto labels = classify_stream(run.stream, model, ClassifyMode::multi);
  const auto feats = extract_stream(run.stream);
  const auto events = detect_events(feats);
  const auto valid = event_guard(events);
  ASSERT_EQ(labels.size(), events.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    ASSERT_EQ(labels[k].event.window_index, events[k].window_index);
    const auto delta = delta_at(feats, events[k].window_index, model.delta_sign);
    if (!valid[k]) {
      EXPECT_EQ(labels[k].status, EventStatus::invalid);
    } else if (delta) {
      EXPECT_EQ(labels[k].status, EventStatus::labeled);
      EXPECT_EQ(*labels[k].label, model.classify(*delta));
    } else {
      EXPECT_NE(labels[k].status, EventStatus::labeled);
    }
  }
}

TEST(Online, CrowdedAndLateEvents) {
  ScenarioFile f;
  f.script.duration_s = 8.0;
  f.registry["lamp"] = ApplianceModel{ApplianceKind::resistive, 100.0};
  f.registry["heater"] = ApplianceModel{ApplianceKind::resistive, 500.0};
  // two events 1 s apart, then one too close to the end for its look-ahead
  f.script.events = {{2.5, "lamp", SwitchAction::on}, {3.5, "heater", SwitchAction::on}, {7.0, "lamp", SwitchAction::off}};
  const auto run = synth_scenario(f.script, f.registry, 1);
  auto d = delta_dataset(make_preset("multi5"), 3, 6, 1);
  Hyper h;
  h.trees = 5;
  const auto model = fit_model(d, h, 1);
  const auto labels = classify_stream(run.stream, model, ClassifyMode::multi);
  ASSERT_EQ(labels.size(), 3u);
  EXPECT_EQ(labels[0].status, EventStatus::invalid);
  EXPECT_EQ(labels[1].status, EventStatus::invalid);
  EXPECT_EQ(labels[2].status, EventStatus::pending);
  const auto csv = event_labels_to_csv(labels, model.class_names);
  EXPECT_NE(csv.find("70,off,"), std::string::npos);
  EXPECT_NE(csv.find(",pending,\n"), std::string::npos);
}

TEST(Online, ModeMustMatchModelSource) {
  const auto model = window_rf(make_preset("harmonic4"), 1);
  EXPECT_NILM_ERROR(OnlineClassifier(model, ClassifyMode::multi), ErrorKind::Validation);
  EXPECT_NILM_ERROR(parse_classify_mode("dual"), ErrorKind::Parse);
}

TEST(Online, ThresholdChangesDetections) {
  const auto f = parse_scenario(read_file(std::string(NILM_SOURCE_DIR) + "/scenarios/single7_sequence.txt"));
  const auto run = synth_scenario(f.script, f.registry, 2);
  const auto model = window_rf(make_preset("single7"), 1);
  // the 8 W charger drops out above 10 W
  EXPECT_EQ(classify_stream(run.stream, model, ClassifyMode::single, 10.0).size(), 6u);
}
