#pragma once

// Online NILM pipeline: window -> features -> event -> [dF] -> predict.

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "nilm/events.hpp"
#include "nilm/features.hpp"
#include "nilm/models.hpp"
#include "nilm/signal_io.hpp"

namespace nilm {

enum class ClassifyMode { single, multi };

inline ClassifyMode parse_classify_mode(std::string_view s) {
  if (s == "single") return ClassifyMode::single;
  if (s == "multi") return ClassifyMode::multi;
  fail(ErrorKind::Parse, "unknown classify mode '" + std::string(s) + "'");
}

enum class EventStatus { labeled, invalid, pending };

inline const char* to_string(EventStatus s) {
  switch (s) {
    case EventStatus::labeled: return "labeled";
    case EventStatus::invalid: return "invalid";
    case EventStatus::pending: return "pending";
  }
  return "?";
}

struct EventLabel {
  SwitchEvent event;
  EventStatus status = EventStatus::pending;
  std::optional<ClassId> label;
};

/// Strictly sequential classifier over a window stream.
///
/// Single mode classifies whole windows on one side of the switch: F_{j+1}
/// for a turn-on (labeled when it arrives), F_{j-2} for a turn-off. The
/// switch itself may fall inside window j-1 or j, so neither is used.
/// Multi mode holds each event until window j+20 has arrived, drops it when
/// another event lies within +-20 windows or the history is too short, and
/// otherwise classifies the differential feature.
class OnlineClassifier {
 public:
  OnlineClassifier(const ModelFile& model, ClassifyMode mode, double threshold_w = kDefaultThresholdW)
      : model_(model), mode_(mode), layout_(model.layout()), detector_(threshold_w) {
    model_.validate();
    const auto want = mode == ClassifyMode::multi ? FeatureSource::delta : FeatureSource::window;
    require(model_.source == want, ErrorKind::Validation,
            std::string("model consumes ") + to_string(model_.source) + " features, mode '" +
                (mode == ClassifyMode::multi ? "multi" : "single") + "' needs " + to_string(want));
  }

  /// Feeds one window; returns the events resolved by it.
  std::vector<EventLabel> push(const SampleWindow& w) {
    FeatureVector fv = extract_features(w, layout_);
    std::vector<EventLabel> out;
    const auto fresh = detector_.feed(fv.window_index, fv.values[0]);
    if (mode_ == ClassifyMode::single) {
      for (const auto& ev : awaiting_on_) out.push_back({ev, EventStatus::labeled, model_.classify(fv.values)});
      awaiting_on_.clear();
      if (fresh && fresh->direction == Direction::on) {
        awaiting_on_.push_back(*fresh);
      } else if (fresh) {
        EventLabel lab{*fresh, EventStatus::invalid, std::nullopt};
        if (history_.size() == 2) {
          lab.status = EventStatus::labeled;
          lab.label = model_.classify(history_.front().values);
        }
        out.push_back(lab);
      }
      history_.push_back(std::move(fv));
      if (history_.size() > 2) history_.pop_front();
      return out;
    }

    buffer_.push(std::move(fv));
    if (fresh) waiting_.push_back(fresh->window_index);
    const std::size_t now = buffer_.find(w.index)->window_index;
    const auto& events = detector_.events();
    while (!waiting_.empty() && waiting_.front() + kDeltaRadius <= now) {
      const std::size_t j = waiting_.front();
      waiting_.pop_front();
      const SwitchEvent* ev = nullptr;
      bool crowded = false;
      for (const auto& e : events) {
        if (e.window_index == j) {
          ev = &e;
        } else if ((e.window_index > j ? e.window_index - j : j - e.window_index) <= kDeltaRadius) {
          crowded = true;
        }
      }
      EventLabel lab{*ev, EventStatus::invalid, std::nullopt};
      if (!crowded) {
        if (auto delta = buffer_.delta_at(j, model_.delta_sign)) {
          lab.status = EventStatus::labeled;
          lab.label = model_.classify(*delta);
        }
      }
      out.push_back(lab);
    }
    return out;
  }

  /// End of stream: events still waiting for their look-ahead stay pending.
  std::vector<EventLabel> finish() {
    std::vector<EventLabel> out;
    for (const auto& ev : awaiting_on_) out.push_back({ev, EventStatus::pending, std::nullopt});
    awaiting_on_.clear();
    for (auto j : waiting_) {
      for (const auto& e : detector_.events()) {
        if (e.window_index == j) out.push_back({e, EventStatus::pending, std::nullopt});
      }
    }
    waiting_.clear();
    return out;
  }

 private:
  ModelFile model_;
  ClassifyMode mode_;
  FeatureLayout layout_;
  EventDetector detector_;
  DeltaBuffer buffer_;
  std::deque<std::size_t> waiting_;
  std::deque<FeatureVector> history_;  // windows j-2, j-1 in single mode
  std::vector<SwitchEvent> awaiting_on_;
};

inline std::vector<EventLabel> classify_stream(const Stream& stream, const ModelFile& model, ClassifyMode mode,
                                               double threshold_w = kDefaultThresholdW) {
  OnlineClassifier clf(model, mode, threshold_w);
  WindowReader reader(stream);
  std::vector<EventLabel> out;
  while (auto w = reader.next()) {
    auto got = clf.push(*w);
    out.insert(out.end(), got.begin(), got.end());
  }
  auto rest = clf.finish();
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

/// Label log CSV: `window_index,direction,delta_p_w,status,label`.
inline std::string event_labels_to_csv(std::span<const EventLabel> labels, std::span<const std::string> class_names) {
  std::string out = "window_index,direction,delta_p_w,status,label\n";
  for (const auto& l : labels) {
    out += std::to_string(l.event.window_index) + "," + to_string(l.event.direction) + "," +
           format_double(l.event.delta_p_w) + "," + to_string(l.status) + "," +
           (l.label ? class_names[*l.label] : std::string()) + "\n";
  }
  return out;
}

// --- offline helpers --------------------------------------------------------------

inline std::vector<FeatureVector> extract_stream(const Stream& stream, const FeatureLayout& layout = FeatureLayout{}) {
  WindowReader reader(stream);
  std::vector<FeatureVector> out;
  out.reserve(reader.window_count());
  while (auto w = reader.next()) out.push_back(extract_features(*w, layout));
  return out;
}

inline std::vector<SwitchEvent> detect_events(std::span<const FeatureVector> features,
                                              double threshold_w = kDefaultThresholdW) {
  EventDetector det(threshold_w);
  for (const auto& fv : features) det.feed(fv.window_index, fv.values.at(0));
  return det.events();
}

/// Differential feature at window j over a complete feature track, or
/// nullopt when j is closer than 20 windows to either end.
inline std::optional<std::vector<double>> delta_at(std::span<const FeatureVector> features, std::size_t j,
                                                   DeltaSign sign = DeltaSign::pre_minus_post) {
  if (j < kDeltaRadius || j + kDeltaRadius >= features.size()) return std::nullopt;
  std::array<std::span<const double>, 3> pre, post;
  for (std::size_t k = 0; k < 3; ++k) {
    pre[k] = features[j - kDeltaOffsets[2 - k]].values;
    post[k] = features[j + kDeltaOffsets[k]].values;
  }
  return delta_feature(pre, post, sign);
}

}  // namespace nilm
