#pragma once

// Switching-event detection on the real-power track and the differential
// feature vector used for multi-appliance disaggregation:
//
//   dF_j = (F_{j-20} + F_{j-10} + F_{j-1}) / 3 - (F_{j+1} + F_{j+10} + F_{j+20}) / 3

#include <array>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "nilm/features.hpp"

namespace nilm {

inline constexpr double kDefaultThresholdW = 5.0;
inline constexpr std::size_t kDeltaSpan = 41;
inline constexpr std::size_t kDeltaRadius = 20;
inline constexpr std::array<std::size_t, 3> kDeltaOffsets = {1, 10, 20};

enum class Direction : std::uint8_t { on, off };

inline const char* to_string(Direction d) { return d == Direction::on ? "on" : "off"; }

struct SwitchEvent {
  std::size_t window_index = 0;
  double delta_p_w = 0.0;
  Direction direction = Direction::on;
};

/// Event iff |p_curr - p_prev| > threshold (strict).
inline std::optional<SwitchEvent> detect_event(double p_prev, double p_curr, double threshold_w = kDefaultThresholdW,
                                               std::size_t window_index = 0) {
  require(threshold_w > 0.0, ErrorKind::Validation, "threshold must be positive");
  const double delta = p_curr - p_prev;
  if (!(std::abs(delta) > threshold_w)) return std::nullopt;
  return SwitchEvent{window_index, delta, delta > 0.0 ? Direction::on : Direction::off};
}

/// Streaming detector over consecutive window powers. A switch that lands
/// inside a window shows up as two same-signed steps (partial window, then
/// full); such runs are merged into one event anchored at the first window.
class EventDetector {
 public:
  explicit EventDetector(double threshold_w = kDefaultThresholdW) : threshold_(threshold_w) {
    require(threshold_w > 0.0, ErrorKind::Validation, "threshold must be positive");
  }

  /// Returns the new event, if this window starts one.
  std::optional<SwitchEvent> feed(std::size_t window_index, double p) {
    std::optional<SwitchEvent> fresh;
    if (prev_p_) {
      if (auto ev = detect_event(*prev_p_, p, threshold_, window_index)) {
        const bool continues = !events_.empty() && events_.back().window_index + run_length_ == window_index &&
                               events_.back().direction == ev->direction;
        if (continues) {
          events_.back().delta_p_w += ev->delta_p_w;
          ++run_length_;
        } else {
          events_.push_back(*ev);
          run_length_ = 1;
          fresh = ev;
        }
      }
    }
    prev_p_ = p;
    return fresh;
  }

  const std::vector<SwitchEvent>& events() const { return events_; }

 private:
  double threshold_;
  std::optional<double> prev_p_;
  std::vector<SwitchEvent> events_;
  std::size_t run_length_ = 0;
};

enum class DeltaSign : std::uint8_t { pre_minus_post, post_minus_pre };

/// Elementwise (pre0 + pre1 + pre2)/3 - (post0 + post1 + post2)/3, or the
/// negation when `sign` is post_minus_pre.
inline std::vector<double> delta_feature(const std::array<std::span<const double>, 3>& pre,
                                         const std::array<std::span<const double>, 3>& post,
                                         DeltaSign sign = DeltaSign::pre_minus_post) {
  const std::size_t n = pre[0].size();
  for (std::size_t k = 0; k < 3; ++k) {
    require(pre[k].size() == n && post[k].size() == n, ErrorKind::Dimension, "delta feature inputs differ in length");
  }
  std::vector<double> out(n);
  for (std::size_t f = 0; f < n; ++f) {
    const double before = (pre[0][f] + pre[1][f] + pre[2][f]) / 3.0;
    const double after = (post[0][f] + post[1][f] + post[2][f]) / 3.0;
    out[f] = sign == DeltaSign::pre_minus_post ? before - after : after - before;
  }
  return out;
}

/// Ring of the most recent 41 feature vectors.
class DeltaBuffer {
 public:
  void push(FeatureVector fv) {
    require(ring_.empty() || fv.window_index == ring_.back().window_index + 1, ErrorKind::Validation,
            "delta buffer expects consecutive windows");
    ring_.push_back(std::move(fv));
    if (ring_.size() > kDeltaSpan) ring_.pop_front();
  }

  std::size_t capacity() const { return kDeltaSpan; }
  std::size_t size() const { return ring_.size(); }

  const FeatureVector* find(std::size_t window_index) const {
    if (ring_.empty() || window_index < ring_.front().window_index || window_index > ring_.back().window_index) {
      return nullptr;
    }
    return &ring_[window_index - ring_.front().window_index];
  }

  /// Differential feature for an event at window j, or nullopt while any of
  /// j-20, j-10, j-1, j+1, j+10, j+20 is not held.
  std::optional<std::vector<double>> delta_at(std::size_t j, DeltaSign sign = DeltaSign::pre_minus_post) const {
    if (j < kDeltaRadius) return std::nullopt;
    std::array<std::span<const double>, 3> pre, post;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto* before = find(j - kDeltaOffsets[2 - k]);
      const auto* after = find(j + kDeltaOffsets[k]);
      if (!before || !after) return std::nullopt;
      pre[k] = before->values;
      post[k] = after->values;
    }
    return delta_feature(pre, post, sign);
  }

 private:
  std::deque<FeatureVector> ring_;
};

/// An event is valid iff no other event lies within +-radius windows.
inline std::vector<bool> event_guard(std::span<const SwitchEvent> events, std::size_t radius = kDeltaRadius) {
  std::vector<bool> valid(events.size(), true);
  for (std::size_t a = 0; a < events.size(); ++a) {
    for (std::size_t b = 0; b < events.size(); ++b) {
      if (a == b) continue;
      const auto ia = events[a].window_index;
      const auto ib = events[b].window_index;
      if ((ia > ib ? ia - ib : ib - ia) <= radius) valid[a] = false;
    }
  }
  return valid;
}

/// Event log CSV: `window_index,delta_p_w,direction,valid`.
inline std::string events_to_csv(std::span<const SwitchEvent> events, const std::vector<bool>& valid) {
  std::string out = "window_index,delta_p_w,direction,valid\n";
  for (std::size_t k = 0; k < events.size(); ++k) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), events[k].delta_p_w);
    out += std::to_string(events[k].window_index) + "," + std::string(buf, res.ptr) + "," +
           to_string(events[k].direction) + "," + (valid[k] ? "true" : "false") + "\n";
  }
  return out;
}

}  // namespace nilm
