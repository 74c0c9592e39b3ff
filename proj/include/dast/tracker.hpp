// SPDX-License-Identifier: Apache-2.0
//
// Inference loop. Per frame: crop the search region around the previous box,
// fuse the template triple, augment the search features, correlate, score
// every anchor, pick the best one under the cosine-window and shape
// penalties, then refresh (f_c, f_a) when the confidence clears the gate.

#pragma once

#include <filesystem>
#include <limits>
#include <vector>

#include "dast/image.hpp"
#include "dast/model.hpp"

namespace dast {

enum class ConfidenceMode {
  penalized,  // penalty * (w1 p1 + w2 p2) at the chosen anchor
  raw,        // w1 p1 + w2 p2 at the chosen anchor
};

struct TrackerConfig {
  double penalty_k = 0.05;
  double window_influence = 0.2;
  double size_lr = 0.38;
  double w1 = 1.0;  // cls1 softmax weight
  double w2 = 1.0;  // cls2 sigmoid weight
  double update_threshold = 1.18;
  ConfidenceMode confidence = ConfidenceMode::penalized;
  double min_size = 4.0;  // pixels

  void validate() const;
  void disable_updates() { update_threshold = std::numeric_limits<double>::infinity(); }
};

struct TrackState {
  CenterBox box;
  TemplateTriple templ;
  int frame = 0;
  int updates = 0;
};

struct FrameResult {
  Rect box;
  double confidence = 0.0;
  bool updated = false;
  bool rejected = false;  // non-finite scores, previous box kept
};

class Tracker {
 public:
  Tracker(const Model& model, TrackerConfig cfg);

  TrackState init(const Image& frame, const Rect& gt) const;
  Crop crop_search_region(const Image& frame, const TrackState& state) const;
  Crop crop_template(const Image& frame, const CenterBox& box) const;

  /// Locates the target and applies the update gate.
  FrameResult track(const Image& frame, TrackState& state) const;

  /// Returns true when the gate fired. With confidence <= threshold the
  /// state is left untouched.
  bool maybe_update_template(const Image& frame, const CenterBox& box, double confidence,
                             TrackState& state) const;

  const TrackerConfig& config() const { return cfg_; }
  const Model& model() const { return model_; }

 private:
  const Model& model_;
  TrackerConfig cfg_;
  std::vector<double> window_;  // per anchor
};

/// Tracks frames[1..] after initialising on frames[0] with `init_box`. The
/// first result is the init box with confidence 0.
std::vector<FrameResult> track_frames(const Tracker& tracker, const std::vector<Image>& frames,
                                      const Rect& init_box);

/// One "x,y,w,h" line per frame.
void write_results(const std::filesystem::path& path, const std::vector<FrameResult>& results);
/// "frame_index,confidence" per frame.
void write_confidences(const std::filesystem::path& path, const std::vector<FrameResult>& results);

}  // namespace dast
