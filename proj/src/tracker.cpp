// SPDX-License-Identifier: Apache-2.0

#include "dast/tracker.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace dast {

void TrackerConfig::validate() const {
  if (!(penalty_k >= 0.0)) throw ContractError("tracker: penalty_k must be >= 0");
  if (!(window_influence >= 0.0 && window_influence <= 1.0)) {
    throw ContractError("tracker: window_influence must lie in [0, 1]");
  }
  if (!(size_lr >= 0.0 && size_lr <= 1.0)) throw ContractError("tracker: size_lr must lie in [0, 1]");
  if (!(w1 >= 0.0) || !(w2 >= 0.0) || !(w1 + w2 > 0.0)) {
    throw ContractError("tracker: branch weights must be >= 0 and not both zero");
  }
  if (std::isnan(update_threshold)) throw ContractError("tracker: update_threshold is NaN");
  if (!(min_size > 0.0)) throw ContractError("tracker: min_size must be positive");
}

namespace {

double change(double r) { return std::max(r, 1.0 / r); }

double padded_size(double w, double h) {
  const double pad = (w + h) / 2.0;
  return std::sqrt((w + pad) * (h + pad));
}

std::vector<double> hanning(int n) {
  std::vector<double> v(static_cast<std::size_t>(n), 1.0);
  if (n == 1) return v;
  for (int i = 0; i < n; ++i) v[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  return v;
}

}  // namespace

Tracker::Tracker(const Model& model, TrackerConfig cfg) : model_(model), cfg_(cfg) {
  cfg_.validate();
  const AnchorGrid& g = model_.grid;
  const auto wy = hanning(g.feat_h), wx = hanning(g.feat_w);
  window_.resize(g.size());
  for (std::size_t a = 0; a < g.num_anchors(); ++a)
    for (int i = 0; i < g.feat_h; ++i)
      for (int j = 0; j < g.feat_w; ++j) window_[g.index(a, i, j)] = wy[i] * wx[j];
}

Crop Tracker::crop_template(const Image& frame, const CenterBox& box) const {
  const double side = template_side(box.w, box.h, model_.cfg.context);
  return crop_square(frame, box.cx, box.cy, side, model_.cfg.backbone.template_size);
}

Crop Tracker::crop_search_region(const Image& frame, const TrackState& state) const {
  const double side = template_side(state.box.w, state.box.h, model_.cfg.context) * model_.cfg.search_ratio();
  return crop_square(frame, state.box.cx, state.box.cy, side, model_.cfg.backbone.search_size);
}

TrackState Tracker::init(const Image& frame, const Rect& gt) const {
  if (!(gt.w > 0.0) || !(gt.h > 0.0) || !std::isfinite(gt.x) || !std::isfinite(gt.y)) {
    throw DataError("tracker: degenerate initial box " + std::to_string(gt.w) + "x" + std::to_string(gt.h));
  }
  TrackState s;
  s.box = to_center(gt);
  Tensor f = image_features(model_, crop_template(frame, s.box).patch);
  s.templ = {f, f, f};
  return s;
}

bool Tracker::maybe_update_template(const Image& frame, const CenterBox& box, double confidence,
                                    TrackState& state) const {
  if (!(confidence > cfg_.update_threshold)) return false;
  Tensor f_c = image_features(model_, crop_template(frame, box).patch);
  Tensor f_a = fuse_template(model_, {state.templ.f_i, state.templ.f_a, f_c});
  state.templ.f_c = f_c;
  state.templ.f_a = f_a;
  ++state.updates;
  return true;
}

FrameResult Tracker::track(const Image& frame, TrackState& state) const {
  ++state.frame;
  FrameResult res;
  const Crop search = crop_search_region(frame, state);
  const double scale_z = 1.0 / search.scale;  // crop pixels per frame pixel
  Tensor f_s = image_features(model_, search.patch);
  Tensor f_star_z = fuse_template(model_, state.templ);
  HeadOutput out = predict(model_, f_star_z, f_s);

  const auto p1 = positive_scores(out.cls1);
  const auto p2 = sigmoid_scores(out.cls2);
  const auto boxes = decode_boxes(out.reg, model_.grid);
  const double tw = state.box.w * scale_z, th = state.box.h * scale_z;
  const double target_size = padded_size(tw, th);
  const double wsum = cfg_.w1 + cfg_.w2;

  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_penalty = 0.0, best_raw = 0.0;
  bool finite = true;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const double score = cfg_.w1 * p1[k] + cfg_.w2 * p2[k];
    const CenterBox& b = boxes[k];
    const double s_c = change(padded_size(b.w, b.h) / target_size);
    const double r_c = change((tw / th) / (b.w / b.h));
    const double penalty = std::exp(-(r_c * s_c - 1.0) * cfg_.penalty_k);
    const double pscore = penalty * score * (1.0 - cfg_.window_influence) +
                          window_[k] * wsum * cfg_.window_influence;
    if (!std::isfinite(pscore) || !std::isfinite(b.cx) || !std::isfinite(b.cy)) {
      finite = false;
      break;
    }
    if (pscore > best_score) {
      best_score = pscore;
      best = k;
      best_penalty = penalty;
      best_raw = score;
    }
  }
  if (!finite) {
    res.box = to_rect(state.box);
    res.rejected = true;
    return res;
  }

  const CenterBox& b = boxes[best];
  const double half = model_.cfg.backbone.search_size / 2.0;
  const double lr = best_penalty * best_raw / wsum * cfg_.size_lr;
  CenterBox next;
  next.cx = state.box.cx + (b.cx - half) / scale_z;
  next.cy = state.box.cy + (b.cy - half) / scale_z;
  next.w = state.box.w * (1.0 - lr) + (b.w / scale_z) * lr;
  next.h = state.box.h * (1.0 - lr) + (b.h / scale_z) * lr;
  next.cx = std::clamp(next.cx, 0.0, static_cast<double>(frame.width));
  next.cy = std::clamp(next.cy, 0.0, static_cast<double>(frame.height));
  next.w = std::clamp(next.w, cfg_.min_size, std::max(cfg_.min_size, static_cast<double>(frame.width)));
  next.h = std::clamp(next.h, cfg_.min_size, std::max(cfg_.min_size, static_cast<double>(frame.height)));
  state.box = next;

  res.box = to_rect(next);
  res.confidence = cfg_.confidence == ConfidenceMode::penalized ? best_penalty * best_raw : best_raw;
  res.updated = maybe_update_template(frame, next, res.confidence, state);
  return res;
}

std::vector<FrameResult> track_frames(const Tracker& tracker, const std::vector<Image>& frames,
                                      const Rect& init_box) {
  std::vector<FrameResult> out;
  if (frames.empty()) return out;
  TrackState state = tracker.init(frames[0], init_box);
  FrameResult first;
  first.box = init_box;
  out.push_back(first);
  for (std::size_t i = 1; i < frames.size(); ++i) out.push_back(tracker.track(frames[i], state));
  return out;
}

void write_results(const std::filesystem::path& path, const std::vector<FrameResult>& results) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  for (const auto& r : results) out << r.box.x << ',' << r.box.y << ',' << r.box.w << ',' << r.box.h << '\n';
}

void write_confidences(const std::filesystem::path& path, const std::vector<FrameResult>& results) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  for (std::size_t i = 0; i < results.size(); ++i) out << i << ',' << results[i].confidence << '\n';
}

}  // namespace dast
