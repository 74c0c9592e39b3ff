// SPDX-License-Identifier: Apache-2.0
//
// Region proposal head: anchors, label assignment, the three output branches
// and their losses.
//
// Per-anchor arrays are laid out anchor-major: index (a * h + i) * w + j.
// cls1 channels are (2a, 2a+1) = (negative, positive) for anchor a, reg
// channels are 4a + k for k in (dx, dy, dw, dh).

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dast/boxes.hpp"
#include "dast/tensor.hpp"

namespace dast {

struct AnchorConfig {
  std::vector<double> ratios{0.33, 0.5, 1.0, 2.0, 3.0};
  int scale = 4;
  int stride = 8;
  void validate() const;
};

struct AnchorGrid {
  int feat_h = 0, feat_w = 0;
  int stride = 8;
  double ori = 0.0;
  std::vector<double> ratios;
  int scale = 0;
  std::vector<CenterBox> boxes;  // search-crop pixels

  std::size_t num_anchors() const { return ratios.size(); }
  std::size_t locations() const { return static_cast<std::size_t>(feat_h) * feat_w; }
  std::size_t size() const { return boxes.size(); }
  std::size_t index(std::size_t a, std::size_t i, std::size_t j) const {
    return (a * feat_h + i) * feat_w + j;
  }
  const CenterBox& at(std::size_t a, std::size_t i, std::size_t j) const { return boxes[index(a, i, j)]; }
};

/// Lattice origin that centres a side-`feat_side` response in the crop.
double lattice_origin(int search_size, int feat_side, int stride);

AnchorGrid generate_anchors(const AnchorConfig& cfg, int feat_h, int feat_w, double ori);

// ---- labels ---------------------------------------------------------------

enum class Label : std::int8_t { ignore = -1, negative = 0, positive = 1 };
enum class Assignment { iou, center };

struct LabelConfig {
  Assignment mode = Assignment::center;
  double iou_pos = 0.6;
  double iou_neg = 0.3;
  double center_thr = 4.0;   // squared feature-cell distance
  bool eq5_literal = false;  // divide corner sums by the map size instead of 2
  void validate() const;
};

struct LabelTargets {
  std::vector<Label> cls1;
  std::vector<double> cls2;               // 0/1
  std::vector<std::array<double, 4>> reg;  // zero except at cls1 positives

  std::size_t count(Label l) const;
};

/// Every anchor negative: the search region does not hold the target.
LabelTargets negative_targets(std::size_t anchors);

/// IoU > thr_pos positive, IoU < thr_neg negative, otherwise ignore.
LabelTargets assign_labels_iou(const AnchorGrid& grid, const CenterBox& gt, double thr_pos,
                               double thr_neg);

/// Maps the gt corners onto the lattice, takes their midpoint and marks
/// locations whose squared distance is < thr as positive (all anchors at a
/// location share the label). No ignore band.
LabelTargets assign_labels_center_distance(const AnchorGrid& grid, const Corners& gt, double thr,
                                           bool eq5_literal = false);

/// Feature-lattice coordinates (x, y) of the gt centre used by the centre
/// rule.
std::array<double, 2> lattice_center(const AnchorGrid& grid, const Corners& gt, bool eq5_literal);

/// Training targets: cls1 by the configured rule, cls2 always by centre
/// distance, reg for every cls1 positive.
LabelTargets build_targets(const AnchorGrid& grid, const CenterBox& gt, const LabelConfig& cfg);

// ---- box parameterisation -------------------------------------------------

constexpr double kMaxLogScale = 4.0;

std::array<double, 4> encode_box(const CenterBox& gt, const CenterBox& anchor);
CenterBox decode_box(const std::array<double, 4>& d, const CenterBox& anchor);
std::vector<CenterBox> decode_boxes(const Tensor& reg, const AnchorGrid& grid);

// ---- head -----------------------------------------------------------------

/// 3x3 conv (pad 1) -> ReLU -> 1x1 conv.
struct Branch {
  Tensor w1, b1, w2, b2;
};

struct HeadParams {
  Branch cls1, cls2, reg;

  static HeadParams init(std::size_t channels, std::size_t hidden, std::size_t anchors, Rng& rng);
  /// Untrained head whose positive score is `gain` times the channel sum of
  /// the response, with zero regression. Used for sanity runs.
  static HeadParams correlation_peak(std::size_t channels, std::size_t anchors, double gain = 1.0);
  std::size_t anchors() const { return cls2.w2.dim(0); }
  std::vector<NamedTensor> named(const std::string& prefix = "head") const;
};

struct HeadOutput {
  Tensor cls1;  // [2A x h x w]
  Tensor cls2;  // [A x h x w]
  Tensor reg;   // [4A x h x w]
};

HeadOutput head_forward(const Tensor& response, const HeadParams& params);

/// Softmax probability of the positive class per anchor.
std::vector<double> positive_scores(const Tensor& cls1);
/// Sigmoid of the cls2 logits per anchor.
std::vector<double> sigmoid_scores(const Tensor& cls2);

// ---- losses ---------------------------------------------------------------

struct LossWeights {
  double lambda = 1.0;   // cls1 vs cls2
  double lambda1 = 1.0;  // classification vs regression
  void validate() const;
};

/// Two-way cross-entropy averaged over non-ignored anchors. Throws
/// ContractError when every anchor is ignored.
Tensor cls1_loss(const Tensor& logits, const LabelTargets& targets);
/// Binary cross-entropy with logits averaged over all anchors.
Tensor cls2_loss(const Tensor& logits, const LabelTargets& targets);

/// Rows of `reg` at cls1 positives, [P x 4].
Tensor gather_positive(const Tensor& reg, const LabelTargets& targets);
Tensor positive_targets(const LabelTargets& targets);

/// Sum over the last axis of the piecewise loss, mean over rows. Zero with
/// `*empty = true` when there are no rows.
Tensor smooth_l1(const Tensor& pred, const Tensor& target, bool* empty = nullptr);
double smooth_l1_scalar(double x);

double total_loss(double l_cls1, double l_cls2, double l_reg, const LossWeights& w);
Tensor total_loss(const Tensor& l_cls1, const Tensor& l_cls2, const Tensor& l_reg,
                  const LossWeights& w);

struct Losses {
  Tensor cls1, cls2, reg, total;
  bool no_positives = false;
};

Losses compute_losses(const HeadOutput& out, const LabelTargets& targets, const LossWeights& w);

}  // namespace dast
