// SPDX-License-Identifier: Apache-2.0

#include "dast/rpn_head.hpp"

#include <algorithm>
#include <cmath>

namespace dast {

void AnchorConfig::validate() const {
  if (ratios.empty()) throw ContractError("anchors: need at least one ratio");
  for (double r : ratios)
    if (!(r > 0.0)) throw ContractError("anchors: ratios must be positive");
  if (scale < 1 || stride < 1) throw ContractError("anchors: scale and stride must be positive");
}

double lattice_origin(int search_size, int feat_side, int stride) {
  return (search_size - static_cast<double>(feat_side - 1) * stride) / 2.0;
}

AnchorGrid generate_anchors(const AnchorConfig& cfg, int feat_h, int feat_w, double ori) {
  cfg.validate();
  if (feat_h < 1 || feat_w < 1) throw ContractError("anchors: empty feature lattice");
  AnchorGrid g;
  g.feat_h = feat_h;
  g.feat_w = feat_w;
  g.stride = cfg.stride;
  g.ori = ori;
  g.ratios = cfg.ratios;
  g.scale = cfg.scale;
  g.boxes.reserve(cfg.ratios.size() * g.locations());
  const double area = static_cast<double>(cfg.stride) * cfg.stride;
  for (double r : cfg.ratios) {
    // integer truncation as in the reference RPN anchors
    const int ws = static_cast<int>(std::sqrt(area / r));
    const int hs = static_cast<int>(ws * r);
    const double w = static_cast<double>(ws) * cfg.scale;
    const double h = static_cast<double>(hs) * cfg.scale;
    for (int i = 0; i < feat_h; ++i)
      for (int j = 0; j < feat_w; ++j)
        g.boxes.push_back({ori + j * cfg.stride, ori + i * cfg.stride, w, h});
  }
  return g;
}

// ---- labels ---------------------------------------------------------------

void LabelConfig::validate() const {
  if (!(iou_neg <= iou_pos)) throw ContractError("labels: iou_neg must not exceed iou_pos");
  if (!(center_thr >= 0.0)) throw ContractError("labels: centre threshold must be >= 0");
}

std::size_t LabelTargets::count(Label l) const {
  return static_cast<std::size_t>(std::count(cls1.begin(), cls1.end(), l));
}

namespace {

LabelTargets empty_targets(const AnchorGrid& grid) {
  LabelTargets t;
  t.cls1.assign(grid.size(), Label::negative);
  t.cls2.assign(grid.size(), 0.0);
  t.reg.assign(grid.size(), {0, 0, 0, 0});
  return t;
}

void fill_regression(const AnchorGrid& grid, const CenterBox& gt, LabelTargets& t) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    t.reg[k] = t.cls1[k] == Label::positive ? encode_box(gt, grid.boxes[k])
                                            : std::array<double, 4>{0, 0, 0, 0};
  }
}

}  // namespace

LabelTargets assign_labels_iou(const AnchorGrid& grid, const CenterBox& gt, double thr_pos,
                               double thr_neg) {
  if (!(thr_neg <= thr_pos)) throw ContractError("assign_labels_iou: thr_neg > thr_pos");
  LabelTargets t = empty_targets(grid);
  const Corners g = to_corners(gt);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double iou = compute_iou(to_corners(grid.boxes[k]), g);
    if (iou > thr_pos) {
      t.cls1[k] = Label::positive;
    } else if (iou < thr_neg) {
      t.cls1[k] = Label::negative;
    } else {
      t.cls1[k] = Label::ignore;
    }
    t.cls2[k] = t.cls1[k] == Label::positive ? 1.0 : 0.0;
  }
  fill_regression(grid, gt, t);
  return t;
}

std::array<double, 2> lattice_center(const AnchorGrid& grid, const Corners& gt, bool eq5_literal) {
  auto phi = [&](double c) { return (c - grid.ori) / grid.stride; };
  const double sx = phi(gt.x1) + phi(gt.x2);
  const double sy = phi(gt.y1) + phi(gt.y2);
  if (eq5_literal) return {sx / grid.feat_w, sy / grid.feat_h};
  return {sx / 2.0, sy / 2.0};
}

LabelTargets assign_labels_center_distance(const AnchorGrid& grid, const Corners& gt, double thr,
                                           bool eq5_literal) {
  if (!(thr >= 0.0)) throw ContractError("assign_labels_center_distance: negative threshold");
  LabelTargets t = empty_targets(grid);
  const auto [cx, cy] = lattice_center(grid, gt, eq5_literal);
  for (int i = 0; i < grid.feat_h; ++i)
    for (int j = 0; j < grid.feat_w; ++j) {
      const double d2 = (cy - i) * (cy - i) + (cx - j) * (cx - j);
      const bool pos = d2 < thr;
      for (std::size_t a = 0; a < grid.num_anchors(); ++a) {
        const std::size_t k = grid.index(a, i, j);
        t.cls1[k] = pos ? Label::positive : Label::negative;
        t.cls2[k] = pos ? 1.0 : 0.0;
      }
    }
  fill_regression(grid, to_center(gt), t);
  return t;
}

LabelTargets build_targets(const AnchorGrid& grid, const CenterBox& gt, const LabelConfig& cfg) {
  cfg.validate();
  LabelTargets center =
      assign_labels_center_distance(grid, to_corners(gt), cfg.center_thr, cfg.eq5_literal);
  if (cfg.mode == Assignment::center) return center;
  LabelTargets t = assign_labels_iou(grid, gt, cfg.iou_pos, cfg.iou_neg);
  t.cls2 = center.cls2;
  return t;
}

// ---- box parameterisation -------------------------------------------------

std::array<double, 4> encode_box(const CenterBox& gt, const CenterBox& anchor) {
  return {(gt.cx - anchor.cx) / anchor.w, (gt.cy - anchor.cy) / anchor.h, std::log(gt.w / anchor.w),
          std::log(gt.h / anchor.h)};
}

CenterBox decode_box(const std::array<double, 4>& d, const CenterBox& anchor) {
  const double dw = std::clamp(d[2], -kMaxLogScale, kMaxLogScale);
  const double dh = std::clamp(d[3], -kMaxLogScale, kMaxLogScale);
  return {anchor.cx + d[0] * anchor.w, anchor.cy + d[1] * anchor.h, anchor.w * std::exp(dw),
          anchor.h * std::exp(dh)};
}

std::vector<CenterBox> decode_boxes(const Tensor& reg, const AnchorGrid& grid) {
  const std::size_t na = grid.num_anchors(), hw = grid.locations();
  if (reg.rank() != 3 || reg.dim(0) != 4 * na || reg.dim(1) != static_cast<std::size_t>(grid.feat_h) ||
      reg.dim(2) != static_cast<std::size_t>(grid.feat_w)) {
    throw DimensionError("decode_boxes: reg " + shape_str(reg.shape()) + " does not match a " +
                         std::to_string(na) + "-anchor grid of " + std::to_string(grid.feat_h) + "x" +
                         std::to_string(grid.feat_w));
  }
  auto R = reg.data();
  std::vector<CenterBox> out(grid.size());
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t p = 0; p < hw; ++p) {
      std::array<double, 4> d;
      for (std::size_t k = 0; k < 4; ++k) d[k] = R[(4 * a + k) * hw + p];
      out[a * hw + p] = decode_box(d, grid.boxes[a * hw + p]);
    }
  return out;
}

// ---- head -----------------------------------------------------------------

namespace {

Branch init_branch(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Branch b;
  // 3x3 so each location sees the response around it
  b.w1 = Tensor::randn({hidden, in, 3, 3}, rng, std::sqrt(2.0 / static_cast<double>(9 * in)));
  b.b1 = Tensor::zeros({hidden});
  b.w2 = Tensor::randn({out, hidden, 1, 1}, rng, 0.01);
  b.b2 = Tensor::zeros({out});
  return b;
}

Tensor branch_forward(const Tensor& x, const Branch& b) {
  const std::size_t pad = (b.w1.dim(2) - 1) / 2;
  return conv2d(relu(conv2d(x, b.w1, b.b1, 1, pad)), b.w2, b.b2, 1, 0);
}

void name_branch(const std::string& prefix, const Branch& b, std::vector<NamedTensor>& out) {
  out.emplace_back(prefix + ".w1", b.w1);
  out.emplace_back(prefix + ".b1", b.b1);
  out.emplace_back(prefix + ".w2", b.w2);
  out.emplace_back(prefix + ".b2", b.b2);
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

HeadParams HeadParams::init(std::size_t channels, std::size_t hidden, std::size_t anchors, Rng& rng) {
  HeadParams p;
  p.cls1 = init_branch(channels, hidden, 2 * anchors, rng);
  p.cls2 = init_branch(channels, hidden, anchors, rng);
  p.reg = init_branch(channels, hidden, 4 * anchors, rng);
  return p;
}

HeadParams HeadParams::correlation_peak(std::size_t channels, std::size_t anchors, double gain) {
  // hidden unit 0 carries +sum, unit 1 carries -sum, so their difference
  // survives the ReLU.
  auto make = [&](std::size_t out, bool scored, double out_gain) {
    Branch b;
    b.w1 = Tensor::zeros({2, channels, 1, 1});
    for (std::size_t c = 0; c < channels; ++c) {
      b.w1[c] = 1.0;
      b.w1[channels + c] = -1.0;
    }
    b.b1 = Tensor::zeros({2});
    b.w2 = Tensor::zeros({out, 2, 1, 1});
    b.b2 = Tensor::zeros({out});
    if (scored) {
      const std::size_t stride = out / anchors;
      for (std::size_t a = 0; a < anchors; ++a) {
        const std::size_t ch = a * stride + stride - 1;
        b.w2[ch * 2] = out_gain;
        b.w2[ch * 2 + 1] = -out_gain;
      }
    }
    return b;
  };
  HeadParams p;
  p.cls1 = make(2 * anchors, true, gain);
  p.cls2 = make(anchors, true, gain);
  p.reg = make(4 * anchors, false, 0.0);
  return p;
}

std::vector<NamedTensor> HeadParams::named(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  name_branch(prefix + ".cls1", cls1, out);
  name_branch(prefix + ".cls2", cls2, out);
  name_branch(prefix + ".reg", reg, out);
  return out;
}

HeadOutput head_forward(const Tensor& response, const HeadParams& params) {
  if (response.rank() != 3) {
    throw DimensionError("head_forward: expected [CxHxW] response, got " + shape_str(response.shape()));
  }
  if (response.dim(0) != params.cls1.w1.dim(1)) {
    throw DimensionError("head_forward: response has " + std::to_string(response.dim(0)) +
                         " channels, head expects " + std::to_string(params.cls1.w1.dim(1)));
  }
  return {branch_forward(response, params.cls1), branch_forward(response, params.cls2),
          branch_forward(response, params.reg)};
}

std::vector<double> positive_scores(const Tensor& cls1) {
  const std::size_t na = cls1.dim(0) / 2, hw = cls1.dim(1) * cls1.dim(2);
  auto L = cls1.data();
  std::vector<double> s(na * hw);
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t p = 0; p < hw; ++p)
      s[a * hw + p] = sigmoid(L[(2 * a + 1) * hw + p] - L[2 * a * hw + p]);
  return s;
}

std::vector<double> sigmoid_scores(const Tensor& cls2) {
  std::vector<double> s(cls2.numel());
  auto L = cls2.data();
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = sigmoid(L[k]);
  return s;
}

// ---- losses ---------------------------------------------------------------

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !(lambda1 >= 0.0)) throw ContractError("loss weights must be >= 0");
}

Tensor cls1_loss(const Tensor& logits, const LabelTargets& targets) {
  const std::size_t n = targets.cls1.size();
  if (logits.rank() != 3 || logits.dim(0) % 2 != 0 || logits.numel() != 2 * n) {
    throw DimensionError("cls1_loss: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(n) + " anchors");
  }
  const std::size_t hw = logits.dim(1) * logits.dim(2);
  const std::size_t used = n - targets.count(Label::ignore);
  if (used == 0) throw ContractError("cls1_loss: every anchor is ignored");
  auto L = logits.data();
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (targets.cls1[k] == Label::ignore) continue;
    const std::size_t a = k / hw, p = k % hw;
    const double neg = L[2 * a * hw + p], pos = L[(2 * a + 1) * hw + p];
    const double m = std::max(neg, pos);
    const double lse = m + std::log(std::exp(neg - m) + std::exp(pos - m));
    total += lse - (targets.cls1[k] == Label::positive ? pos : neg);
  }
  const double inv = 1.0 / static_cast<double>(used);
  return record("cls1_loss", Tensor::scalar(total * inv), {logits},
                [logits, labels = targets.cls1, hw, inv](std::span<const double> g) {
                  auto gl = grad_sink(logits);
                  if (gl.empty()) return;
                  auto L = logits.data();
                  for (std::size_t k = 0; k < labels.size(); ++k) {
                    if (labels[k] == Label::ignore) continue;
                    const std::size_t a = k / hw, p = k % hw;
                    const std::size_t in = 2 * a * hw + p, ip = (2 * a + 1) * hw + p;
                    const double q = sigmoid(L[ip] - L[in]);
                    const double y = labels[k] == Label::positive ? 1.0 : 0.0;
                    gl[ip] += g[0] * inv * (q - y);
                    gl[in] += g[0] * inv * (y - q);
                  }
                });
}

Tensor cls2_loss(const Tensor& logits, const LabelTargets& targets) {
  const std::size_t n = targets.cls2.size();
  if (logits.numel() != n || n == 0) {
    throw DimensionError("cls2_loss: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(n) + " anchors");
  }
  auto L = logits.data();
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = L[k], y = targets.cls2[k];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  const double inv = 1.0 / static_cast<double>(n);
  return record("cls2_loss", Tensor::scalar(total * inv), {logits},
                [logits, labels = targets.cls2, inv](std::span<const double> g) {
                  auto gl = grad_sink(logits);
                  if (gl.empty()) return;
                  auto L = logits.data();
                  for (std::size_t k = 0; k < labels.size(); ++k)
                    gl[k] += g[0] * inv * (sigmoid(L[k]) - labels[k]);
                });
}

Tensor gather_positive(const Tensor& reg, const LabelTargets& targets) {
  const std::size_t n = targets.cls1.size();
  if (reg.rank() != 3 || reg.numel() != 4 * n) {
    throw DimensionError("gather_positive: reg " + shape_str(reg.shape()) + " vs " +
                         std::to_string(n) + " anchors");
  }
  const std::size_t hw = reg.dim(1) * reg.dim(2);
  std::vector<std::size_t> src;
  for (std::size_t k = 0; k < n; ++k) {
    if (targets.cls1[k] != Label::positive) continue;
    const std::size_t a = k / hw, p = k % hw;
    for (std::size_t c = 0; c < 4; ++c) src.push_back((4 * a + c) * hw + p);
  }
  Tensor out({src.size() / 4, 4});
  auto R = reg.data();
  auto O = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) O[i] = R[src[i]];
  return record("gather_positive", out, {reg}, [reg, src](std::span<const double> g) {
    auto gr = grad_sink(reg);
    if (gr.empty()) return;
    for (std::size_t i = 0; i < src.size(); ++i) gr[src[i]] += g[i];
  });
}

Tensor positive_targets(const LabelTargets& targets) {
  std::vector<double> v;
  for (std::size_t k = 0; k < targets.cls1.size(); ++k)
    if (targets.cls1[k] == Label::positive) v.insert(v.end(), targets.reg[k].begin(), targets.reg[k].end());
  const std::size_t rows = v.size() / 4;
  return Tensor({rows, 4}, std::move(v));
}

double smooth_l1_scalar(double x) {
  const double ax = std::abs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target, bool* empty) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("smooth_l1: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  const std::size_t rows = pred.rank() == 0 ? 0 : pred.dim(0);
  if (empty) *empty = rows == 0 || pred.numel() == 0;
  if (rows == 0 || pred.numel() == 0) return Tensor::scalar(0.0);
  auto P = pred.data();
  auto T = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) total += smooth_l1_scalar(P[i] - T[i]);
  const double inv = 1.0 / static_cast<double>(rows);
  return record("smooth_l1", Tensor::scalar(total * inv), {pred, target},
                [pred, target, inv](std::span<const double> g) {
                  auto P = pred.data();
                  auto T = target.data();
                  auto gp = grad_sink(pred);
                  auto gt = grad_sink(target);
                  for (std::size_t i = 0; i < P.size(); ++i) {
                    const double x = P[i] - T[i];
                    const double d = g[0] * inv * (std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0));
                    if (!gp.empty()) gp[i] += d;
                    if (!gt.empty()) gt[i] -= d;
                  }
                });
}

double total_loss(double l_cls1, double l_cls2, double l_reg, const LossWeights& w) {
  w.validate();
  if (!std::isfinite(l_cls1) || !std::isfinite(l_cls2) || !std::isfinite(l_reg)) {
    throw NumericError("total_loss: non-finite component");
  }
  return w.lambda1 * (w.lambda * l_cls1 + l_cls2) + l_reg;
}

Tensor total_loss(const Tensor& l_cls1, const Tensor& l_cls2, const Tensor& l_reg, const LossWeights& w) {
  total_loss(l_cls1.item(), l_cls2.item(), l_reg.item(), w);  // validation only
  return add(scale(add(scale(l_cls1, w.lambda), l_cls2), w.lambda1), l_reg);
}

LabelTargets negative_targets(std::size_t anchors) {
  LabelTargets t;
  t.cls1.assign(anchors, Label::negative);
  t.cls2.assign(anchors, 0.0);
  t.reg.assign(anchors, {0.0, 0.0, 0.0, 0.0});
  return t;
}

Losses compute_losses(const HeadOutput& out, const LabelTargets& targets, const LossWeights& w) {
  Losses l;
  l.cls1 = cls1_loss(out.cls1, targets);
  l.cls2 = cls2_loss(out.cls2, targets);
  l.reg = smooth_l1(gather_positive(out.reg, targets), positive_targets(targets), &l.no_positives);
  l.total = total_loss(l.cls1, l.cls2, l.reg, w);
  return l;
}

}  // namespace dast
