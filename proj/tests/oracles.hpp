// SPDX-License-Identifier: Apache-2.0
//
// Naive reference implementations used only by the test suites. They are
// written independently of src/ on purpose: plain loops over std::vector.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t m = a.size(), k = b.size(), n = b[0].size();
  Mat c(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Mat softmax_rows(const Mat& a) {
  Mat out = a;
  for (auto& row : out) {
    double z = 0.0;
    for (double v : row) z += std::exp(v);
    for (double& v : row) v = std::exp(v) / z;
  }
  return out;
}

// Feature maps as [c][y][x].
using Vol = std::vector<std::vector<std::vector<double>>>;
// Kernels as [co][ci][ky][kx].
using Ker = std::vector<Vol>;

inline Vol conv2d(const Vol& x, const Ker& k, int stride, int pad) {
  const int cin = static_cast<int>(x.size()), h = static_cast<int>(x[0].size()),
            w = static_cast<int>(x[0][0].size());
  const int cout = static_cast<int>(k.size()), kh = static_cast<int>(k[0][0].size()),
            kw = static_cast<int>(k[0][0][0].size());
  const int oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  Vol out(cout, std::vector<std::vector<double>>(oh, std::vector<double>(ow, 0.0)));
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
              if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
              s += k[co][ci][ky][kx] * x[ci][iy][ix];
            }
        out[co][oy][ox] = s;
      }
  return out;
}

// Per-channel valid correlation of search `x` with template `z`.
inline Vol depthwise_xcorr(const Vol& z, const Vol& x) {
  const std::size_t c = z.size(), hz = z[0].size(), wz = z[0][0].size();
  const std::size_t hx = x[0].size(), wx = x[0][0].size();
  Vol out(c, std::vector<std::vector<double>>(hx - hz + 1, std::vector<double>(wx - wz + 1, 0.0)));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y + hz <= hx; ++y)
      for (std::size_t xx = 0; xx + wz <= wx; ++xx)
        for (std::size_t u = 0; u < hz; ++u)
          for (std::size_t v = 0; v < wz; ++v) out[ch][y][xx] += z[ch][u][v] * x[ch][y + u][xx + v];
  return out;
}

// Tokens [t][c] from a [c][y][x] volume, token index y*W + x.
inline Mat tokens(const Vol& v) {
  const std::size_t c = v.size(), h = v[0].size(), w = v[0][0].size();
  Mat t(h * w, std::vector<double>(c));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) t[y * w + x][ch] = v[ch][y][x];
  return t;
}

inline Vol untokens(const Mat& t, std::size_t h, std::size_t w) {
  const std::size_t c = t[0].size();
  Vol v(c, std::vector<std::vector<double>>(h, std::vector<double>(w)));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) v[ch][y][x] = t[y * w + x][ch];
  return v;
}

// softmax(Q K^T / sqrt(d)) V with projections applied by the caller.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(q[0].size()));
  Mat logits = matmul(q, transpose(k));
  for (auto& row : logits)
    for (double& x : row) x *= inv;
  return matmul(softmax_rows(logits), v);
}

inline Vol add(const Vol& a, const Vol& b) {
  Vol out = a;
  for (std::size_t c = 0; c < a.size(); ++c)
    for (std::size_t y = 0; y < a[0].size(); ++y)
      for (std::size_t x = 0; x < a[0][0].size(); ++x) out[c][y][x] += b[c][y][x];
  return out;
}

// ---- anchor labels ----

struct OracleBox {
  double cx, cy, w, h;
};

inline double oracle_iou(const OracleBox& a, const OracleBox& b) {
  const double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2, ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
  const double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2, by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
  double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  double ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw < 0) iw = 0;
  if (ih < 0) ih = 0;
  const double inter = iw * ih;
  const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  return uni <= 0 ? 0.0 : std::clamp(inter / uni, 0.0, 1.0);
}

inline std::vector<int> oracle_iou_labels(int fh, int fw, int stride, double ori, const std::vector<double>& ratios,
                                   int scale, const OracleBox& gt, double pos, double neg) {
  std::vector<int> out;
  for (double r : ratios) {
    const int ws = static_cast<int>(std::sqrt(stride * stride / r));
    const int hs = static_cast<int>(ws * r);
    for (int i = 0; i < fh; ++i)
      for (int j = 0; j < fw; ++j) {
        OracleBox a{ori + j * stride, ori + i * stride, double(ws * scale), double(hs * scale)};
        const double v = oracle_iou(a, gt);
        out.push_back(v > pos ? 1 : (v < neg ? 0 : -1));
      }
  }
  return out;
}

inline std::vector<int> oracle_center_labels(int fh, int fw, int stride, double ori, std::size_t na,
                                      double x1, double y1, double x2, double y2, double thr) {
  const double cx = ((x1 - ori) / stride + (x2 - ori) / stride) / 2;
  const double cy = ((y1 - ori) / stride + (y2 - ori) / stride) / 2;
  std::vector<int> out;
  for (std::size_t a = 0; a < na; ++a)
    for (int i = 0; i < fh; ++i)
      for (int j = 0; j < fw; ++j) out.push_back((cy - i) * (cy - i) + (cx - j) * (cx - j) < thr ? 1 : 0);
  return out;
}

// ---- tracking metrics ----

// Boxes as (x, y, w, h) with the top-left corner at (x, y).
inline double rect_iou(double ax, double ay, double aw, double ah, double bx, double by, double bw, double bh) {
  return oracle_iou({ax + aw / 2, ay + ah / 2, aw, ah}, {bx + bw / 2, by + bh / 2, bw, bh});
}

// Success rate at each threshold k/20, averaged.
inline double success_auc(const std::vector<double>& ious) {
  long hits = 0;
  for (int k = 0; k <= 20; ++k)
    for (double v : ious)
      if (v > k / 20.0) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ious.size() * 21);
}

inline double precision(const std::vector<double>& errors, double tau) {
  long hits = 0;
  for (double e : errors)
    if (e <= tau) ++hits;
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

inline double average_overlap(const std::vector<double>& ious) {
  double s = 0;
  for (double v : ious) s += v;
  return s / static_cast<double>(ious.size());
}

inline double success_rate(const std::vector<double>& ious, double t) {
  long hits = 0;
  for (double v : ious)
    if (v > t) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ious.size());
}

}  // namespace oracle
