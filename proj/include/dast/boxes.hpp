// SPDX-License-Identifier: Apache-2.0
//
// Box conventions. All coordinates are continuous: pixel i covers [i, i+1),
// so the centre of an image of side S is S/2.

#pragma once

#include <algorithm>
#include <cmath>

namespace dast {

/// Top-left + size, the OTB ground-truth convention.
struct Rect {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const Rect&) const = default;
};

struct CenterBox {
  double cx = 0, cy = 0, w = 0, h = 0;
  bool operator==(const CenterBox&) const = default;
};

struct Corners {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const Corners&) const = default;
};

inline CenterBox to_center(const Rect& r) { return {r.x + r.w / 2, r.y + r.h / 2, r.w, r.h}; }
inline Rect to_rect(const CenterBox& b) { return {b.cx - b.w / 2, b.cy - b.h / 2, b.w, b.h}; }
inline Corners to_corners(const Rect& r) { return {r.x, r.y, r.x + r.w, r.y + r.h}; }
inline Corners to_corners(const CenterBox& b) {
  return {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2};
}
inline CenterBox to_center(const Corners& c) {
  return {(c.x1 + c.x2) / 2, (c.y1 + c.y2) / 2, c.x2 - c.x1, c.y2 - c.y1};
}

/// Intersection over union; 0 when the union is empty.
inline double compute_iou(const Corners& a, const Corners& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double area_a = std::max(0.0, a.x2 - a.x1) * std::max(0.0, a.y2 - a.y1);
  const double area_b = std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double compute_iou(const Rect& a, const Rect& b) {
  return compute_iou(to_corners(a), to_corners(b));
}

inline double center_error(const Rect& a, const Rect& b) {
  const CenterBox ca = to_center(a), cb = to_center(b);
  return std::hypot(ca.cx - cb.cx, ca.cy - cb.cy);
}

}  // namespace dast
