// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "dast/boxes.hpp"
#include "dast/tensor.hpp"

namespace dast {

/// RGB image stored as three planes (CHW), values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h, fill) {}

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool operator==(const Image&) const = default;
};

std::array<double, 3> channel_mean(const Image& img);

struct Crop {
  Tensor patch;         // [3 x out x out], raw pixel values
  bool padded = false;  // some sample fell outside the frame
  double scale = 1.0;   // frame pixels per crop pixel
};

/// Square crop of side `side` (frame pixels) centred at (cx, cy), resampled
/// bilinearly to `out_size`. Samples outside the frame take the per-channel
/// frame mean.
Crop crop_square(const Image& img, double cx, double cy, double side, int out_size);

/// Side of the context-padded template region: sqrt((w+p)(h+p)) with
/// p = context * (w + h).
double template_side(double w, double h, double context = 0.5);

/// Centres pixel values around zero before they enter the backbone.
Tensor to_network_input(const Tensor& patch);

Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& img);

}  // namespace dast
