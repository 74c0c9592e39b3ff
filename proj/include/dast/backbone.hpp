// SPDX-License-Identifier: Apache-2.0
//
// Small convolutional feature extractor and depthwise cross-correlation.
//
// Architecture: one valid 3x3 stride-2 conv + ReLU per entry of `channels`
// (so total_stride == 2^channels.size()), followed by a 1x1 projection to
// `feature_channels`. With valid convolutions an input of side 8k+7 yields a
// feature map of side k, and feature cell j is centred on input pixel
// 8j + 7.5 (continuous coordinates).

#pragma once

#include <vector>

#include "dast/tensor.hpp"

namespace dast {

struct BackboneConfig {
  std::vector<int> channels{8, 16, 16};
  int feature_channels = 16;
  int total_stride = 8;
  int template_size = 63;
  int search_size = 127;

  /// Spatial side of the feature map for an input of side `input`.
  int feature_size(int input) const;
  int template_feature_size() const { return feature_size(template_size); }
  int search_feature_size() const { return feature_size(search_size); }
  /// Side of the correlation response map.
  int response_size() const { return search_feature_size() - template_feature_size() + 1; }
  void validate() const;

  /// Full-size geometry: 127 px template, 287 px search, 32/64/96 -> 64.
  static BackboneConfig paper_scale();
};

struct BackboneParams {
  std::vector<Tensor> kernels;  // stage convs, then the 1x1 projection
  std::vector<Tensor> biases;

  static BackboneParams init(const BackboneConfig& cfg, Rng& rng);
  std::vector<NamedTensor> named(const std::string& prefix = "backbone") const;
};

/// image: [3 x H x W] network input. Throws on wrong channel count or
/// non-finite pixels.
Tensor extract_features(const Tensor& image, const BackboneParams& params,
                        const BackboneConfig& cfg);

/// Depthwise correlation: channel c of the output is the valid correlation of
/// search channel c with template channel c.
Tensor cross_correlate(const Tensor& templ, const Tensor& search);

/// Subtracts each channel's spatial mean from a [C x H x W] map.
Tensor center_channels(const Tensor& x);

}  // namespace dast
