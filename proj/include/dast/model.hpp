// SPDX-License-Identifier: Apache-2.0
//
// The full network: backbone, ST fusion, DA augmentation, correlation and
// RPN head, plus checkpoint IO.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "dast/backbone.hpp"
#include "dast/da_module.hpp"
#include "dast/rpn_head.hpp"
#include "dast/st_fusion.hpp"
#include "dast/tensor.hpp"

namespace dast {

struct ModelConfig {
  BackboneConfig backbone;
  AnchorConfig anchors;
  int head_hidden = 32;
  bool use_st = true;
  bool use_da = true;
  bool fc_bias = false;
  int da_filter_depth = 1;
  double context = 0.5;  // template context fraction of (w + h)

  void validate() const;
  /// Search crop side over template crop side.
  double search_ratio() const {
    return static_cast<double>(backbone.search_size) / backbone.template_size;
  }
  static ModelConfig paper_scale();
};

struct Model {
  ModelConfig cfg;
  BackboneParams backbone;
  AttentionParams st;
  DaParams da;
  HeadParams head;
  AnchorGrid grid;

  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  /// Every parameter, in a fixed order with unique names.
  std::vector<NamedTensor> named() const;
  std::vector<Tensor> backbone_params() const;
  /// Parameters the optimizer updates: ST/DA only when enabled, backbone
  /// only when not frozen.
  std::vector<Tensor> trainable(bool backbone_frozen) const;
};

/// [3 x S x S] crop (raw pixel values) -> features.
Tensor image_features(const Model& m, const Tensor& crop);

/// f*_z. Returns f_i unchanged when ST is disabled.
Tensor fuse_template(const Model& m, const TemplateTriple& triple);
/// f*_s. Returns f_s unchanged when DA is disabled.
Tensor augment_search(const Model& m, const Tensor& f_star_z, const Tensor& f_s);

/// Correlation of the fused template with the augmented search, then the
/// head. The template is centred per channel and the response normalised by
/// the template area.
HeadOutput predict(const Model& m, const Tensor& f_star_z, const Tensor& f_s);

struct CheckpointExtras {
  int epoch = -1;                               // last completed epoch
  std::vector<std::vector<double>> velocities;  // optimizer state, may be empty
};

void save_checkpoint(const std::filesystem::path& path, const Model& m,
                     const CheckpointExtras& extras = {});
Model load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras = nullptr);

}  // namespace dast
