// SPDX-License-Identifier: Apache-2.0
//
// Synthetic sequences, OTB-style directory IO and the training triplet
// sampler.
//
// Directory layout per sequence:
//   <seq>/img/000001.png ...
//   <seq>/groundtruth_rect.txt   one "x,y,w,h" line per frame (',' or tab)
//   <seq>/attributes.txt         optional, comma-separated tags

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dast/image.hpp"
#include "dast/model.hpp"

namespace dast {

enum class Attribute { deformation, occlusion, scale_variation, background_clutter, motion_blur };

const std::vector<std::string>& attribute_names();
std::string to_string(Attribute a);
/// Throws ContractError listing the valid tags.
Attribute parse_attribute(const std::string& name);

struct SequenceSpec {
  std::string name = "seq";
  int length = 100;
  int width = 160;
  int height = 120;
  int target_w = 24;
  int target_h = 20;
  double speed = 1.5;  // pixels per frame
  double camera_speed = 0.75;  // background pan, pixels per frame
  bool zero_motion = false;
  std::set<Attribute> attributes;
  std::uint64_t seed = 1;
  bool keep_masks = false;

  void validate() const;
};

struct Sequence {
  std::string name;
  std::vector<Image> frames;
  std::vector<Rect> gt;
  std::set<Attribute> attributes;
  std::vector<std::optional<Rect>> occluders;  // per frame, synthetic only
  std::vector<std::vector<std::uint8_t>> masks;  // per frame target mask, when kept

  std::size_t size() const { return frames.size(); }
};

Sequence generate_sequence(const SequenceSpec& spec);

/// `count` sequences named <prefix>NNN with seeds base.seed + k. When
/// `base` has no attributes, every odd sequence gets one, in enum order.
std::vector<Sequence> generate_corpus(const SequenceSpec& base, int count, const std::string& prefix = "seq");

/// Fraction of `target` covered by `occluder`.
double coverage(const Rect& target, const Rect& occluder);

std::vector<Rect> read_boxes(const std::filesystem::path& path);
void write_boxes(const std::filesystem::path& path, const std::vector<Rect>& boxes);

/// Writes <root>/<seq.name>/...
void write_sequence_dir(const std::filesystem::path& root, const Sequence& seq);
Sequence load_sequence_dir(const std::filesystem::path& dir);
/// Every subdirectory of `root` holding a groundtruth_rect.txt, by name.
std::vector<Sequence> load_dataset(const std::filesystem::path& root);

// ---- training triplets ----------------------------------------------------

struct TripletConfig {
  int window = 50;
  double noise_sigma = 0.05;
  double noise_prob = 0.3;
  bool search_from_successor = true;  // else the search comes from T_c's frame
  double search_shift = 0.15;         // max centre offset, fraction of the search crop
  double search_scale_jitter = 0.05;
  double negative_prob = 0.2;  // search drawn from another sequence, all anchors negative

  void validate() const;
};

struct TripletIndices {
  int window_start = 0;
  int i = 0, a = 0, c = 0;  // template frames, c == a + 1
  int s = 0;                // search frame
};

TripletIndices sample_triplet_indices(int length, const TripletConfig& cfg, Rng& rng);

struct TrainingSample {
  Tensor t_i, t_a, t_c;  // template crops, raw pixels
  Tensor search;
  CenterBox search_gt;   // in search-crop pixels
  TripletIndices idx;
  bool negative = false;  // search shows a different target
};

TrainingSample make_training_sample(const Sequence& seq, const TripletIndices& idx,
                                    const ModelConfig& geometry, const TripletConfig& cfg, Rng& rng);

/// Replaces the search crop with one around the target of `other` at
/// `frame` and marks the sample negative.
void make_negative(TrainingSample& s, const Sequence& other, int frame, const ModelConfig& geometry,
                   const TripletConfig& cfg, Rng& rng);

}  // namespace dast
