// SPDX-License-Identifier: Apache-2.0

#include "dast/model.hpp"

#include "dast/checkpoint.hpp"
#include "dast/config.hpp"
#include "dast/image.hpp"

namespace dast {

void ModelConfig::validate() const {
  backbone.validate();
  anchors.validate();
  if (anchors.stride != backbone.total_stride) {
    throw ContractError("model: anchor stride " + std::to_string(anchors.stride) +
                        " differs from backbone stride " + std::to_string(backbone.total_stride));
  }
  if (head_hidden < 1) throw ContractError("model: head_hidden must be positive");
  if (da_filter_depth < 1 || da_filter_depth > 2) throw ContractError("model: da_filter_depth must be 1 or 2");
  if (!(context >= 0.0)) throw ContractError("model: context must be >= 0");
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig cfg;
  cfg.backbone = BackboneConfig::paper_scale();
  cfg.anchors.scale = 8;
  cfg.head_hidden = 128;
  return cfg;
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.cfg = cfg;
  const auto c = static_cast<std::size_t>(cfg.backbone.feature_channels);
  m.backbone = BackboneParams::init(cfg.backbone, rng);
  m.st = AttentionParams::init(c, cfg.fc_bias, rng);
  m.da = DaParams::init(c, cfg.da_filter_depth, cfg.fc_bias, rng);
  m.head = HeadParams::init(c, static_cast<std::size_t>(cfg.head_hidden), cfg.anchors.ratios.size(), rng);
  const int r = cfg.backbone.response_size();
  m.grid = generate_anchors(cfg.anchors, r, r,
                            lattice_origin(cfg.backbone.search_size, r, cfg.backbone.total_stride));
  return m;
}

std::vector<NamedTensor> Model::named() const {
  std::vector<NamedTensor> out = backbone.named("backbone");
  for (auto& p : st.named("st")) out.push_back(p);
  for (auto& p : da.named("da")) out.push_back(p);
  for (auto& p : head.named("head")) out.push_back(p);
  return out;
}

std::vector<Tensor> Model::backbone_params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : backbone.named("backbone")) out.push_back(t);
  return out;
}

std::vector<Tensor> Model::trainable(bool backbone_frozen) const {
  std::vector<Tensor> out;
  if (!backbone_frozen) out = backbone_params();
  if (cfg.use_st)
    for (auto& [name, t] : st.named("st")) out.push_back(t);
  if (cfg.use_da)
    for (auto& [name, t] : da.named("da")) out.push_back(t);
  for (auto& [name, t] : head.named("head")) out.push_back(t);
  return out;
}

Tensor image_features(const Model& m, const Tensor& crop) {
  return extract_features(to_network_input(crop), m.backbone, m.cfg.backbone);
}

Tensor fuse_template(const Model& m, const TemplateTriple& triple) {
  if (!m.cfg.use_st) {
    triple.validate();
    return triple.f_i;
  }
  return st_fuse(triple, m.st);
}

Tensor augment_search(const Model& m, const Tensor& f_star_z, const Tensor& f_s) {
  if (!m.cfg.use_da) return f_s;
  return da_augment(f_star_z, f_s, m.da);
}

HeadOutput predict(const Model& m, const Tensor& f_star_z, const Tensor& f_s) {
  Tensor f_star_s = augment_search(m, f_star_z, f_s);
  const double area = static_cast<double>(f_star_z.dim(1) * f_star_z.dim(2));
  // a zero-mean kernel keeps the response from tracking feature energy
  Tensor response = scale(cross_correlate(center_channels(f_star_z), f_star_s), 1.0 / area);
  return head_forward(response, m.head);
}

void save_checkpoint(const std::filesystem::path& path, const Model& m, const CheckpointExtras& extras) {
  nlohmann::json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["model"] = to_json(m.cfg);
  doc["params"] = params_to_json(m.named());
  doc["epoch"] = extras.epoch;
  doc["velocities"] = extras.velocities;
  write_json_file(path, doc);
}

Model load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras) {
  const nlohmann::json doc = read_json_file(path);
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat) {
    throw DataError(path.string() + ": not a checkpoint file");
  }
  if (doc.value("version", -1) != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version");
  }
  if (!doc.contains("model") || !doc.contains("params")) {
    throw DataError(path.string() + ": checkpoint lacks model or params");
  }
  Model m = Model::init(model_config_from_json(doc["model"]), 0);
  std::vector<NamedTensor> target = m.named();
  assign_params(params_from_json(doc["params"]), target);
  if (extras) {
    extras->epoch = doc.value("epoch", -1);
    extras->velocities.clear();
    if (doc.contains("velocities")) {
      try {
        extras->velocities = doc["velocities"].get<std::vector<std::vector<double>>>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed optimizer state");
      }
    }
  }
  return m;
}

}  // namespace dast
