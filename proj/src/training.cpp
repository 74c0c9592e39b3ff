// SPDX-License-Identifier: Apache-2.0

#include "dast/training.hpp"

#include <cmath>
#include <fstream>

namespace dast {

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("train: epochs must be positive");
  if (freeze_backbone_epochs < 0 || freeze_backbone_epochs > epochs) {
    throw ContractError("train: freeze_backbone_epochs must lie in [0, epochs]");
  }
  if (steps_per_epoch < 1 || batch_size < 1) throw ContractError("train: steps and batch size must be positive");
  if (!(grad_clip >= 0.0)) throw ContractError("train: grad_clip must be >= 0");
  if (max_nonfinite < 1) throw ContractError("train: max_nonfinite must be positive");
  sgd().validate();
  weights.validate();
  labels.validate();
  triplets.validate();
}

SgdConfig TrainConfig::sgd() const {
  SgdConfig s;
  s.lr_start = lr_start;
  s.lr_end = lr_end;
  s.momentum = momentum;
  s.total_epochs = epochs;
  s.weight_decay = weight_decay;
  return s;
}

TrainConfig TrainConfig::paper_schedule() {
  TrainConfig c;
  c.epochs = 50;
  c.freeze_backbone_epochs = 10;
  c.batch_size = 12;
  return c;
}

Losses sample_losses(const Model& m, const TrainingSample& s, const TrainConfig& cfg) {
  Tensor f_i = image_features(m, s.t_i);
  Tensor f_a = image_features(m, s.t_a);
  Tensor f_c = image_features(m, s.t_c);
  Tensor f_s = image_features(m, s.search);
  Tensor f_star_z = fuse_template(m, {f_i, f_a, f_c});
  HeadOutput out = predict(m, f_star_z, f_s);
  const LabelTargets targets =
      s.negative ? negative_targets(m.grid.size()) : build_targets(m.grid, s.search_gt, cfg.labels);
  return compute_losses(out, targets, cfg.weights);
}

namespace {

Rng step_rng(std::uint64_t seed, long step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(0x5eed)};
  return Rng(seq);
}

}  // namespace

Trainer::Trainer(Model& model, TrainConfig cfg, const std::vector<Sequence>& data)
    : model_(model), cfg_(cfg), data_(data), sgd_((cfg.validate(), cfg.sgd())) {
  if (data_.empty()) throw DataError("train: no training sequences");
  for (const auto& s : data_) {
    if (static_cast<int>(s.size()) < cfg_.triplets.window) {
      throw DataError("train: sequence '" + s.name + "' has " + std::to_string(s.size()) +
                      " frames, fewer than the " + std::to_string(cfg_.triplets.window) + "-frame window");
    }
  }
  params_ = model_.trainable(false);
  for (auto& [name, t] : model_.named()) t.set_requires_grad(false);
}

void Trainer::resume(const CheckpointExtras& extras) {
  next_epoch_ = extras.epoch + 1;
  if (!extras.velocities.empty()) {
    if (extras.velocities.size() != params_.size()) {
      throw DataError("resume: optimizer state has " + std::to_string(extras.velocities.size()) +
                      " slots, model has " + std::to_string(params_.size()));
    }
    sgd_.velocities() = extras.velocities;
  }
}

CheckpointExtras Trainer::extras() const { return {next_epoch_ - 1, sgd_.velocities()}; }

void Trainer::set_frozen(bool frozen) {
  for (Tensor& t : params_) t.set_requires_grad(true);
  if (frozen)
    for (Tensor t : model_.backbone_params()) t.set_requires_grad(false);
}

std::vector<TrainingSample> Trainer::batch_samples(long step) const {
  Rng rng = step_rng(cfg_.seed, step);
  std::vector<TrainingSample> out;
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const std::size_t k = pick(rng);
    const Sequence& seq = data_[k];
    TripletIndices idx = sample_triplet_indices(static_cast<int>(seq.size()), cfg_.triplets, rng);
    TrainingSample s = make_training_sample(seq, idx, model_.cfg, cfg_.triplets, rng);
    if (data_.size() > 1 && u(rng) < cfg_.triplets.negative_prob) {
      std::size_t j = pick(rng);
      while (j == k) j = pick(rng);
      std::uniform_int_distribution<int> frame(0, static_cast<int>(data_[j].size()) - 1);
      make_negative(s, data_[j], frame(rng), model_.cfg, cfg_.triplets, rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

bool Trainer::step(int epoch, long global_step, LossRecord& rec) {
  set_frozen(epoch < cfg_.freeze_backbone_epochs);
  for (Tensor& t : params_) t.zero_grad();
  rec = LossRecord{};
  rec.step = global_step;
  rec.epoch = epoch;
  rec.lr = cfg_.sgd().learning_rate(epoch);

  bool finite = true;
  const double inv = 1.0 / cfg_.batch_size;
  for (const TrainingSample& s : batch_samples(global_step)) {
    Graph graph;
    GraphScope scope(graph);
    try {
      Losses l = sample_losses(model_, s, cfg_);
      rec.cls1 += l.cls1.item() * inv;
      rec.cls2 += l.cls2.item() * inv;
      rec.reg += l.reg.item() * inv;
      rec.total += l.total.item() * inv;
      graph.backward(scale(l.total, inv));
    } catch (const NumericError&) {
      finite = false;
      break;
    }
  }
  if (finite) {
    double norm2 = 0.0;
    for (const Tensor& t : params_)
      for (double g : t.grad()) norm2 += g * g;
    finite = std::isfinite(norm2) && std::isfinite(rec.total);
    if (finite && cfg_.grad_clip > 0.0 && std::sqrt(norm2) > cfg_.grad_clip) {
      const double k = cfg_.grad_clip / std::sqrt(norm2);
      for (Tensor& t : params_)
        for (double& g : t.mutable_grad()) g *= k;
    }
  }
  if (!finite) {
    ++skipped_;
    if (++consecutive_bad_ >= cfg_.max_nonfinite) {
      throw NumericError("train: " + std::to_string(consecutive_bad_) +
                         " consecutive non-finite batches at step " + std::to_string(global_step));
    }
    return false;
  }
  consecutive_bad_ = 0;
  sgd_.step(params_, epoch);
  return true;
}

std::vector<LossRecord> Trainer::run_epoch(int epoch) {
  std::vector<LossRecord> out;
  for (int k = 0; k < cfg_.steps_per_epoch; ++k) {
    const long global = static_cast<long>(epoch) * cfg_.steps_per_epoch + k;
    LossRecord rec;
    if (step(epoch, global, rec)) out.push_back(rec);
  }
  next_epoch_ = epoch + 1;
  return out;
}

TrainResult Trainer::run(const std::function<void(int)>& on_epoch_end) {
  TrainResult res;
  for (int e = next_epoch_; e < cfg_.epochs; ++e) {
    for (auto& r : run_epoch(e)) res.history.push_back(r);
    res.last_epoch = e;
    if (on_epoch_end) on_epoch_end(e);
  }
  for (auto& [name, t] : model_.named()) t.set_requires_grad(false);
  res.skipped_batches = skipped_;
  return res;
}

double mean_loss(const Model& m, const std::vector<TrainingSample>& samples, const TrainConfig& cfg) {
  if (samples.empty()) throw ContractError("mean_loss: no samples");
  double s = 0.0;
  for (const auto& x : samples) s += sample_losses(m, x, cfg).total.item();
  return s / static_cast<double>(samples.size());
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "step,epoch,L_cls1,L_cls2,L_reg,L_total,lr\n";
  for (const auto& r : history) {
    out << r.step << ',' << r.epoch << ',' << r.cls1 << ',' << r.cls2 << ',' << r.reg << ',' << r.total << ','
        << r.lr << '\n';
  }
}

}  // namespace dast
