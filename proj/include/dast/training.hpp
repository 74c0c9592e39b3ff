// SPDX-License-Identifier: Apache-2.0
//
// Offline training: triplet batches, forward through the full network,
// composite loss, backward and SGD with a log-space learning-rate schedule.
// The backbone is frozen (requires_grad off) for the first
// `freeze_backbone_epochs` epochs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "dast/data_synth.hpp"
#include "dast/model.hpp"

namespace dast {

struct TrainConfig {
  int epochs = 5;
  int freeze_backbone_epochs = 1;
  int steps_per_epoch = 600;
  int batch_size = 4;
  double lr_start = 0.005;
  double lr_end = 0.0005;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global norm, 0 disables
  int max_nonfinite = 3;   // consecutive skipped batches before aborting
  LossWeights weights;
  LabelConfig labels;
  TripletConfig triplets;
  std::uint64_t seed = 1;

  void validate() const;
  SgdConfig sgd() const;
  /// 50 epochs, backbone fixed for 10, batch 12.
  static TrainConfig paper_schedule();
};

struct LossRecord {
  long step = 0;
  int epoch = 0;
  double cls1 = 0, cls2 = 0, reg = 0, total = 0, lr = 0;
};

struct TrainResult {
  std::vector<LossRecord> history;
  int skipped_batches = 0;
  int last_epoch = -1;
};

/// Forward pass and losses for one sample. Records on the active graph, if
/// any.
Losses sample_losses(const Model& m, const TrainingSample& s, const TrainConfig& cfg);

class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg, const std::vector<Sequence>& data);

  /// Continue after `extras.epoch` with the stored optimizer state.
  void resume(const CheckpointExtras& extras);
  int next_epoch() const { return next_epoch_; }

  /// One batch. Returns false when the batch was skipped as non-finite.
  bool step(int epoch, long global_step, LossRecord& out);
  std::vector<LossRecord> run_epoch(int epoch);
  /// Runs the remaining epochs; `on_epoch_end(epoch)` fires after each.
  TrainResult run(const std::function<void(int)>& on_epoch_end = {});

  CheckpointExtras extras() const;
  int skipped_batches() const { return skipped_; }
  const TrainConfig& config() const { return cfg_; }

  /// Samples drawn from the step-`step` stream; the same stream the trainer
  /// uses, so it is deterministic given (seed, step).
  std::vector<TrainingSample> batch_samples(long step) const;

 private:
  void set_frozen(bool frozen);

  Model& model_;
  TrainConfig cfg_;
  const std::vector<Sequence>& data_;
  Sgd sgd_;
  std::vector<Tensor> params_;  // fixed order; frozen ones are skipped by the optimizer
  int next_epoch_ = 0;
  int skipped_ = 0;
  int consecutive_bad_ = 0;
};

/// Mean total loss over the given samples, no gradient recording.
double mean_loss(const Model& m, const std::vector<TrainingSample>& samples, const TrainConfig& cfg);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace dast
