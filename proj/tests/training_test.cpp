// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "dast/training.hpp"

using namespace dast;

namespace {

std::vector<Sequence> small_data(int count, int length = 52) {
  SequenceSpec s;
  s.length = length;
  s.seed = 300;
  return generate_corpus(s, count, "tr");
}

TrainConfig quick(int epochs, int steps) {
  TrainConfig c;
  c.epochs = epochs;
  c.freeze_backbone_epochs = std::min(1, epochs);
  c.steps_per_epoch = steps;
  c.batch_size = 2;
  return c;
}

std::vector<Tensor> snapshot(const std::vector<Tensor>& ts) {
  std::vector<Tensor> out;
  for (const Tensor& t : ts) out.push_back(t.clone());
  return out;
}

bool all_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!equal_exact(a[i], b[i])) return false;
  return true;
}

std::vector<Tensor> params_of(const Model& m, const std::string& prefix) {
  std::vector<Tensor> out;
  for (auto& [n, t] : m.named())
    if (n.rfind(prefix, 0) == 0) out.push_back(t);
  return out;
}

}  // namespace

TEST(TrainConfigTest, ValidationAndPaperSchedule) {
  TrainConfig c;
  c.freeze_backbone_epochs = c.epochs + 1;
  EXPECT_THROW(c.validate(), ContractError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ContractError);
  TrainConfig p = TrainConfig::paper_schedule();
  EXPECT_EQ(p.epochs, 50);
  EXPECT_EQ(p.freeze_backbone_epochs, 10);
  EXPECT_EQ(p.batch_size, 12);
  EXPECT_EQ(p.sgd().learning_rate(0), 0.005);
  EXPECT_EQ(p.sgd().learning_rate(49), 0.0005);
}

TEST(Trainer, ShortSequencesAreRejected) {
  Model m = Model::init(ModelConfig{}, 1);
  auto data = small_data(1, 20);
  EXPECT_THROW(Trainer(m, quick(1, 1), data), DataError);
  std::vector<Sequence> none;
  EXPECT_THROW(Trainer(m, quick(1, 1), none), DataError);
}

TEST(Trainer, FreezeWindowKeepsBackboneBitIdentical) {
  Model m = Model::init(ModelConfig{}, 2);
  auto data = small_data(3);
  Trainer tr(m, quick(2, 4), data);
  const auto backbone0 = snapshot(m.backbone_params());
  const auto st0 = snapshot(params_of(m, "st")), da0 = snapshot(params_of(m, "da"));
  const auto head0 = snapshot(params_of(m, "head"));
  ASSERT_FALSE(st0.empty());
  ASSERT_FALSE(da0.empty());

  tr.run_epoch(0);
  EXPECT_TRUE(all_equal(backbone0, m.backbone_params()));
  EXPECT_FALSE(all_equal(st0, params_of(m, "st")));
  EXPECT_FALSE(all_equal(da0, params_of(m, "da")));
  EXPECT_FALSE(all_equal(head0, params_of(m, "head")));

  tr.run_epoch(1);
  EXPECT_FALSE(all_equal(backbone0, m.backbone_params()));
}

TEST(Trainer, SameSeedSameHistory) {
  auto data = small_data(3);
  Model a = Model::init(ModelConfig{}, 3), b = Model::init(ModelConfig{}, 3);
  auto ha = Trainer(a, quick(2, 3), data).run().history;
  auto hb = Trainer(b, quick(2, 3), data).run().history;
  ASSERT_EQ(ha.size(), hb.size());
  for (std::size_t i = 0; i < ha.size(); ++i) {
    EXPECT_EQ(ha[i].total, hb[i].total);
    EXPECT_EQ(ha[i].lr, hb[i].lr);
  }
  auto na = a.named(), nb = b.named();
  for (std::size_t i = 0; i < na.size(); ++i) EXPECT_TRUE(equal_exact(na[i].second, nb[i].second));
}

TEST(Trainer, SingleSequenceOverfitHalvesTheLoss) {
  auto data = small_data(1);
  Model m = Model::init(ModelConfig{}, 4);
  TrainConfig cfg = quick(1, 200);
  cfg.freeze_backbone_epochs = 0;
  cfg.triplets.noise_prob = 0.0;
  Trainer tr(m, cfg, data);
  std::vector<TrainingSample> probe;
  for (long s = 0; s < 4; ++s)
    for (auto& x : tr.batch_samples(s)) probe.push_back(std::move(x));
  const double before = mean_loss(m, probe, cfg);
  tr.run();
  const double after = mean_loss(m, probe, cfg);
  EXPECT_LE(after, 0.5 * before) << before << " -> " << after;
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  auto data = small_data(2);
  const TrainConfig cfg = quick(2, 3);
  Model straight = Model::init(ModelConfig{}, 5);
  Trainer(straight, cfg, data).run();

  Model first = Model::init(ModelConfig{}, 5);
  Trainer t1(first, cfg, data);
  t1.run_epoch(0);
  const auto path = std::filesystem::temp_directory_path() / "dast_resume.json";
  save_checkpoint(path, first, t1.extras());
  CheckpointExtras ex;
  Model second = load_checkpoint(path, &ex);
  EXPECT_EQ(ex.epoch, 0);
  Trainer t2(second, cfg, data);
  t2.resume(ex);
  EXPECT_EQ(t2.next_epoch(), 1);
  t2.run();
  auto a = straight.named(), b = second.named();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(equal_exact(a[i].second, b[i].second)) << a[i].first;
  std::filesystem::remove(path);

  CheckpointExtras bad{0, {{1.0}}};
  Trainer t3(second, cfg, data);
  EXPECT_THROW(t3.resume(bad), DataError);
}

TEST(Trainer, NonFiniteBatchesAreSkippedThenAbort) {
  auto data = small_data(2);
  Model m = Model::init(ModelConfig{}, 6);
  m.head.reg.b2[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = quick(1, 5);
  Trainer tr(m, cfg, data);
  const auto before = snapshot(params_of(m, "head.cls1"));
  LossRecord rec;
  EXPECT_FALSE(tr.step(0, 0, rec));
  EXPECT_FALSE(tr.step(0, 1, rec));
  EXPECT_EQ(tr.skipped_batches(), 2);
  EXPECT_TRUE(all_equal(before, params_of(m, "head.cls1")));
  EXPECT_THROW(tr.step(0, 2, rec), NumericError);
}

TEST(Trainer, LossCsvHasTheDocumentedHeader) {
  const auto path = std::filesystem::temp_directory_path() / "dast_loss.csv";
  write_loss_csv(path, {{0, 0, 0.5, 0.25, 0.125, 0.875, 0.005}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "step,epoch,L_cls1,L_cls2,L_reg,L_total,lr");
  EXPECT_EQ(row, "0,0,0.5,0.25,0.125,0.875,0.0050000000000000001");
  std::filesystem::remove(path);
}
