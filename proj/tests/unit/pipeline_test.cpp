// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "engage/data/split.hpp"
#include "engage/data/synthetic.hpp"
#include "engage/error.hpp"
#include "engage/pipeline/pipeline.hpp"
#include "engage/pipeline/report.hpp"

namespace engage::pipeline {
namespace {

namespace fs = std::filesystem;

data::Dataset separable(std::vector<std::size_t> counts, std::uint64_t seed, double noise = 0.05) {
  data::SyntheticSpec spec;
  spec.num_classes = static_cast<int>(counts.size());
  spec.counts = std::move(counts);
  spec.frames = 10;
  spec.channels = 3;
  spec.separability = 3.0;
  spec.noise_std = noise;
  spec.seed = seed;
  return data::generate_synthetic(spec);
}

TrainConfig small(Strategy s, models::EncoderKind kind = models::EncoderKind::tcn) {
  TrainConfig c;
  c.model.layout.set = data::FeatureSet::generic;
  c.model.layout.generic_dims = 3;
  c.model.encoder = kind;
  c.model.lstm = {1, 6};
  c.model.tcn = {2, 6, 3, 0.1, false};
  c.model.projection_dim = 6;
  c.model.classifier_hidden = 8;
  c.strategy = s;
  c.tau = 0.5;
  c.epochs_phase1 = 15;
  c.epochs_phase2 = 30;
  c.batch_size = 16;
  c.optimizer.learning_rate = 1e-2;
  c.seed = 3;
  if (traits(s).augmented) {
    augment::AugmentPolicy p;
    p.factors = {2, 2, 1.5, 1.5};
    p.shift_units = 2;
    p.seed = 4;
    c.augment = p;
  }
  return c;
}

struct Split {
  data::Dataset train, test;
};

Split split(const data::Dataset& d, std::uint64_t seed) {
  auto parts = data::split_dataset(d, {0.6, 0.2, 0.2}, seed);
  const data::Dataset* tv[] = {&parts.train, &parts.validation};
  return {data::merge({tv[0], tv[1]}), parts.test};
}

TEST(Strategy, NamesAndTraits) {
  EXPECT_EQ(parse_strategy("f"), Strategy::f);
  EXPECT_EQ(parse_strategy("contrastive_ce_augmented_ordinal"), Strategy::f);
  EXPECT_EQ(parse_strategy("a_prime"), Strategy::a_prime);
  EXPECT_EQ(parse_strategy("weighted_ce"), Strategy::b);
  EXPECT_THROW(parse_strategy("g"), ConfigError);
  EXPECT_TRUE(traits(Strategy::f).ordinal && traits(Strategy::f).contrastive && traits(Strategy::f).augmented);
  EXPECT_TRUE(traits(Strategy::a_prime).ordinal && !traits(Strategy::a_prime).contrastive);
  EXPECT_TRUE(traits(Strategy::d).weighted && traits(Strategy::d).contrastive && !traits(Strategy::d).augmented);
}

TEST(TrainConfig, AugmentMustMatchStrategy) {
  TrainConfig f = small(Strategy::f);
  f.augment.reset();
  try {
    f.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("requires an augment policy"), std::string::npos);
  }
  TrainConfig a = small(Strategy::a);
  a.augment = augment::AugmentPolicy{};
  EXPECT_THROW(a.validate(), ConfigError);
  TrainConfig bad = small(Strategy::c);
  bad.tau = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = small(Strategy::c);
  bad.shared_encoder = true;
  EXPECT_THROW(bad.validate(), ConfigError);
  // The mismatch surfaces before any training.
  EXPECT_THROW(train_pipeline(f, data::Dataset{}), ConfigError);
}

TEST(Report, PerfectPredictor) {
  const std::vector<int> y{0, 1, 2, 3, 3, 2};
  const RunReport r = make_report(y, y, 4);
  EXPECT_EQ(r.accuracy, 1.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      if (i != j) EXPECT_EQ(r.confusion[i][j], 0U);
  for (double p : r.precision) EXPECT_EQ(p, 1.0);
}

TEST(Report, MajorityPredictorOnTableTestCounts) {
  const std::vector<std::size_t> counts{4, 84, 882, 814};
  std::vector<int> truth;
  for (int c = 0; c < 4; ++c) truth.insert(truth.end(), counts[static_cast<std::size_t>(c)], c);
  const std::vector<int> majority(truth.size(), 2);
  const RunReport r = make_report(truth, majority, 4);
  EXPECT_NEAR(r.accuracy, 882.0 / 1784.0, 1e-12);
  EXPECT_NEAR(r.accuracy, 0.4944, 1e-4);
  EXPECT_TRUE(r.precision_undefined[0]);
  EXPECT_EQ(r.precision[0], 0.0);
  EXPECT_FALSE(r.precision_undefined[2]);
  EXPECT_EQ(r.recall[2], 1.0);
  for (std::size_t c = 0; c < 4; ++c) {
    std::size_t row = 0;
    for (std::size_t n : r.confusion[c]) row += n;
    EXPECT_EQ(row, counts[c]);
  }
}

TEST(Report, IdentitiesOnRandomPredictions) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> truth(100), pred(100);
    for (int& v : truth) v = static_cast<int>(rng() % 4);
    for (int& v : pred) v = static_cast<int>(rng() % 4);
    const RunReport r = make_report(truth, pred, 4);
    double weighted = 0.0;
    std::size_t trace = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      std::size_t row = 0;
      for (std::size_t n : r.confusion[c]) row += n;
      weighted += r.recall[c] * static_cast<double>(row) / 100.0;
      trace += r.confusion[c][c];
    }
    EXPECT_NEAR(weighted, r.accuracy, 1e-12);
    EXPECT_NEAR(r.accuracy, trace / 100.0, 1e-12);
  }
  EXPECT_THROW(make_report(std::vector<int>{}, std::vector<int>{}, 4), ContractError);
}

double mean_cosine(const Tensor& z, const std::vector<int>& y, bool same) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (i == j || (y[i] == y[j]) != same) continue;
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t k = 0; k < z.dim(1); ++k) {
        dot += z.at(i, k) * z.at(j, k);
        ni += z.at(i, k) * z.at(i, k);
        nj += z.at(j, k) * z.at(j, k);
      }
      total += dot / std::sqrt(ni * nj);
      ++n;
    }
  return total / static_cast<double>(n);
}

Tensor projections(const models::Network& net, const data::Dataset& d) {
  std::vector<const data::FeatureSequence*> all;
  for (const auto& s : d.sequences()) all.push_back(&s);
  Tape tape;
  return net.project(tape, tape.constant(net.embed_all(all))).value();
}

TEST(Phase1, SeparatesTwoClasses) {
  const auto d = separable({20, 20}, 6, 0.5);
  TrainConfig c = small(Strategy::c);
  c.model.num_outputs = 2;
  models::Network net(c.model, 7);
  const auto y = d.labels();
  TrainingTrace trace;
  train_phase1(net, d, y, 2, c, 0, trace);
  const Tensor after = projections(net, d);
  EXPECT_GT(mean_cosine(after, y, true), mean_cosine(after, y, false) + 0.5);
  EXPECT_EQ(trace.phase1_loss.size(), c.epochs_phase1);
  EXPECT_LT(trace.phase1_loss.back(), trace.phase1_loss.front());
  EXPECT_EQ(trace.trained_ids.size(), d.size());
}

TEST(Phase1, ZeroEpochsIsANoOp) {
  const auto d = separable({5, 5}, 8);
  TrainConfig c = small(Strategy::c);
  c.epochs_phase1 = 0;
  c.model.num_outputs = 2;
  models::Network net(c.model, 9);
  const std::string before = models::save_checkpoint(net);
  TrainingTrace trace;
  train_phase1(net, d, d.labels(), 2, c, 0, trace);
  EXPECT_EQ(models::save_checkpoint(net), before);
}

TEST(Phase1, DeterministicTrajectory) {
  const auto d = separable({6, 6, 6}, 10, 0.5);
  TrainConfig c = small(Strategy::c);
  c.epochs_phase1 = 4;
  c.model.num_outputs = 3;
  TrainingTrace t1, t2;
  models::Network a(c.model, 11), b(c.model, 11);
  train_phase1(a, d, d.labels(), 3, c, 0, t1);
  train_phase1(b, d, d.labels(), 3, c, 0, t2);
  EXPECT_EQ(t1.phase1_loss, t2.phase1_loss);
  EXPECT_EQ(models::save_checkpoint(a), models::save_checkpoint(b));
}

TEST(Phase2, EncoderUntouched) {
  const auto d = separable({6, 6, 6}, 12);
  TrainConfig c = small(Strategy::c);
  c.model.num_outputs = 3;
  models::Network net(c.model, 13);
  const auto encoder = net.encoder_checksum();
  const auto head_before = models::save_checkpoint(net);
  TrainingTrace trace;
  train_phase2(net, d, d.labels(), false, {}, c, 0, trace);
  EXPECT_EQ(net.encoder_checksum(), encoder);
  EXPECT_NE(models::save_checkpoint(net), head_before);
  for (Parameter* p : net.encoder_parameters()) EXPECT_FALSE(p->frozen);
}

TEST(Phase2, SeparableEmbeddingsReachPerfectTrainingAccuracy) {
  TrainConfig c = small(Strategy::c);
  c.model.lstm = {1, 2};
  c.model.encoder = models::EncoderKind::lstm;
  c.model.layout.generic_dims = 2;
  c.model.num_outputs = 3;
  c.epochs_phase2 = 200;
  models::Network net(c.model, 14);
  // Three clusters on a line in embedding space.
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 0.1);
  Tensor emb({60, 2});
  std::vector<int> y(60);
  for (std::size_t i = 0; i < 60; ++i) {
    y[i] = static_cast<int>(i % 3);
    emb.at(i, 0) = 2.0 * y[i] - 2.0 + n(rng);
    emb.at(i, 1) = n(rng);
  }
  TrainingTrace trace;
  train_classifier_head(net, emb, y, false, {}, c, 0, trace);
  Tape tape;
  const Tensor logits = net.classify(tape, tape.constant(emb)).value();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    std::vector<double> row(logits.raw() + i * 3, logits.raw() + i * 3 + 3);
    correct += ordinal::argmax_lower(row) == y[i];
  }
  EXPECT_EQ(correct, 60U);
}

TEST(Phase2, UnitWeightsEqualUnweighted) {
  const auto d = separable({6, 6, 6}, 15);
  TrainConfig c = small(Strategy::c);
  c.model.num_outputs = 3;
  c.epochs_phase2 = 5;
  models::Network a(c.model, 16), b(c.model, 16);
  TrainingTrace ta, tb;
  const std::vector<double> ones{1, 1, 1};
  train_phase2(a, d, d.labels(), false, {}, c, 0, ta);
  train_phase2(b, d, d.labels(), false, ones, c, 0, tb);
  EXPECT_EQ(ta.phase2_loss, tb.phase2_loss);
}

TEST(Pipeline, OrdinalStrategyBuildsOneMemberPerThreshold) {
  const auto parts = split(separable({8, 10, 12, 10}, 17), 17);
  TrainConfig c = small(Strategy::f);
  c.epochs_phase1 = 2;
  c.epochs_phase2 = 2;
  const TrainedModel m = train_pipeline(c, parts.train);
  ASSERT_TRUE(m.ensemble.has_value());
  EXPECT_EQ(m.ensemble->size(), 3U);
  EXPECT_FALSE(m.network.has_value());
  const RunReport r = evaluate(m, parts.test);
  EXPECT_EQ(r.strategy, "f");
  EXPECT_EQ(r.model, "tcn");
}

TEST(Pipeline, SharedEncoderMembersAgreeOnEncoder) {
  const auto parts = split(separable({8, 10, 12, 10}, 18), 18);
  TrainConfig c = small(Strategy::f);
  c.shared_encoder = true;
  c.epochs_phase1 = 2;
  c.epochs_phase2 = 2;
  const TrainedModel m = train_pipeline(c, parts.train);
  ASSERT_EQ(m.ensemble->size(), 3U);
  auto checksum = [&](std::size_t k) {
    return dynamic_cast<const ordinal::NetworkScorer&>(m.ensemble->member(k)).network().encoder_checksum();
  };
  EXPECT_EQ(checksum(0), checksum(1));
  EXPECT_EQ(checksum(1), checksum(2));
}

TEST(Pipeline, AugmentedStrategyDiffersOnlyByData) {
  const auto parts = split(separable({8, 10, 12, 10}, 19), 19);
  TrainConfig c = small(Strategy::c), e = small(Strategy::e);
  c.epochs_phase1 = e.epochs_phase1 = 1;
  c.epochs_phase2 = e.epochs_phase2 = 1;
  const TrainedModel mc = train_pipeline(c, parts.train), me = train_pipeline(e, parts.train);
  // Phase 2 sees every training sample: originals for c, originals + copies for e.
  for (const auto& id : mc.trace.trained_ids) EXPECT_TRUE(me.trace.trained_ids.count(id)) << id;
  std::size_t extra = 0;
  for (const auto& id : me.trace.trained_ids) {
    if (mc.trace.trained_ids.count(id)) continue;
    EXPECT_NE(id.find("#aug"), std::string::npos) << id;
    ++extra;
  }
  const auto augmented = augment::apply_policy(parts.train, *e.augment);
  EXPECT_EQ(extra, augmented.size() - parts.train.size());
  EXPECT_EQ(c.fingerprint(), std::string(c.fingerprint()));
}

TEST(Pipeline, DegenerateThresholdIsRefused) {
  // No class-3 samples: threshold y > 2 has an empty positive side.
  const auto d = separable({6, 6, 6, 1}, 20);
  std::vector<data::FeatureSequence> seqs;
  for (const auto& s : d.sequences())
    if (s.label != 3) seqs.push_back(s);
  TrainConfig c = small(Strategy::a_prime);
  c.augment->factors = {1, 1, 1, 1};
  c.epochs_phase1 = 1;
  try {
    train_pipeline(c, data::Dataset(seqs, 4));
    FAIL();
  } catch (const ContractError& err) {
    EXPECT_NE(std::string(err.what()).find("y > 2"), std::string::npos);
    EXPECT_NE(std::string(err.what()).find("oversample"), std::string::npos);
  }
}

TEST(Leakage, TestSamplesNeverTrain) {
  const auto parts = split(separable({6, 8, 8, 8}, 21), 21);
  TrainConfig c = small(Strategy::a);
  c.epochs_phase1 = 1;
  const TrainedModel m = train_pipeline(c, parts.train);
  for (const auto& s : parts.test.sequences()) EXPECT_EQ(m.trace.trained_ids.count(s.sample_id), 0U);
  EXPECT_NO_THROW(evaluate(m, parts.test));

  // A training sample reappearing in the test set is caught.
  std::vector<data::FeatureSequence> leaked = parts.test.sequences();
  leaked.push_back(parts.train[0]);
  EXPECT_THROW(evaluate(m, data::Dataset(leaked, 4)), ContractError);
  // Augmented samples may not be evaluated on.
  std::vector<data::FeatureSequence> fake = parts.test.sequences();
  fake[0].origin = data::Origin::augmented;
  EXPECT_THROW(evaluate(m, data::Dataset(fake, 4)), ContractError);
  // Test data may not be trained on.
  EXPECT_THROW(train_pipeline(c, parts.test), ContractError);
  EXPECT_THROW(evaluate(m, data::Dataset({}, 4)), ContractError);
}

TEST(Pipeline, EveryStrategyLearnsSeparableData) {
  const auto parts = split(separable({15, 15, 15, 15}, 22, 0.0), 22);
  for (Strategy s : {Strategy::a, Strategy::b, Strategy::c, Strategy::d, Strategy::e, Strategy::f, Strategy::a_prime}) {
    TrainConfig c = small(s);
    c.epochs_phase1 = TrainConfig{}.epochs_phase1;
    c.epochs_phase2 = TrainConfig{}.epochs_phase2;
    const TrainedModel m = train_pipeline(c, parts.train);
    const RunReport r = evaluate(m, parts.test);
    EXPECT_GE(r.accuracy, 0.95) << "strategy " << to_string(s);
  }
}

TEST(Ablation, GridShapeDeterminismAndFailures) {
  const auto parts = split(separable({8, 10, 12, 10}, 23), 23);
  TrainConfig base = small(Strategy::a);
  base.epochs_phase1 = 1;
  base.epochs_phase2 = 1;
  augment::AugmentPolicy policy;
  policy.shift_units = 2;
  const data::FeatureSet features[] = {data::FeatureSet::generic};
  const models::EncoderKind encoders[] = {models::EncoderKind::lstm, models::EncoderKind::tcn};
  const Strategy strategies[] = {Strategy::a, Strategy::c, Strategy::e, Strategy::f};
  auto grid = make_grid(base, features, encoders, strategies, policy);
  ASSERT_EQ(grid.size(), 8U);
  EXPECT_FALSE(grid[0].augment.has_value());
  EXPECT_TRUE(grid[2].augment.has_value());

  const auto first = run_ablation(grid, parts.train, parts.test);
  const auto second = run_ablation(grid, parts.train, parts.test);
  ASSERT_EQ(first.size(), 8U);
  for (std::size_t i = 0; i < 8; ++i) {
    ASSERT_TRUE(first[i].report.has_value()) << first[i].error;
    EXPECT_EQ(grid_row(*first[i].report), grid_row(*second[i].report));
  }

  grid[1].batch_size = 1;  // invalid; must not abort the other cells
  const auto mixed = run_ablation(grid, parts.train, parts.test);
  EXPECT_FALSE(mixed[1].report.has_value());
  EXPECT_NE(mixed[1].error.find("batch_size"), std::string::npos);
  EXPECT_TRUE(mixed[2].report.has_value());

  const fs::path dir = fs::temp_directory_path() / "engage_ablation_grid";
  fs::create_directories(dir);
  write_grid(mixed, 4, dir / "grid.csv");
  std::ifstream in(dir / "grid.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "features,model,strategy,total_acc,prec_0,prec_1,prec_2,prec_3,rec_0,rec_1,rec_2,rec_3,error");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(line.find('"') == std::string::npos ? line.size() : line.find('"')), ','), 12)
        << line;
  }
  EXPECT_EQ(rows, 8U);
  fs::remove_all(dir);
}

TEST(ReportFiles, ConsistentNumbers) {
  const std::vector<int> truth{0, 1, 2, 3, 2, 2, 1}, pred{0, 2, 2, 3, 1, 2, 1};
  RunReport r = make_report(truth, pred, 4);
  r.features = "generic";
  r.model = "tcn";
  r.strategy = "f";
  r.seed = 9;
  const fs::path dir = fs::temp_directory_path() / "engage_report_files";
  fs::create_directories(dir);
  write_run_report(r, dir);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "grid.csv"));
  // Recompute accuracy from the emitted confusion matrix.
  std::ifstream conf(dir / "confusion.csv");
  std::string line;
  std::getline(conf, line);
  std::size_t diag = 0, total = 0;
  for (int row = 0; std::getline(conf, line); ++row) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    for (int col = 0; std::getline(ss, cell, ','); ++col) {
      total += std::stoul(cell);
      if (col == row) diag += std::stoul(cell);
    }
  }
  EXPECT_NEAR(static_cast<double>(diag) / total, r.accuracy, 1e-12);
  std::ifstream js(dir / "report.json");
  const RunReport back = report_from_json(nlohmann::json::parse(js));
  EXPECT_EQ(grid_row(back), grid_row(r));
  EXPECT_EQ(back.confusion, r.confusion);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace engage::pipeline
