// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "engage/data/synthetic.hpp"
#include "engage/error.hpp"
#include "engage/ordinal/ordinal.hpp"

namespace engage::ordinal {
namespace {

// Scores "y > threshold" from the sample's true label.
class LabelOracle : public BinaryScorer {
 public:
  LabelOracle(int threshold, std::size_t width) : threshold_(threshold), width_(width) {}
  std::size_t input_width() const override { return width_; }
  std::vector<double> score(std::span<const data::FeatureSequence* const> batch) const override {
    std::vector<double> out;
    for (const auto* s : batch) out.push_back(s->label > threshold_ ? 1.0 : 0.0);
    return out;
  }

 private:
  int threshold_;
  std::size_t width_;
};

// Returns fixed probabilities regardless of input.
class Constant : public BinaryScorer {
 public:
  Constant(double g, std::size_t width = 2) : g_(g), width_(width) {}
  std::size_t input_width() const override { return width_; }
  std::vector<double> score(std::span<const data::FeatureSequence* const> batch) const override {
    return std::vector<double>(batch.size(), g_);
  }

 private:
  double g_;
  std::size_t width_;
};

std::vector<std::unique_ptr<BinaryScorer>> constants(std::vector<double> g) {
  std::vector<std::unique_ptr<BinaryScorer>> out;
  for (double v : g) out.push_back(std::make_unique<Constant>(v));
  return out;
}

data::FeatureSequence sample(int label, std::size_t width = 2) { return {"s", Tensor({3, width}), label}; }

TEST(Relabel, Definition) {
  const std::vector<int> labels{0, 1, 2, 3};
  EXPECT_EQ(relabel_binary(labels, 0, 4).targets, (std::vector<int>{0, 1, 1, 1}));
  EXPECT_EQ(relabel_binary(labels, 2, 4).targets, (std::vector<int>{0, 0, 0, 1}));
  EXPECT_EQ(relabel_binary(labels, 1, 4).positives, 2U);
  EXPECT_FALSE(relabel_binary(labels, 1, 4).degenerate);
}

TEST(Relabel, DegenerateThresholds) {
  const std::vector<int> low{0, 1, 1, 0};
  const auto task = relabel_binary(low, 2, 4);
  EXPECT_EQ(task.targets, (std::vector<int>{0, 0, 0, 0}));
  EXPECT_TRUE(task.degenerate);
  const std::vector<int> high{2, 3, 3};
  EXPECT_TRUE(relabel_binary(high, 0, 4).degenerate);
}

TEST(Relabel, ThresholdRange) {
  const std::vector<int> labels{0, 1};
  EXPECT_THROW(relabel_binary(labels, -1, 4), ParameterError);
  EXPECT_THROW(relabel_binary(labels, 3, 4), ParameterError);
  EXPECT_NO_THROW(relabel_binary(labels, 0, 2));
  EXPECT_THROW(relabel_binary(labels, 1, 2), ParameterError);
}

TEST(Relabel, Monotone) {
  std::mt19937_64 rng(1);
  std::vector<int> labels(200);
  for (int& y : labels) y = static_cast<int>(rng() % 5);
  for (int c = 0; c <= 3; ++c) {
    const auto t = relabel_binary(labels, c, 5).targets;
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t j = 0; j < labels.size(); ++j)
        if (labels[i] <= labels[j]) ASSERT_LE(t[i], t[j]);
  }
}

TEST(Combine, WorkedExample) {
  const std::vector<double> g{0.9, 0.6, 0.2};
  const auto d = combine_probabilities(g);
  const std::vector<double> expected{0.1, 0.3, 0.4, 0.2};
  // Decimal inputs are not representable; agreement is to the last bit of 1.
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(d.raw[c], expected[c], 1e-15);
  EXPECT_FALSE(d.clamped);
  EXPECT_EQ(d.adjusted, d.raw);
  EXPECT_NEAR(std::accumulate(d.raw.begin(), d.raw.end(), 0.0), 1.0, 1e-15);
}

TEST(Combine, CertainTopClass) {
  const std::vector<double> g{1, 1, 1};
  EXPECT_EQ(combine_probabilities(g).raw, (std::vector<double>{0, 0, 0, 1}));
}

TEST(Combine, NonMonotoneClampsAndRenormalises) {
  const std::vector<double> g{0.2, 0.6, 0.1};
  const auto d = combine_probabilities(g);
  const std::vector<double> raw{0.8, -0.4, 0.5, 0.1};
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(d.raw[c], raw[c], 1e-15);
  EXPECT_TRUE(d.clamped);
  const std::vector<double> adjusted{0.8 / 1.4, 0.0, 0.5 / 1.4, 0.1 / 1.4};
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(d.adjusted[c], adjusted[c], 1e-15);
  EXPECT_NEAR(d.adjusted[0], 0.5714, 1e-4);
  EXPECT_NEAR(d.adjusted[2], 0.3571, 1e-4);
  EXPECT_NEAR(d.adjusted[3], 0.0714, 1e-4);
}

TEST(Combine, RandomVectorsTelescope) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t k = 1 + rng() % 6;
    std::vector<double> g(k);
    for (double& v : g) v = u(rng);
    const bool monotone = trial % 2 == 0;
    if (monotone) std::sort(g.rbegin(), g.rend());
    const auto d = combine_probabilities(g);
    ASSERT_NEAR(std::accumulate(d.raw.begin(), d.raw.end(), 0.0), 1.0, 1e-12);
    ASSERT_NEAR(std::accumulate(d.adjusted.begin(), d.adjusted.end(), 0.0), 1.0, 1e-12);
    for (double p : d.adjusted) ASSERT_GE(p, 0.0);
    if (monotone) {
      for (double p : d.raw) ASSERT_GE(p, 0.0);
    }
  }
}

TEST(Combine, RejectsNonProbabilities) {
  for (double bad : {-0.01, 1.01, std::nan("")}) {
    const std::vector<double> g{0.5, bad};
    EXPECT_THROW(combine_probabilities(g), ContractError);
  }
  EXPECT_THROW(combine_probabilities(std::vector<double>{}), ContractError);
}

TEST(Predict, TieBreaksLow) {
  OrdinalEnsemble e(4, constants({0.5, 0.5, 0.5}));
  const auto p = e.predict(sample(0));
  EXPECT_EQ(p.distribution.raw, (std::vector<double>{0.5, 0, 0, 0.5}));
  EXPECT_EQ(p.label, 0);
  const std::vector<double> flat{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(argmax_lower(flat), 0);
}

TEST(Predict, TwoClassesReduceToOneMember) {
  for (double g : {0.0, 0.2, 0.49, 0.51, 0.9, 1.0}) {
    OrdinalEnsemble e(2, constants({g}));
    const auto p = e.predict(sample(1));
    EXPECT_EQ(p.distribution.raw, (std::vector<double>{1 - g, g}));
    EXPECT_EQ(p.label, g > 0.5 ? 1 : 0);
  }
}

TEST(Predict, OracleMembersAreExact) {
  data::SyntheticSpec spec;
  spec.channels = 3;
  spec.counts = {10, 20, 30, 15};
  const auto d = data::generate_synthetic(spec);
  std::vector<std::unique_ptr<BinaryScorer>> members;
  for (int c = 0; c < 3; ++c) members.push_back(std::make_unique<LabelOracle>(c, 3));
  OrdinalEnsemble e(4, std::move(members));
  std::vector<const data::FeatureSequence*> batch;
  for (const auto& s : d.sequences()) batch.push_back(&s);
  const auto preds = e.predict(batch);
  for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_EQ(preds[i].label, batch[i]->label);
}

TEST(Predict, LayoutMismatch) {
  OrdinalEnsemble e(3, constants({0.7, 0.2}));
  EXPECT_THROW(e.predict(sample(0, 5)), ContractError);
  std::vector<std::unique_ptr<BinaryScorer>> mixed;
  mixed.push_back(std::make_unique<Constant>(0.5, 2));
  mixed.push_back(std::make_unique<Constant>(0.5, 3));
  EXPECT_THROW(OrdinalEnsemble(3, std::move(mixed)), ContractError);
  EXPECT_THROW(OrdinalEnsemble(4, constants({0.5, 0.5})), ContractError);
}

models::ModelConfig binary_config() {
  models::ModelConfig c;
  c.layout.set = data::FeatureSet::generic;
  c.layout.generic_dims = 2;
  c.tcn = {2, 3, 2, 0.0, false};
  c.projection_dim = 2;
  c.classifier_hidden = 3;
  c.num_outputs = 1;
  return c;
}

TEST(Ensemble, NetworkMembersScoreProbabilities) {
  std::vector<std::unique_ptr<BinaryScorer>> members;
  for (int c = 0; c < 3; ++c) members.push_back(std::make_unique<NetworkScorer>(models::Network(binary_config(), c)));
  OrdinalEnsemble e(4, std::move(members));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<data::FeatureSequence> seqs(5);
  for (auto& s : seqs) {
    s.frames = Tensor({4, 2});
    for (double& v : s.frames.data()) v = n(rng);
  }
  std::vector<const data::FeatureSequence*> batch;
  for (const auto& s : seqs) batch.push_back(&s);
  const auto preds = e.predict(batch);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(preds[i].label, e.predict(seqs[i]).label);
    EXPECT_NEAR(std::accumulate(preds[i].distribution.adjusted.begin(), preds[i].distribution.adjusted.end(), 0.0), 1.0, 1e-12);
  }
  const std::string bytes = save_ensemble(e);
  const OrdinalEnsemble loaded = load_ensemble(bytes, binary_config());
  EXPECT_EQ(save_ensemble(loaded), bytes);
  for (std::size_t i = 0; i < preds.size(); ++i) EXPECT_EQ(loaded.predict(seqs[i]).distribution.raw, preds[i].distribution.raw);

  EXPECT_THROW(load_ensemble(bytes.substr(0, bytes.size() - 3), binary_config()), CheckpointError);
  std::string corrupt = bytes;
  corrupt[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(load_ensemble(corrupt, binary_config()), CheckpointError);
  auto other = binary_config();
  other.encoder = models::EncoderKind::lstm;
  EXPECT_THROW(load_ensemble(bytes, other), CheckpointError);
}

TEST(Ensemble, NetworkScorerNeedsBinaryHead) {
  auto c = binary_config();
  c.num_outputs = 4;
  EXPECT_THROW(NetworkScorer(models::Network(c, 0)), ContractError);
}

}  // namespace
}  // namespace engage::ordinal
