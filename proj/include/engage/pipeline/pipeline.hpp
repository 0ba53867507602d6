// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "engage/augment/augment.hpp"
#include "engage/data/dataset.hpp"
#include "engage/diffcore/optimizer.hpp"
#include "engage/models/models.hpp"
#include "engage/ordinal/ordinal.hpp"

namespace engage::pipeline {

using data::Dataset;

// Loss/training method of an ablation row.
//   a  ce                              b  weighted_ce
//   c  contrastive_ce                  d  contrastive_weighted_ce
//   e  contrastive_ce_augmented        f  contrastive_ce_augmented_ordinal
//   a_prime  ce_augmented_ordinal
enum class Strategy { a, b, c, d, e, f, a_prime };

Strategy parse_strategy(std::string_view text);
std::string_view to_string(Strategy s);
std::string_view long_name(Strategy s);

struct StrategyTraits {
  bool contrastive;
  bool weighted;
  bool augmented;
  bool ordinal;
};
StrategyTraits traits(Strategy s);

struct TrainConfig {
  // num_outputs is set per task by the pipeline.
  models::ModelConfig model;
  Strategy strategy = Strategy::f;
  double tau = 0.1;
  // Contrastive epochs; also the budget of end-to-end strategies.
  std::size_t epochs_phase1 = 100;
  std::size_t epochs_phase2 = 50;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  std::optional<augment::AugmentPolicy> augment;
  // Ordinal members share one contrastive encoder trained on the full labels.
  bool shared_encoder = false;
  std::uint64_t seed = 0;

  // Throws ConfigError on a strategy/augment mismatch or bad values.
  void validate() const;
  std::string fingerprint() const;
};

struct TrainingTrace {
  // Mean batch loss per epoch.
  std::vector<double> phase1_loss;
  std::vector<double> phase2_loss;
  std::size_t batches_without_positives = 0;
  std::size_t anchors_without_positives = 0;
  // Every sample id that entered a training batch or embedding cache.
  std::set<std::string> trained_ids;
  std::vector<std::string> warnings;
  double seconds = 0.0;
};

struct Predictions {
  std::vector<int> labels;
  // Class distributions; ordinal runs report the clamped version.
  std::vector<std::vector<double>> probabilities;
  // Ordinal rows whose raw distribution needed clamping.
  std::size_t clamped = 0;
};

struct TrainedModel {
  TrainConfig config;
  int num_classes = 0;
  std::optional<models::Network> network;
  std::optional<ordinal::OrdinalEnsemble> ensemble;
  TrainingTrace trace;

  Predictions predict(const Dataset& d) const;
};

// Adapts data to the configured feature set: drops the latent block when
// only affect + behavioral channels are wanted and fills in a generic width.
Dataset prepare_features(const Dataset& d, data::FeatureLayout& layout);

// Contrastive pre-training of fusion + encoder + projection on class-balanced
// batches; ceil(n / batch) batches per epoch.
void train_phase1(models::Network& net, const Dataset& d, std::span<const int> labels, int num_classes,
                  const TrainConfig& config, std::uint64_t stream_tag, TrainingTrace& trace);

// Trains the classifier head on frozen, cached eval-mode embeddings.
// binary selects BCE on a single logit. Throws ContractError if the encoder
// stack changed.
void train_phase2(models::Network& net, const Dataset& d, std::span<const int> labels, bool binary,
                  std::span<const double> class_weights, const TrainConfig& config, std::uint64_t stream_tag,
                  TrainingTrace& trace);

// Trains only the classifier head on fixed [N x H] embeddings.
void train_classifier_head(models::Network& net, const Tensor& embeddings, std::span<const int> labels, bool binary,
                           std::span<const double> class_weights, const TrainConfig& config, std::uint64_t stream_tag,
                           TrainingTrace& trace);

// Joint training of encoder and classifier with (weighted) CE or BCE.
void train_end_to_end(models::Network& net, const Dataset& d, std::span<const int> labels, bool binary,
                      std::span<const double> class_weights, const TrainConfig& config, std::uint64_t stream_tag,
                      TrainingTrace& trace);

// Dispatches on the strategy. train must hold training and validation data
// only; test-tagged sequences are refused.
TrainedModel train_pipeline(const TrainConfig& config, const Dataset& train);

struct RunReport {
  int num_classes = 0;
  // rows = true class, columns = predicted class
  std::vector<std::vector<std::size_t>> confusion;
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  // Precision of a never-predicted class is reported as 0 and flagged.
  std::vector<bool> precision_undefined;
  std::vector<bool> recall_undefined;
  std::size_t clamped_predictions = 0;
  std::string features;
  std::string model;
  std::string strategy;
  std::string fingerprint;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;
};

RunReport make_report(std::span<const int> truth, std::span<const int> predicted, int num_classes);

// Refuses augmented test samples and any test id seen during training.
void check_no_leakage(const TrainedModel& model, const Dataset& test);

RunReport evaluate(const TrainedModel& model, const Dataset& test);

struct AblationCell {
  TrainConfig config;
  std::optional<RunReport> report;
  std::string error;
};

// Base config crossed with feature sets, encoders and strategies, in that
// nesting order. Augmented strategies get base_policy; others get none.
std::vector<TrainConfig> make_grid(const TrainConfig& base, std::span<const data::FeatureSet> features,
                                   std::span<const models::EncoderKind> encoders, std::span<const Strategy> strategies,
                                   const augment::AugmentPolicy& base_policy);

// Trains and evaluates every cell; a failing cell records its error.
std::vector<AblationCell> run_ablation(std::span<const TrainConfig> grid, const Dataset& train, const Dataset& test);

}  // namespace engage::pipeline
