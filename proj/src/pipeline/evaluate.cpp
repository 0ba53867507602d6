// SPDX-License-Identifier: Apache-2.0
#include <chrono>

#include "engage/error.hpp"
#include "engage/pipeline/pipeline.hpp"

namespace engage::pipeline {

RunReport make_report(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  if (truth.empty()) throw ContractError("cannot report on an empty test set");
  if (truth.size() != predicted.size()) throw ContractError("prediction count does not match the test set");
  const auto c = static_cast<std::size_t>(num_classes);
  RunReport r;
  r.num_classes = num_classes;
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw ContractError("label outside [0, " + std::to_string(num_classes) + ") in report");
    }
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  std::size_t trace = 0;
  for (std::size_t k = 0; k < c; ++k) trace += r.confusion[k][k];
  r.accuracy = static_cast<double>(trace) / static_cast<double>(truth.size());
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t row = 0, column = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += r.confusion[k][j];
      column += r.confusion[j][k];
    }
    const double hit = static_cast<double>(r.confusion[k][k]);
    r.precision.push_back(column == 0 ? 0.0 : hit / static_cast<double>(column));
    r.precision_undefined.push_back(column == 0);
    r.recall.push_back(row == 0 ? 0.0 : hit / static_cast<double>(row));
    r.recall_undefined.push_back(row == 0);
  }
  return r;
}

void check_no_leakage(const TrainedModel& model, const Dataset& test) {
  for (const auto& s : test.sequences()) {
    if (s.origin == data::Origin::augmented) {
      throw ContractError("test sample '" + s.sample_id + "' is augmented; the test split must hold originals only");
    }
    if (model.trace.trained_ids.count(s.sample_id) != 0) {
      throw ContractError("test sample '" + s.sample_id + "' was used in training");
    }
  }
}

RunReport evaluate(const TrainedModel& model, const Dataset& test) {
  const auto start = std::chrono::steady_clock::now();
  if (test.empty()) throw ContractError("evaluation needs a non-empty test split");
  if (test.num_classes() != model.num_classes) {
    throw ContractError("test data has " + std::to_string(test.num_classes()) + " classes, model has " +
                        std::to_string(model.num_classes));
  }
  check_no_leakage(model, test);
  const Predictions p = model.predict(test);
  const std::vector<int> truth = test.labels();
  RunReport r = make_report(truth, p.labels, model.num_classes);
  r.clamped_predictions = p.clamped;
  r.features = std::string(data::to_string(model.config.model.layout.set));
  r.model = std::string(models::to_string(model.config.model.encoder));
  r.strategy = std::string(to_string(model.config.strategy));
  r.fingerprint = model.config.fingerprint();
  r.seed = model.config.seed;
  r.wall_clock_seconds =
      model.trace.seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<TrainConfig> make_grid(const TrainConfig& base, std::span<const data::FeatureSet> features,
                                   std::span<const models::EncoderKind> encoders, std::span<const Strategy> strategies,
                                   const augment::AugmentPolicy& base_policy) {
  std::vector<TrainConfig> grid;
  TrainConfig plain;
  plain.model = base.model;
  plain.tau = base.tau;
  plain.epochs_phase1 = base.epochs_phase1;
  plain.epochs_phase2 = base.epochs_phase2;
  plain.batch_size = base.batch_size;
  plain.optimizer = base.optimizer;
  plain.shared_encoder = base.shared_encoder;
  plain.seed = base.seed;
  for (data::FeatureSet f : features) {
    for (models::EncoderKind e : encoders) {
      for (Strategy s : strategies) {
        TrainConfig c = plain;
        c.model.layout.set = f;
        c.model.encoder = e;
        c.strategy = s;
        c.shared_encoder = plain.shared_encoder && s == Strategy::f;
        if (traits(s).augmented) c.augment = base_policy;
        grid.push_back(std::move(c));
      }
    }
  }
  return grid;
}

std::vector<AblationCell> run_ablation(std::span<const TrainConfig> grid, const Dataset& train, const Dataset& test) {
  std::vector<AblationCell> cells;
  for (const TrainConfig& config : grid) {
    AblationCell cell{config, std::nullopt, {}};
    try {
      const TrainedModel model = train_pipeline(config, train);
      cell.report = evaluate(model, test);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

}  // namespace engage::pipeline
