// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "engage/data/sampler.hpp"
#include "engage/diffcore/ops.hpp"
#include "engage/error.hpp"
#include "engage/losses/losses.hpp"
#include "engage/pipeline/pipeline.hpp"

namespace engage::pipeline {

Strategy parse_strategy(std::string_view text) {
  for (Strategy s : {Strategy::a, Strategy::b, Strategy::c, Strategy::d, Strategy::e, Strategy::f, Strategy::a_prime}) {
    if (text == to_string(s) || text == long_name(s)) return s;
  }
  throw ConfigError("unknown strategy '" + std::string(text) + "' (expected a, b, c, d, e, f or a_prime)");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::a: return "a";
    case Strategy::b: return "b";
    case Strategy::c: return "c";
    case Strategy::d: return "d";
    case Strategy::e: return "e";
    case Strategy::f: return "f";
    case Strategy::a_prime: return "a_prime";
  }
  return "?";
}

std::string_view long_name(Strategy s) {
  switch (s) {
    case Strategy::a: return "ce";
    case Strategy::b: return "weighted_ce";
    case Strategy::c: return "contrastive_ce";
    case Strategy::d: return "contrastive_weighted_ce";
    case Strategy::e: return "contrastive_ce_augmented";
    case Strategy::f: return "contrastive_ce_augmented_ordinal";
    case Strategy::a_prime: return "ce_augmented_ordinal";
  }
  return "?";
}

StrategyTraits traits(Strategy s) {
  switch (s) {
    case Strategy::a: return {false, false, false, false};
    case Strategy::b: return {false, true, false, false};
    case Strategy::c: return {true, false, false, false};
    case Strategy::d: return {true, true, false, false};
    case Strategy::e: return {true, false, true, false};
    case Strategy::f: return {true, false, true, true};
    case Strategy::a_prime: return {false, false, true, true};
  }
  return {};
}

void TrainConfig::validate() const {
  const StrategyTraits t = traits(strategy);
  if (t.augmented && !augment) {
    throw ConfigError("strategy " + std::string(to_string(strategy)) + " (" + std::string(long_name(strategy)) +
                      ") requires an augment policy");
  }
  if (!t.augmented && augment) {
    throw ConfigError("strategy " + std::string(to_string(strategy)) + " (" + std::string(long_name(strategy)) +
                      ") trains on original data only; remove the augment policy");
  }
  if (shared_encoder && strategy != Strategy::f) throw ConfigError("shared_encoder applies to strategy f only");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  try {
    optimizer.validate();
    models::ModelConfig probe = model;
    if (probe.layout.set == data::FeatureSet::generic && probe.layout.generic_dims == 0) probe.layout.generic_dims = 1;
    probe.validate();
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

std::string TrainConfig::fingerprint() const {
  std::string s = model.fingerprint() + ";strategy=" + std::string(to_string(strategy));
  if (traits(strategy).contrastive) s += ";tau=" + std::to_string(tau);
  s += ";epochs=" + std::to_string(epochs_phase1) + "/" + std::to_string(epochs_phase2) +
       ";batch=" + std::to_string(batch_size) + ";optimizer=" + std::string(engage::to_string(optimizer.kind)) +
       ";lr=" + std::to_string(optimizer.learning_rate);
  if (model.encoder == models::EncoderKind::tcn) s += ";dropout=" + std::to_string(model.tcn.dropout);
  if (shared_encoder) s += ";shared_encoder";
  return s;
}

Dataset prepare_features(const Dataset& d, data::FeatureLayout& layout) {
  if (layout.set == data::FeatureSet::generic) {
    if (layout.generic_dims == 0) layout.generic_dims = d.channels();
  } else if (layout.set == data::FeatureSet::affect_behavioral && d.channels() == data::FeatureLayout{}.raw_width()) {
    return data::select_features(d, data::FeatureSet::affect_behavioral_latent, data::FeatureSet::affect_behavioral);
  }
  if (!d.empty() && d.channels() != layout.raw_width()) {
    throw ShapeError("data has " + std::to_string(d.channels()) + " channels but feature set '" +
                     std::string(data::to_string(layout.set)) + "' needs " + std::to_string(layout.raw_width()));
  }
  return d;
}

namespace {

std::vector<const data::FeatureSequence*> gather(const Dataset& d, std::span<const std::size_t> idx) {
  std::vector<const data::FeatureSequence*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&d[i]);
  return out;
}

std::vector<int> pick(std::span<const int> labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels[i]);
  return out;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

// Shuffled index blocks covering every sample once.
std::vector<std::vector<std::size_t>> epoch_blocks(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> blocks;
  for (std::size_t start = 0; start < n; start += batch)
    blocks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                        order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch)));
  return blocks;
}

Var head_loss(Var logits, std::span<const int> labels, bool binary, std::span<const double> weights) {
  return binary ? losses::binary_cross_entropy(logits, labels) : losses::cross_entropy(logits, labels, weights);
}

void require_finite(double loss, const char* phase) {
  if (!std::isfinite(loss)) throw NumericError(std::string(phase) + ": loss became non-finite; lower the learning rate");
}

void require_sizes(const Dataset& d, std::span<const int> labels) {
  if (d.size() < 2) throw ContractError("training needs at least 2 samples, got " + std::to_string(d.size()));
  if (labels.size() != d.size()) throw ContractError("label count does not match the dataset");
}

}  // namespace

void train_phase1(models::Network& net, const Dataset& d, std::span<const int> labels, int num_classes,
                  const TrainConfig& config, std::uint64_t stream_tag, TrainingTrace& trace) {
  require_sizes(d, labels);
  Rng sampler = make_rng(config.seed, {stream::sampler, stream_tag, 1});
  Rng dropout = make_rng(config.seed, {stream::dropout, stream_tag, 1});
  Optimizer opt(config.optimizer);
  auto params = net.encoder_parameters();
  for (Parameter* p : net.projection_parameters()) params.push_back(p);
  net.set_encoder_frozen(false);

  const std::size_t batches = batches_per_epoch(d.size(), config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs_phase1; ++epoch) {
    double total = 0.0;
    std::size_t degenerate = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto idx =
          data::sample_indices(labels, num_classes, config.batch_size, data::SamplingMode::class_balanced, sampler);
      const auto batch = gather(d, idx);
      const auto y = pick(labels, idx);
      for (const auto* s : batch) trace.trained_ids.insert(s->sample_id);
      Tape tape;
      losses::SupConDiagnostics diag;
      Var z = net.project(tape, net.embed(tape, models::stack_time_major(batch), models::Mode::train, &dropout));
      Var loss = losses::supcon_loss(z, y, config.tau, &diag);
      trace.anchors_without_positives += diag.anchors_without_positives;
      if (diag.anchors_without_positives == diag.anchors) {
        ++degenerate;
        continue;
      }
      require_finite(loss.value().item(), "contrastive phase");
      total += loss.value().item();
      opt.step(params, tape.backward(loss));
    }
    trace.batches_without_positives += degenerate;
    if (degenerate == batches) {
      throw ContractError("contrastive phase: no batch in epoch " + std::to_string(epoch) +
                          " contained a positive pair; use class-balanced sampling with batch_size >= 2 and at "
                          "least two samples per class");
    }
    trace.phase1_loss.push_back(total / static_cast<double>(batches - degenerate));
  }
}

void train_classifier_head(models::Network& net, const Tensor& embeddings, std::span<const int> labels, bool binary,
                           std::span<const double> class_weights, const TrainConfig& config, std::uint64_t stream_tag,
                           TrainingTrace& trace) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != labels.size()) {
    throw ContractError("classifier head needs one embedding row per label");
  }
  const std::size_t n = labels.size(), width = embeddings.dim(1);
  Rng rng = make_rng(config.seed, {stream::sampler, stream_tag, 2});
  Optimizer opt(config.optimizer);
  auto params = net.classifier_parameters();
  for (std::size_t epoch = 0; epoch < config.epochs_phase2; ++epoch) {
    double total = 0.0;
    const auto blocks = epoch_blocks(n, config.batch_size, rng);
    for (const auto& idx : blocks) {
      Tensor rows({idx.size(), width});
      for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy_n(embeddings.raw() + idx[k] * width, width, rows.raw() + k * width);
      Tape tape;
      Var loss = head_loss(net.classify(tape, tape.constant(std::move(rows))), pick(labels, idx), binary, class_weights);
      require_finite(loss.value().item(), "classifier phase");
      total += loss.value().item();
      opt.step(params, tape.backward(loss));
    }
    trace.phase2_loss.push_back(total / static_cast<double>(blocks.size()));
  }
}

void train_phase2(models::Network& net, const Dataset& d, std::span<const int> labels, bool binary,
                  std::span<const double> class_weights, const TrainConfig& config, std::uint64_t stream_tag,
                  TrainingTrace& trace) {
  require_sizes(d, labels);
  const std::uint64_t before = net.encoder_checksum();
  net.set_encoder_frozen(true);
  std::vector<const data::FeatureSequence*> all;
  for (const auto& s : d.sequences()) {
    all.push_back(&s);
    trace.trained_ids.insert(s.sample_id);
  }
  train_classifier_head(net, net.embed_all(all), labels, binary, class_weights, config, stream_tag, trace);
  net.set_encoder_frozen(false);
  if (net.encoder_checksum() != before) {
    throw ContractError("encoder parameters changed while training the classifier on frozen features");
  }
}

void train_end_to_end(models::Network& net, const Dataset& d, std::span<const int> labels, bool binary,
                      std::span<const double> class_weights, const TrainConfig& config, std::uint64_t stream_tag,
                      TrainingTrace& trace) {
  require_sizes(d, labels);
  Rng rng = make_rng(config.seed, {stream::sampler, stream_tag, 3});
  Rng dropout = make_rng(config.seed, {stream::dropout, stream_tag, 3});
  Optimizer opt(config.optimizer);
  net.set_encoder_frozen(false);
  auto params = net.encoder_parameters();
  for (Parameter* p : net.classifier_parameters()) params.push_back(p);
  for (std::size_t epoch = 0; epoch < config.epochs_phase1; ++epoch) {
    double total = 0.0;
    const auto blocks = epoch_blocks(d.size(), config.batch_size, rng);
    for (const auto& idx : blocks) {
      const auto batch = gather(d, idx);
      for (const auto* s : batch) trace.trained_ids.insert(s->sample_id);
      Tape tape;
      Var emb = net.embed(tape, models::stack_time_major(batch), models::Mode::train, &dropout);
      Var loss = head_loss(net.classify(tape, emb), pick(labels, idx), binary, class_weights);
      require_finite(loss.value().item(), "end-to-end training");
      total += loss.value().item();
      opt.step(params, tape.backward(loss));
    }
    trace.phase2_loss.push_back(total / static_cast<double>(blocks.size()));
  }
}

namespace {

std::uint64_t member_seed(std::uint64_t seed, std::size_t c) {
  Rng rng = make_rng(seed, {stream::member, c});
  return rng();
}

}  // namespace

TrainedModel train_pipeline(const TrainConfig& config_in, const Dataset& train_in) {
  const auto start = std::chrono::steady_clock::now();
  config_in.validate();
  for (const auto& s : train_in.sequences()) {
    if (s.split == data::Split::test) {
      throw ContractError("training data contains test sample '" + s.sample_id + "'");
    }
  }
  if (train_in.split() == data::Split::test) throw ContractError("refusing to train on the test split");

  TrainedModel out;
  out.config = config_in;
  TrainConfig& config = out.config;
  Dataset train = prepare_features(train_in, config.model.layout);
  const StrategyTraits t = traits(config.strategy);
  const int classes = train.num_classes();
  out.num_classes = classes;
  if (t.augmented) train = augment::apply_policy(train, *config.augment);

  const std::vector<int> labels = train.labels();
  TrainingTrace& trace = out.trace;

  if (!t.ordinal) {
    models::ModelConfig mc = config.model;
    mc.num_outputs = static_cast<std::size_t>(classes);
    models::Network net(mc, config.seed);
    std::vector<double> weights;
    if (t.weighted) weights = losses::compute_class_weights(train.class_counts());
    if (t.contrastive) {
      train_phase1(net, train, labels, classes, config, 0, trace);
      train_phase2(net, train, labels, false, weights, config, 0, trace);
    } else {
      train_end_to_end(net, train, labels, false, weights, config, 0, trace);
    }
    out.network = std::move(net);
  } else {
    std::optional<models::Network> shared;
    if (config.shared_encoder) {
      models::ModelConfig mc = config.model;
      mc.num_outputs = 1;
      shared.emplace(mc, config.seed);
      train_phase1(*shared, train, labels, classes, config, 0, trace);
    }
    std::vector<std::unique_ptr<ordinal::BinaryScorer>> members;
    for (int c = 0; c + 1 < classes; ++c) {
      const auto task = ordinal::relabel_binary(labels, c, classes);
      if (task.degenerate) {
        throw ContractError("ordinal threshold y > " + std::to_string(c) + " has no samples on one side; oversample " +
                            (task.positives == 0 ? "the classes above " : "the classes at or below ") +
                            std::to_string(c) + " before training");
      }
      const std::size_t minority = std::min(task.positives, labels.size() - task.positives);
      if (minority < 2) {
        trace.warnings.push_back("ordinal threshold y > " + std::to_string(c) + " has only " +
                                 std::to_string(minority) + " minority sample(s); oversampling is advised");
      }
      const std::uint64_t tag = static_cast<std::uint64_t>(c) + 1;
      models::ModelConfig mc = config.model;
      mc.num_outputs = 1;
      models::Network net = shared ? *shared : models::Network(mc, member_seed(config.seed, tag));
      if (shared) net.reset_classifier(1, member_seed(config.seed, tag));
      if (t.contrastive) {
        if (!shared) train_phase1(net, train, task.targets, 2, config, tag, trace);
        train_phase2(net, train, task.targets, true, {}, config, tag, trace);
      } else {
        train_end_to_end(net, train, task.targets, true, {}, config, tag, trace);
      }
      members.push_back(std::make_unique<ordinal::NetworkScorer>(std::move(net)));
    }
    out.ensemble.emplace(classes, std::move(members));
  }
  trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

Predictions TrainedModel::predict(const Dataset& d_in) const {
  data::FeatureLayout layout = config.model.layout;
  const Dataset d = prepare_features(d_in, layout);
  std::vector<const data::FeatureSequence*> all;
  for (const auto& s : d.sequences()) all.push_back(&s);
  Predictions out;
  if (ensemble) {
    for (auto& p : ensemble->predict(all)) {
      out.labels.push_back(p.label);
      out.clamped += p.distribution.clamped;
      out.probabilities.push_back(std::move(p.distribution.adjusted));
    }
    return out;
  }
  if (!network) throw ContractError("model holds no trained network");
  const Tensor emb = network->embed_all(all);
  Tape tape;
  const Tensor& probs = ops::softmax(network->classify(tape, tape.constant(emb))).value();
  const std::size_t classes = probs.dim(1);
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::vector<double> p(probs.raw() + i * classes, probs.raw() + (i + 1) * classes);
    out.labels.push_back(ordinal::argmax_lower(p));
    out.probabilities.push_back(std::move(p));
  }
  return out;
}

}  // namespace engage::pipeline
