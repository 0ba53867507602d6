// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <map>
#include <string>

#include "engage/diffcore/ops.hpp"
#include "engage/error.hpp"
#include "engage/models/models.hpp"

namespace engage::models {

EncoderKind parse_encoder(std::string_view name) {
  if (name == "lstm") return EncoderKind::lstm;
  if (name == "tcn") return EncoderKind::tcn;
  throw ParameterError("unknown encoder '" + std::string(name) + "' (expected lstm or tcn)");
}

std::string_view to_string(EncoderKind kind) { return kind == EncoderKind::lstm ? "lstm" : "tcn"; }

void LstmConfig::validate() const {
  if (layers < 1) throw ParameterError("lstm.layers must be >= 1");
  if (hidden < 1) throw ParameterError("lstm.hidden must be >= 1");
}

void TcnConfig::validate() const {
  if (levels < 1) throw ParameterError("tcn.levels must be >= 1");
  if (levels > 30) throw ParameterError("tcn.levels must be <= 30");
  if (hidden < 1) throw ParameterError("tcn.hidden must be >= 1");
  if (kernel < 1) throw ParameterError("tcn.kernel must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("tcn.dropout must be in [0, 1)");
}

std::size_t TcnConfig::receptive_field() const { return 1 + 2 * (kernel - 1) * ((std::size_t{1} << levels) - 1); }

void ModelConfig::validate() const {
  if (input_width() == 0) throw ParameterError("model input width is unknown; set the generic feature width");
  if (encoder == EncoderKind::lstm) lstm.validate();
  else tcn.validate();
  if (fusion_hidden < 1 || projection_dim < 1 || classifier_hidden < 1) {
    throw ParameterError("head and fusion widths must be >= 1");
  }
  if (num_outputs < 1) throw ParameterError("num_outputs must be >= 1");
}

std::string ModelConfig::fingerprint() const {
  std::string s = "features=" + std::string(data::to_string(layout.set)) + ";input=" + std::to_string(input_width()) +
                  ";encoder=" + std::string(to_string(encoder));
  if (encoder == EncoderKind::lstm) {
    s += ";layers=" + std::to_string(lstm.layers) + ";hidden=" + std::to_string(lstm.hidden);
  } else {
    s += ";levels=" + std::to_string(tcn.levels) + ";hidden=" + std::to_string(tcn.hidden) +
         ";kernel=" + std::to_string(tcn.kernel) + ";pool=" + (tcn.mean_pool ? "mean" : "last");
  }
  if (layout.set == data::FeatureSet::affect_behavioral_latent) s += ";fusion_hidden=" + std::to_string(fusion_hidden);
  s += ";projection=" + std::to_string(projection_dim) + ";classifier_hidden=" + std::to_string(classifier_hidden) +
       ";outputs=" + std::to_string(num_outputs);
  return s;
}

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter '" + name + "'");
  params_.push_back(std::make_unique<Parameter>(Parameter{std::move(name), std::move(value), false}));
  return *params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterStore::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p->name.starts_with(prefix)) out.push_back(p.get());
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

namespace {

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

Dense Dense::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  Dense d;
  d.weight = &store.add(name + ".w", uniform_init({in, out}, in, rng));
  d.bias = &store.add(name + ".b", uniform_init({out}, in, rng));
  return d;
}

Var Dense::operator()(Tape& tape, Var x) const { return ops::add_bias(ops::matmul(x, tape.param(*weight)), tape.param(*bias)); }

Tensor stack_time_major(std::span<const data::FeatureSequence* const> batch) {
  if (batch.empty()) throw ContractError("cannot stack an empty batch");
  const std::size_t steps = batch.front()->length(), width = batch.front()->channels(), b = batch.size();
  Tensor out({steps, b, width});
  for (std::size_t i = 0; i < b; ++i) {
    const auto& s = *batch[i];
    if (s.length() != steps || s.channels() != width) {
      throw ShapeError("batch mixes sequence shapes: '" + s.sample_id + "' is " + shape_string(s.frames.shape()) +
                       ", expected [" + std::to_string(steps) + "x" + std::to_string(width) +
                       "]; crop sequences to a common length");
    }
    for (std::size_t t = 0; t < steps; ++t)
      std::memcpy(out.raw() + (t * b + i) * width, s.frames.raw() + t * width, width * sizeof(double));
  }
  return out;
}

Network::Network(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  build();
}

Network::Network(const Network& other) : config_(other.config_), seed_(other.seed_) {
  for (const Parameter* p : other.store_.all()) store_.add(p->name, p->value).frozen = p->frozen;
  rebind();
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::build() {
  Rng rng = make_rng(seed_, {stream::init});
  const std::size_t hidden = config_.embedding_width();
  if (config_.layout.set == data::FeatureSet::affect_behavioral_latent) {
    fusion1_ = Dense::create(store_, "fusion.0", data::FeatureLayout::latent_dims, config_.fusion_hidden, rng);
    fusion2_ = Dense::create(store_, "fusion.1", config_.fusion_hidden, data::FeatureLayout::fused_latent_dims, rng);
  }
  const std::size_t in = config_.encoder_input_width();
  if (config_.encoder == EncoderKind::lstm) {
    for (std::size_t l = 0; l < config_.lstm.layers; ++l) {
      const std::size_t fan = l == 0 ? in : hidden;
      const std::string p = "encoder.lstm." + std::to_string(l);
      store_.add(p + ".wx", uniform_init({fan, 4 * hidden}, hidden, rng));
      store_.add(p + ".wh", uniform_init({hidden, 4 * hidden}, hidden, rng));
      store_.add(p + ".b", uniform_init({4 * hidden}, hidden, rng));
    }
  } else {
    const std::size_t k = config_.tcn.kernel;
    for (std::size_t l = 0; l < config_.tcn.levels; ++l) {
      const std::size_t c_in = l == 0 ? in : hidden;
      const std::string p = "encoder.tcn." + std::to_string(l);
      store_.add(p + ".conv1.w", uniform_init({k, c_in, hidden}, k * c_in, rng));
      store_.add(p + ".conv1.b", uniform_init({hidden}, k * c_in, rng));
      store_.add(p + ".conv2.w", uniform_init({k, hidden, hidden}, k * hidden, rng));
      store_.add(p + ".conv2.b", uniform_init({hidden}, k * hidden, rng));
      if (c_in != hidden) {
        store_.add(p + ".down.w", uniform_init({1, c_in, hidden}, c_in, rng));
        store_.add(p + ".down.b", uniform_init({hidden}, c_in, rng));
      }
    }
  }
  projection_ = Dense::create(store_, "projection", hidden, config_.projection_dim, rng);
  classifier1_ = Dense::create(store_, "classifier.0", hidden, config_.classifier_hidden, rng);
  classifier2_ = Dense::create(store_, "classifier.1", config_.classifier_hidden, config_.num_outputs, rng);
  rebind();
}

void Network::rebind() {
  auto get = [&](const std::string& name) {
    Parameter* p = store_.find(name);
    if (p == nullptr) throw ContractError("missing parameter '" + name + "'");
    return p;
  };
  auto dense = [&](const std::string& name) { return Dense{get(name + ".w"), get(name + ".b")}; };
  if (config_.layout.set == data::FeatureSet::affect_behavioral_latent) {
    fusion1_ = dense("fusion.0");
    fusion2_ = dense("fusion.1");
  }
  lstm_.clear();
  tcn_.clear();
  if (config_.encoder == EncoderKind::lstm) {
    for (std::size_t l = 0; l < config_.lstm.layers; ++l) {
      const std::string p = "encoder.lstm." + std::to_string(l);
      lstm_.push_back({get(p + ".wx"), get(p + ".wh"), get(p + ".b")});
    }
  } else {
    for (std::size_t l = 0; l < config_.tcn.levels; ++l) {
      const std::string p = "encoder.tcn." + std::to_string(l);
      TcnBlock block{{get(p + ".conv1.w"), get(p + ".conv1.b")}, {get(p + ".conv2.w"), get(p + ".conv2.b")},
                     {store_.find(p + ".down.w"), store_.find(p + ".down.b")}, std::size_t{1} << l};
      tcn_.push_back(block);
    }
  }
  projection_ = dense("projection");
  classifier1_ = dense("classifier.0");
  classifier2_ = dense("classifier.1");
}

Var Network::fuse(Tape& tape, Var frames) const {
  const Shape shape = frames.shape();
  if (shape.size() != 3 || shape[2] != config_.input_width()) {
    throw ShapeError("network expects [T x B x " + std::to_string(config_.input_width()) + "] frames, got " +
                     shape_string(shape));
  }
  if (config_.layout.set != data::FeatureSet::affect_behavioral_latent) return frames;
  using L = data::FeatureLayout;
  const std::size_t rows = shape[0] * shape[1];
  Var flat = ops::reshape(frames, {rows, shape[2]});
  Var latent = ops::slice_columns(flat, L::affect_dims, L::latent_dims);
  Var fused = fusion2_(tape, ops::relu(fusion1_(tape, latent)));
  const Var parts[] = {ops::slice_columns(flat, 0, L::affect_dims), fused,
                       ops::slice_columns(flat, L::affect_dims + L::latent_dims, L::behavioral_dims)};
  return ops::reshape(ops::concat_columns(parts), {shape[0], shape[1], config_.encoder_input_width()});
}

Var Network::lstm_forward(Tape& tape, Var x) const {
  const std::size_t steps = x.shape()[0], b = x.shape()[1], h = config_.lstm.hidden;
  Var input = ops::reshape(x, {steps * b, x.shape()[2]});
  // Layer 0 input projections for all steps in one product.
  Var projected = ops::add_bias(ops::matmul(input, tape.param(*lstm_[0].wx)), tape.param(*lstm_[0].b));

  std::vector<Var> hs(lstm_.size()), cs(lstm_.size());
  for (std::size_t l = 0; l < lstm_.size(); ++l) hs[l] = cs[l] = tape.constant(Tensor({b, h}));
  for (std::size_t t = 0; t < steps; ++t) {
    Var below;
    for (std::size_t l = 0; l < lstm_.size(); ++l) {
      const LstmLayer& layer = lstm_[l];
      Var from_input = l == 0 ? ops::slice_rows(projected, t * b, b)
                              : ops::add_bias(ops::matmul(below, tape.param(*layer.wx)), tape.param(*layer.b));
      Var gates = ops::add(from_input, ops::matmul(hs[l], tape.param(*layer.wh)));
      Var i = ops::sigmoid(ops::slice_columns(gates, 0, h));
      Var f = ops::sigmoid(ops::slice_columns(gates, h, h));
      Var g = ops::tanh(ops::slice_columns(gates, 2 * h, h));
      Var o = ops::sigmoid(ops::slice_columns(gates, 3 * h, h));
      cs[l] = ops::add(ops::mul(f, cs[l]), ops::mul(i, g));
      hs[l] = ops::mul(o, ops::tanh(cs[l]));
      below = hs[l];
    }
  }
  return hs.back();
}

Var Network::tcn_forward(Tape& tape, Var x, Mode mode, Rng* rng) const {
  const double rate = config_.tcn.dropout;
  const bool drop = mode == Mode::train && rate > 0.0;
  if (drop && rng == nullptr) throw ContractError("training-mode TCN with dropout needs a generator");
  auto conv = [&](Var in, const Conv& c, std::size_t dilation) {
    return ops::add_bias(ops::conv1d_causal(in, tape.param(*c.w), dilation), tape.param(*c.b));
  };
  for (const TcnBlock& block : tcn_) {
    Var y = ops::relu(conv(x, block.conv1, block.dilation));
    if (drop) y = ops::dropout(y, rate, *rng);
    y = ops::relu(conv(y, block.conv2, block.dilation));
    if (drop) y = ops::dropout(y, rate, *rng);
    Var residual = block.downsample.w != nullptr ? conv(x, block.downsample, 1) : x;
    x = ops::relu(ops::add(y, residual));
  }
  if (config_.tcn.mean_pool) return ops::time_mean(x);
  const std::size_t steps = x.shape()[0], b = x.shape()[1], c = x.shape()[2];
  return ops::reshape(ops::slice_rows(ops::reshape(x, {steps, b * c}), steps - 1, 1), {b, c});
}

Var Network::embed(Tape& tape, const Tensor& frames, Mode mode, Rng* dropout_rng) const {
  if (!frames.all_finite()) throw NumericError("encoder input contains non-finite values");
  Var x = fuse(tape, tape.constant(frames));
  return config_.encoder == EncoderKind::lstm ? lstm_forward(tape, x) : tcn_forward(tape, x, mode, dropout_rng);
}

Var Network::project(Tape& tape, Var embedding) const { return ops::l2_normalize_rows(projection_(tape, embedding)); }

Var Network::classify(Tape& tape, Var embedding) const {
  if (embedding.value().rank() != 2 || embedding.shape()[1] != config_.embedding_width()) {
    throw ShapeError("classifier expects [B x " + std::to_string(config_.embedding_width()) + "] embeddings, got " +
                     shape_string(embedding.shape()));
  }
  return classifier2_(tape, ops::relu(classifier1_(tape, embedding)));
}

Tensor Network::embed_all(std::span<const data::FeatureSequence* const> sequences, std::size_t batch) const {
  const std::size_t n = sequences.size(), width = config_.embedding_width();
  Tensor out({std::max<std::size_t>(n, 1), width});
  // Group by length so batches stack; order within a group is preserved.
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (std::size_t i = 0; i < n; ++i) by_length[sequences[i]->length()].push_back(i);
  for (const auto& [length, idx] : by_length) {
    for (std::size_t start = 0; start < idx.size(); start += batch) {
      const std::size_t count = std::min(batch, idx.size() - start);
      std::vector<const data::FeatureSequence*> chunk;
      for (std::size_t k = 0; k < count; ++k) chunk.push_back(sequences[idx[start + k]]);
      Tape tape;
      const Tensor& e = embed(tape, stack_time_major(chunk), Mode::eval).value();
      for (std::size_t k = 0; k < count; ++k)
        std::memcpy(out.raw() + idx[start + k] * width, e.raw() + k * width, width * sizeof(double));
    }
  }
  return out;
}

std::vector<Parameter*> Network::encoder_parameters() {
  auto out = store_.with_prefix("fusion.");
  for (Parameter* p : store_.with_prefix("encoder.")) out.push_back(p);
  return out;
}

std::vector<Parameter*> Network::projection_parameters() { return store_.with_prefix("projection."); }
std::vector<Parameter*> Network::classifier_parameters() { return store_.with_prefix("classifier."); }

void Network::set_encoder_frozen(bool frozen) {
  for (Parameter* p : encoder_parameters()) p->frozen = frozen;
}

std::uint64_t Network::encoder_checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) h = (h ^ bytes[i]) * 1099511628211ULL;
  };
  for (const Parameter* p : store_.all()) {
    if (!p->name.starts_with("fusion.") && !p->name.starts_with("encoder.")) continue;
    mix(p->name.data(), p->name.size());
    mix(p->value.raw(), p->value.size() * sizeof(double));
  }
  return h;
}

void Network::reset_classifier(std::size_t num_outputs, std::uint64_t seed) {
  if (num_outputs < 1) throw ParameterError("num_outputs must be >= 1");
  config_.num_outputs = num_outputs;
  Rng rng = make_rng(seed, {stream::init, 1});
  const std::size_t hidden = config_.embedding_width(), mid = config_.classifier_hidden;
  classifier1_.weight->value = uniform_init({hidden, mid}, hidden, rng);
  classifier1_.bias->value = uniform_init({mid}, hidden, rng);
  classifier2_.weight->value = uniform_init({mid, num_outputs}, mid, rng);
  classifier2_.bias->value = uniform_init({num_outputs}, mid, rng);
}

}  // namespace engage::models
