// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "engage/data/dataset.hpp"
#include "engage/diffcore/tape.hpp"
#include "engage/rng.hpp"

namespace engage::models {

enum class EncoderKind { lstm, tcn };
EncoderKind parse_encoder(std::string_view name);
std::string_view to_string(EncoderKind kind);

enum class Mode { train, eval };

struct LstmConfig {
  std::size_t layers = 2;
  std::size_t hidden = 256;
  void validate() const;
};

struct TcnConfig {
  std::size_t levels = 8;
  std::size_t hidden = 256;
  std::size_t kernel = 16;
  double dropout = 0.1;
  // Average the top block over time instead of taking the last step.
  bool mean_pool = false;
  void validate() const;
  // Frames visible to the last output step: 1 + 2 (K-1) (2^L - 1).
  std::size_t receptive_field() const;
};

struct ModelConfig {
  data::FeatureLayout layout;
  EncoderKind encoder = EncoderKind::tcn;
  LstmConfig lstm;
  TcnConfig tcn;
  std::size_t fusion_hidden = 128;
  std::size_t projection_dim = 128;
  std::size_t classifier_hidden = 128;
  // 1 for an ordinal binary head.
  std::size_t num_outputs = 4;

  void validate() const;
  std::size_t input_width() const { return layout.raw_width(); }
  std::size_t encoder_input_width() const { return layout.encoder_width(); }
  std::size_t embedding_width() const { return encoder == EncoderKind::lstm ? lstm.hidden : tcn.hidden; }
  // Canonical text of every field that shapes a parameter.
  std::string fingerprint() const;
};

// Owns parameters at stable addresses, in creation order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  // Parameters whose names start with prefix.
  std::vector<Parameter*> with_prefix(std::string_view prefix);
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// y = x W + b, W: [in x out], initialised U(-1/sqrt(in), 1/sqrt(in)).
struct Dense {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Dense create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
};

// Stacks equal-length sequences into a time-major [T x B x D] tensor.
Tensor stack_time_major(std::span<const data::FeatureSequence* const> batch);

// Fusion, encoder, projection head and classifier head. Parameter names are
// prefixed "fusion.", "encoder.", "projection." and "classifier.".
class Network {
 public:
  Network(const ModelConfig& config, std::uint64_t seed);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  // Per-frame fusion of [T x B x raw] to [T x B x encoder width]; identity
  // unless the layout carries the latent block.
  Var fuse(Tape& tape, Var frames) const;
  // [T x B x raw] -> [B x H]. dropout_rng is required in train mode when the
  // encoder uses dropout.
  Var embed(Tape& tape, const Tensor& frames, Mode mode, Rng* dropout_rng = nullptr) const;
  // [B x H] -> unit-norm [B x projection_dim].
  Var project(Tape& tape, Var embedding) const;
  // [B x H] -> [B x num_outputs].
  Var classify(Tape& tape, Var embedding) const;

  // Embeddings of every sequence in eval mode, batched by equal length.
  Tensor embed_all(std::span<const data::FeatureSequence* const> sequences, std::size_t batch = 64) const;

  // Encoder stack: fusion plus encoder.
  std::vector<Parameter*> encoder_parameters();
  std::vector<Parameter*> projection_parameters();
  std::vector<Parameter*> classifier_parameters();
  void set_encoder_frozen(bool frozen);
  // FNV-1a over names and bytes of the encoder stack.
  std::uint64_t encoder_checksum() const;
  // Re-initialises the classifier head for a new output width.
  void reset_classifier(std::size_t num_outputs, std::uint64_t seed);

 private:
  void build();
  void rebind();
  Var lstm_forward(Tape& tape, Var x) const;
  Var tcn_forward(Tape& tape, Var x, Mode mode, Rng* rng) const;

  struct LstmLayer {
    Parameter* wx;
    Parameter* wh;
    Parameter* b;
  };
  struct Conv {
    Parameter* w;
    Parameter* b;
  };
  struct TcnBlock {
    Conv conv1, conv2;
    Conv downsample;  // w == nullptr when widths already match
    std::size_t dilation;
  };

  ModelConfig config_;
  std::uint64_t seed_;
  ParameterStore store_;
  Dense fusion1_, fusion2_;
  std::vector<LstmLayer> lstm_;
  std::vector<TcnBlock> tcn_;
  Dense projection_;
  Dense classifier1_, classifier2_;
};

// Binary checkpoint: magic, version, fingerprint, seed, named float64
// records, FNV-1a checksum. Little-endian throughout.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::string save_checkpoint(const Network& net);
// Rejects corrupt or truncated bytes, other versions, and any fingerprint or
// shape that disagrees with config.
Network load_checkpoint(std::string_view bytes, const ModelConfig& config);

void write_file(const std::string& path, std::string_view bytes);
std::string read_file(const std::string& path);

}  // namespace engage::models
