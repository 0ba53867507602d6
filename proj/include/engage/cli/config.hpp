// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "engage/data/io.hpp"
#include "engage/data/split.hpp"
#include "engage/data/synthetic.hpp"
#include "engage/pipeline/pipeline.hpp"

namespace engage::cli {

struct DataConfig {
  std::optional<data::SyntheticSpec> synthetic;
  // Absolute after parsing.
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> labels;
  data::LoadOptions load;
  data::SplitFractions split;
};

struct AblateConfig {
  std::vector<data::FeatureSet> features;
  std::vector<models::EncoderKind> encoders{models::EncoderKind::lstm, models::EncoderKind::tcn};
  std::vector<pipeline::Strategy> strategies{pipeline::Strategy::a, pipeline::Strategy::c, pipeline::Strategy::e,
                                             pipeline::Strategy::f};
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output;
  DataConfig data;
  // Holds the model, strategy and augment policy.
  pipeline::TrainConfig train;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<AblateConfig> ablate;

  // Propagates the run seed into every seeded component.
  void apply_seed(std::uint64_t s);
};

// Parses and validates a YAML run config. Relative paths resolve against the
// config file's directory. Throws ConfigError naming the key path and line.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir);

// Every field with defaults expanded; parse_config_text(resolved) reproduces it.
std::string resolved_yaml(const RunConfig& config);

}  // namespace engage::cli
