// SPDX-License-Identifier: Apache-2.0
#include "engage/data/dataset.hpp"

#include <string>

#include "engage/error.hpp"

namespace engage::data {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  throw ParameterError("unknown split '" + std::string(text) + "' (expected train, validation or test)");
}

std::string_view to_string(FeatureSet set) {
  switch (set) {
    case FeatureSet::affect_behavioral:
      return "affect_behavioral";
    case FeatureSet::affect_behavioral_latent:
      return "affect_behavioral_latent";
    case FeatureSet::generic:
      return "generic";
  }
  return "?";
}

FeatureSet parse_feature_set(std::string_view text) {
  if (text == "affect_behavioral") return FeatureSet::affect_behavioral;
  if (text == "affect_behavioral_latent") return FeatureSet::affect_behavioral_latent;
  if (text == "generic") return FeatureSet::generic;
  throw ParameterError("unknown feature set '" + std::string(text) + "'");
}

std::size_t FeatureLayout::raw_width() const {
  switch (set) {
    case FeatureSet::affect_behavioral:
      return affect_dims + behavioral_dims;
    case FeatureSet::affect_behavioral_latent:
      return affect_dims + latent_dims + behavioral_dims;
    case FeatureSet::generic:
      return generic_dims;
  }
  return 0;
}

std::size_t FeatureLayout::encoder_width() const {
  if (set == FeatureSet::affect_behavioral_latent) return affect_dims + fused_latent_dims + behavioral_dims;
  return raw_width();
}

Dataset::Dataset(std::vector<FeatureSequence> sequences, int num_classes, std::optional<Split> split)
    : sequences_(std::move(sequences)), num_classes_(num_classes), split_(split) {
  if (num_classes_ < 1) throw ContractError("dataset needs at least one class");
  class_counts_.assign(static_cast<std::size_t>(num_classes_), 0);
  const std::size_t width = sequences_.empty() ? 0 : sequences_.front().frames.shape().back();
  for (const FeatureSequence& s : sequences_) {
    if (s.frames.rank() != 2 || s.length() < 1) {
      throw ContractError("sample '" + s.sample_id + "' frames must be a non-empty [T x D] matrix");
    }
    if (s.channels() != width) {
      throw ContractError("sample '" + s.sample_id + "' has " + std::to_string(s.channels()) +
                          " channels, expected " + std::to_string(width));
    }
    if (s.label < 0 || s.label >= num_classes_) {
      throw ContractError("sample '" + s.sample_id + "' label out of range: " + std::to_string(s.label));
    }
    if (!s.frames.all_finite()) throw ContractError("sample '" + s.sample_id + "' has non-finite values");
    ++class_counts_[static_cast<std::size_t>(s.label)];
  }
}

std::size_t Dataset::channels() const { return sequences_.empty() ? 0 : sequences_.front().channels(); }

std::optional<std::size_t> Dataset::uniform_length() const {
  if (sequences_.empty()) return std::nullopt;
  const std::size_t t = sequences_.front().length();
  for (const auto& s : sequences_)
    if (s.length() != t) return std::nullopt;
  return t;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(sequences_.size());
  for (const auto& s : sequences_) out.push_back(s.label);
  return out;
}

Dataset merge(const std::vector<const Dataset*>& parts) {
  if (parts.empty()) throw ContractError("merge: no datasets");
  std::vector<FeatureSequence> all;
  const int classes = parts.front()->num_classes();
  for (const Dataset* d : parts) {
    if (d->num_classes() != classes) throw ContractError("merge: class counts differ");
    all.insert(all.end(), d->sequences().begin(), d->sequences().end());
  }
  return Dataset(std::move(all), classes);
}

Dataset with_split(const Dataset& d, Split split) {
  std::vector<FeatureSequence> seqs = d.sequences();
  for (auto& s : seqs) s.split = split;
  return Dataset(std::move(seqs), d.num_classes(), split);
}

ClassDistribution class_distribution(const Dataset& d) {
  if (d.empty()) throw ContractError("class_distribution: empty dataset");
  ClassDistribution out;
  out.counts = d.class_counts();
  out.total = d.size();
  for (std::size_t c : out.counts) out.fractions.push_back(static_cast<double>(c) / static_cast<double>(out.total));
  return out;
}

Dataset select_features(const Dataset& d, FeatureSet from, FeatureSet to) {
  if (from == to) return d;
  if (from != FeatureSet::affect_behavioral_latent || to != FeatureSet::affect_behavioral) {
    throw ParameterError("cannot derive feature set '" + std::string(to_string(to)) + "' from '" +
                         std::string(to_string(from)) + "'");
  }
  const FeatureLayout src{from};
  const FeatureLayout dst{to};
  if (!d.empty() && d.channels() != src.raw_width()) {
    throw ShapeError("select_features: expected " + std::to_string(src.raw_width()) + " channels, got " +
                     std::to_string(d.channels()));
  }
  std::vector<FeatureSequence> out;
  out.reserve(d.size());
  const std::size_t skip = FeatureLayout::affect_dims + FeatureLayout::latent_dims;
  for (const FeatureSequence& s : d.sequences()) {
    FeatureSequence n = s;
    n.frames = Tensor(Shape{s.length(), dst.raw_width()});
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t j = 0; j < FeatureLayout::affect_dims; ++j) n.frames.at(t, j) = s.frames.at(t, j);
      for (std::size_t j = 0; j < FeatureLayout::behavioral_dims; ++j)
        n.frames.at(t, FeatureLayout::affect_dims + j) = s.frames.at(t, skip + j);
    }
    out.push_back(std::move(n));
  }
  return Dataset(std::move(out), d.num_classes(), d.split());
}

}  // namespace engage::data
