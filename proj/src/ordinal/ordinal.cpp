// SPDX-License-Identifier: Apache-2.0
#include "engage/ordinal/ordinal.hpp"

#include <algorithm>
#include <cmath>

#include "engage/diffcore/ops.hpp"
#include "engage/error.hpp"

namespace engage::ordinal {

BinaryTask relabel_binary(std::span<const int> labels, int threshold, int num_classes) {
  if (num_classes < 2 || threshold < 0 || threshold > num_classes - 2) {
    throw ParameterError("ordinal threshold " + std::to_string(threshold) + " outside [0, " +
                         std::to_string(num_classes - 2) + "]");
  }
  BinaryTask task;
  task.targets.reserve(labels.size());
  for (int y : labels) {
    task.targets.push_back(y > threshold ? 1 : 0);
    task.positives += y > threshold;
  }
  task.degenerate = task.positives == 0 || task.positives == labels.size();
  return task;
}

Distribution combine_probabilities(std::span<const double> g) {
  if (g.empty()) throw ContractError("combine_probabilities: need at least one binary probability");
  for (std::size_t c = 0; c < g.size(); ++c) {
    if (!(g[c] >= 0.0 && g[c] <= 1.0)) {
      throw ContractError("combine_probabilities: g[" + std::to_string(c) + "] = " + std::to_string(g[c]) +
                          " is not a probability");
    }
  }
  const std::size_t classes = g.size() + 1;
  Distribution d;
  d.raw.resize(classes);
  d.raw[0] = 1.0 - g[0];
  for (std::size_t c = 1; c + 1 < classes; ++c) d.raw[c] = g[c - 1] - g[c];
  d.raw[classes - 1] = g[classes - 2];

  d.adjusted = d.raw;
  d.clamped = std::any_of(d.raw.begin(), d.raw.end(), [](double p) { return p < 0.0; });
  if (d.clamped) {
    double total = 0.0;
    for (double& p : d.adjusted) total += p = std::max(p, 0.0);
    // total >= 1 because the clamped raw vector summed to 1
    for (double& p : d.adjusted) p /= total;
  }
  return d;
}

int argmax_lower(std::span<const double> p) {
  if (p.empty()) throw ContractError("argmax of an empty distribution");
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

NetworkScorer::NetworkScorer(models::Network net) : net_(std::move(net)) {
  if (net_.config().num_outputs != 1) {
    throw ContractError("ordinal members need a single-logit head, got " + std::to_string(net_.config().num_outputs));
  }
}

std::vector<double> NetworkScorer::score(std::span<const data::FeatureSequence* const> batch) const {
  const Tensor emb = net_.embed_all(batch);
  Tape tape;
  const Tensor& p = ops::sigmoid(net_.classify(tape, tape.constant(emb))).value();
  return {p.data().begin(), p.data().begin() + static_cast<std::ptrdiff_t>(batch.size())};
}

OrdinalEnsemble::OrdinalEnsemble(int num_classes, std::vector<std::unique_ptr<BinaryScorer>> members, ClampPolicy policy)
    : num_classes_(num_classes), members_(std::move(members)), policy_(policy) {
  if (num_classes_ < 2) throw ContractError("ordinal ensemble needs at least 2 classes");
  if (members_.size() != static_cast<std::size_t>(num_classes_ - 1)) {
    throw ContractError("ordinal ensemble over " + std::to_string(num_classes_) + " classes needs " +
                        std::to_string(num_classes_ - 1) + " members, got " + std::to_string(members_.size()));
  }
  for (const auto& m : members_) {
    if (!m) throw ContractError("ordinal ensemble member is null");
    if (m->input_width() != members_.front()->input_width()) {
      throw ContractError("ordinal ensemble members disagree on the feature layout");
    }
  }
}

OrdinalPrediction OrdinalEnsemble::predict(const data::FeatureSequence& s) const {
  const data::FeatureSequence* one[] = {&s};
  return std::move(predict(one).front());
}

std::vector<OrdinalPrediction> OrdinalEnsemble::predict(std::span<const data::FeatureSequence* const> batch) const {
  for (const auto* s : batch) {
    if (s->channels() != members_.front()->input_width()) {
      throw ContractError("sample '" + s->sample_id + "' has " + std::to_string(s->channels()) +
                          " channels; ensemble members expect " + std::to_string(members_.front()->input_width()));
    }
  }
  std::vector<std::vector<double>> scores;
  for (const auto& m : members_) {
    scores.push_back(m->score(batch));
    if (scores.back().size() != batch.size()) throw ContractError("ordinal member returned the wrong number of scores");
  }
  std::vector<OrdinalPrediction> out(batch.size());
  std::vector<double> g(members_.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t c = 0; c < members_.size(); ++c) g[c] = scores[c][i];
    out[i].distribution = combine_probabilities(g);
    out[i].label = argmax_lower(out[i].distribution.adjusted);
  }
  return out;
}

namespace {

constexpr std::string_view kMagic = "ENGAGEEN";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < 8) throw CheckpointError("ensemble checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes[pos + i])} << (8 * i);
  pos += 8;
  return v;
}

}  // namespace

std::string save_ensemble(const OrdinalEnsemble& e) {
  std::string out(kMagic);
  put_u64(out, models::kCheckpointVersion);
  put_u64(out, static_cast<std::uint64_t>(e.num_classes()));
  put_u64(out, static_cast<std::uint64_t>(e.policy()));
  for (std::size_t c = 0; c < e.size(); ++c) {
    const auto* member = dynamic_cast<const NetworkScorer*>(&e.member(c));
    if (member == nullptr) throw ContractError("only network-backed ensemble members can be saved");
    // Each member checkpoint carries its own checksum.
    const std::string bytes = models::save_checkpoint(member->network());
    put_u64(out, bytes.size());
    out += bytes;
  }
  return out;
}

OrdinalEnsemble load_ensemble(std::string_view bytes, const models::ModelConfig& member_config) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw CheckpointError("not an ordinal ensemble checkpoint (bad magic)");
  std::size_t pos = kMagic.size();
  const std::uint64_t version = get_u64(bytes, pos);
  if (version != models::kCheckpointVersion) {
    throw CheckpointError("unsupported ensemble checkpoint version " + std::to_string(version));
  }
  const std::uint64_t classes = get_u64(bytes, pos);
  const std::uint64_t policy = get_u64(bytes, pos);
  if (classes < 2 || classes > 1024) throw CheckpointError("ensemble checkpoint has an invalid class count");
  if (policy != static_cast<std::uint64_t>(ClampPolicy::clamp_renormalize)) {
    throw CheckpointError("ensemble checkpoint has an unknown clamp policy");
  }
  std::vector<std::unique_ptr<BinaryScorer>> members;
  for (std::uint64_t c = 0; c + 1 < classes; ++c) {
    const std::uint64_t size = get_u64(bytes, pos);
    if (bytes.size() - pos < size) throw CheckpointError("ensemble checkpoint truncated in member " + std::to_string(c));
    members.push_back(std::make_unique<NetworkScorer>(models::load_checkpoint(bytes.substr(pos, size), member_config)));
    pos += size;
  }
  if (pos != bytes.size()) throw CheckpointError("trailing bytes after ensemble members");
  return OrdinalEnsemble(static_cast<int>(classes), std::move(members), ClampPolicy::clamp_renormalize);
}

}  // namespace engage::ordinal
