// SPDX-License-Identifier: Apache-2.0
#include "engage/cli/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "engage/error.hpp"

namespace engage::cli {

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  if (data.synthetic) data.synthetic->seed = s;
  if (train.augment) train.augment->seed = s;
}

namespace {

namespace fs = std::filesystem;

std::string where(const YAML::Node& n) {
  const auto mark = n.Mark();
  return mark.line >= 0 ? " (line " + std::to_string(mark.line + 1) + ")" : "";
}

// A mapping node with its dotted path; rejects keys outside `allowed`.
class Section {
 public:
  Section(YAML::Node node, std::string path, std::initializer_list<const char*> allowed)
      : node_(std::move(node)), path_(std::move(path)) {
    if (!node_.IsMap()) throw ConfigError("config: '" + label() + "'" + where(node_) + " must be a mapping");
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        std::string expected;
        for (const char* a : allowed) expected += std::string(expected.empty() ? "" : ", ") + a;
        throw ConfigError("config: unknown key '" + qualify(key) + "'" + where(kv.first) + "; expected one of: " + expected);
      }
    }
  }

  bool has(const char* key) const { return static_cast<bool>(node_[key]); }
  YAML::Node raw(const char* key) const { return node_[key]; }
  std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  Section child(const char* key, std::initializer_list<const char*> allowed) const {
    return Section(node_[key], qualify(key), allowed);
  }

  template <typename T>
  T get(const char* key, T fallback) const {
    const YAML::Node n = node_[key];
    if (!n) return fallback;
    try {
      return n.as<T>();
    } catch (const YAML::BadConversion&) {
      throw ConfigError("config: '" + qualify(key) + "'" + where(n) + " has the wrong type");
    }
  }

  std::size_t count(const char* key, std::size_t fallback) const {
    const long long v = get<long long>(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError("config: '" + qualify(key) + "'" + where(node_[key]) + " must be >= 0");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t u64(const char* key, std::uint64_t fallback) const {
    const YAML::Node n = node_[key];
    if (!n) return fallback;
    const std::string text = get<std::string>(key, "");
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("config: '" + qualify(key) + "'" + where(n) + " must be a non-negative integer");
    }
    try {
      return std::stoull(text);
    } catch (const std::exception&) {
      throw ConfigError("config: '" + qualify(key) + "'" + where(n) + " is out of range");
    }
  }

  template <typename T>
  std::vector<T> list(const char* key, std::vector<T> fallback) const {
    const YAML::Node n = node_[key];
    if (!n) return fallback;
    if (!n.IsSequence()) throw ConfigError("config: '" + qualify(key) + "'" + where(n) + " must be a list");
    return get<std::vector<T>>(key, {});
  }

  // Applies parse to a string-valued key, tagging errors with the key path.
  template <typename Parse>
  auto parsed(const char* key, Parse parse, decltype(parse(std::string_view{})) fallback) const {
    const YAML::Node n = node_[key];
    if (!n) return fallback;
    try {
      return parse(get<std::string>(key, ""));
    } catch (const UsageError& e) {
      throw ConfigError("config: '" + qualify(key) + "'" + where(n) + ": " + e.what());
    }
  }

  template <typename Parse>
  auto parsed_list(const char* key, Parse parse, std::vector<decltype(parse(std::string_view{}))> fallback) const {
    const auto names = list<std::string>(key, {});
    if (names.empty()) return fallback;
    std::vector<decltype(parse(std::string_view{}))> out;
    for (const auto& name : names) {
      try {
        out.push_back(parse(name));
      } catch (const UsageError& e) {
        throw ConfigError("config: '" + qualify(key) + "'" + where(node_[key]) + ": " + e.what());
      }
    }
    return out;
  }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  YAML::Node node_;
  std::string path_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

void parse_data(const Section& root, RunConfig& cfg, const fs::path& base) {
  if (!root.has("data")) throw ConfigError("config: missing 'data' section (synthetic spec or features/labels paths)");
  const Section d = root.child("data", {"synthetic", "features", "labels", "num_classes", "frame_stride", "crop_frames", "split"});
  DataConfig& out = cfg.data;
  out.load.num_classes = static_cast<int>(d.count("num_classes", 4));
  out.load.frame_stride = d.count("frame_stride", 1);
  if (d.has("crop_frames")) out.load.crop_frames = d.count("crop_frames", 0);
  if (d.has("split")) {
    const Section s = d.child("split", {"train", "validation", "test"});
    out.split.train = s.get<double>("train", out.split.train);
    out.split.validation = s.get<double>("validation", out.split.validation);
    out.split.test = s.get<double>("test", out.split.test);
  }
  const bool files = d.has("features") || d.has("labels");
  if (d.has("synthetic") == files) {
    throw ConfigError("config: 'data' needs exactly one of 'synthetic' or 'features' + 'labels'");
  }
  if (files) {
    if (!d.has("features") || !d.has("labels")) throw ConfigError("config: 'data' needs both 'features' and 'labels'");
    out.features = resolve(base, d.get<std::string>("features", ""));
    out.labels = resolve(base, d.get<std::string>("labels", ""));
    for (const auto& p : {*out.features, *out.labels}) {
      if (!fs::exists(p)) throw ConfigError("config: data file '" + p.string() + "' does not exist");
    }
    return;
  }
  const Section s = d.child("synthetic", {"frames", "channels", "counts", "separability", "noise_std"});
  data::SyntheticSpec spec;
  spec.num_classes = out.load.num_classes;
  spec.frames = s.count("frames", spec.frames);
  spec.channels = s.count("channels", 0);
  spec.counts = s.list<std::size_t>("counts", std::vector<std::size_t>(static_cast<std::size_t>(spec.num_classes), 25));
  spec.separability = s.get<double>("separability", spec.separability);
  spec.noise_std = s.get<double>("noise_std", spec.noise_std);
  out.synthetic = spec;
}

void parse_model(const Section& root, models::ModelConfig& m) {
  if (root.has("layout")) {
    const Section l = root.child("layout", {"features", "generic_dims"});
    m.layout.set = l.parsed("features", data::parse_feature_set, m.layout.set);
    m.layout.generic_dims = l.count("generic_dims", 0);
  }
  if (!root.has("model")) return;
  const Section s = root.child("model", {"encoder", "lstm", "tcn", "fusion_hidden", "projection_dim", "classifier_hidden"});
  m.encoder = s.parsed("encoder", models::parse_encoder, m.encoder);
  if (s.has("lstm")) {
    const Section l = s.child("lstm", {"layers", "hidden"});
    m.lstm.layers = l.count("layers", m.lstm.layers);
    m.lstm.hidden = l.count("hidden", m.lstm.hidden);
  }
  if (s.has("tcn")) {
    const Section t = s.child("tcn", {"levels", "hidden", "kernel", "dropout", "mean_pool"});
    m.tcn.levels = t.count("levels", m.tcn.levels);
    m.tcn.hidden = t.count("hidden", m.tcn.hidden);
    m.tcn.kernel = t.count("kernel", m.tcn.kernel);
    m.tcn.dropout = t.get<double>("dropout", m.tcn.dropout);
    m.tcn.mean_pool = t.get<bool>("mean_pool", m.tcn.mean_pool);
  }
  m.fusion_hidden = s.count("fusion_hidden", m.fusion_hidden);
  m.projection_dim = s.count("projection_dim", m.projection_dim);
  m.classifier_hidden = s.count("classifier_hidden", m.classifier_hidden);
}

void parse_augment(const Section& root, RunConfig& cfg) {
  if (!root.has("augment")) return;
  const Section a = root.child("augment", {"factors", "transforms", "jitter_fraction", "scale_low", "scale_high",
                                           "shift_units", "permute_segments", "flip_mode"});
  augment::AugmentPolicy p;
  p.factors = a.list<double>("factors", p.factors);
  p.transforms = a.parsed_list("transforms", augment::parse_transform, p.transforms);
  p.jitter_fraction = a.get<double>("jitter_fraction", p.jitter_fraction);
  p.scale_low = a.get<double>("scale_low", p.scale_low);
  p.scale_high = a.get<double>("scale_high", p.scale_high);
  p.shift_units = a.count("shift_units", p.shift_units);
  p.permute_segments = a.count("permute_segments", p.permute_segments);
  p.flip_mode = a.parsed("flip_mode", augment::parse_flip_mode, p.flip_mode);
  try {
    p.validate(cfg.data.load.num_classes);
  } catch (const UsageError& e) {
    throw ConfigError(std::string("config: 'augment'") + where(root.raw("augment")) + ": " + e.what());
  }
  cfg.train.augment = p;
}

void parse_train(const Section& root, pipeline::TrainConfig& t) {
  // Without a train section the run is contrastive pre-training + CE head.
  t.strategy = pipeline::Strategy::c;
  if (!root.has("train")) return;
  const Section s = root.child("train", {"strategy", "tau", "epochs_phase1", "epochs_phase2", "batch_size",
                                         "shared_encoder", "optimizer"});
  t.strategy = s.parsed("strategy", pipeline::parse_strategy, t.strategy);
  t.tau = s.get<double>("tau", t.tau);
  t.epochs_phase1 = s.count("epochs_phase1", t.epochs_phase1);
  t.epochs_phase2 = s.count("epochs_phase2", t.epochs_phase2);
  t.batch_size = s.count("batch_size", t.batch_size);
  t.shared_encoder = s.get<bool>("shared_encoder", t.shared_encoder);
  if (s.has("optimizer")) {
    const Section o = s.child("optimizer", {"kind", "learning_rate", "beta1", "beta2", "epsilon"});
    t.optimizer.kind = o.parsed("kind", parse_optimizer_kind, t.optimizer.kind);
    t.optimizer.learning_rate = o.get<double>("learning_rate", t.optimizer.learning_rate);
    t.optimizer.beta1 = o.get<double>("beta1", t.optimizer.beta1);
    t.optimizer.beta2 = o.get<double>("beta2", t.optimizer.beta2);
    t.optimizer.epsilon = o.get<double>("epsilon", t.optimizer.epsilon);
  }
}

void parse_ablate(const Section& root, RunConfig& cfg) {
  if (!root.has("ablate")) return;
  const Section a = root.child("ablate", {"features", "encoders", "strategies"});
  AblateConfig ab;
  ab.features = a.parsed_list("features", data::parse_feature_set, {cfg.train.model.layout.set});
  ab.encoders = a.parsed_list("encoders", models::parse_encoder, ab.encoders);
  ab.strategies = a.parsed_list("strategies", pipeline::parse_strategy, ab.strategies);
  cfg.ablate = ab;
}

// Synthetic channel count follows the layout unless the layout is generic.
void reconcile_synthetic(RunConfig& cfg) {
  if (!cfg.data.synthetic) return;
  auto& spec = *cfg.data.synthetic;
  auto& layout = cfg.train.model.layout;
  if (layout.set == data::FeatureSet::generic) {
    if (spec.channels == 0) spec.channels = layout.generic_dims != 0 ? layout.generic_dims : 46;
    if (layout.generic_dims == 0) layout.generic_dims = spec.channels;
    if (layout.generic_dims != spec.channels) {
      throw ConfigError("config: 'layout.generic_dims' (" + std::to_string(layout.generic_dims) +
                        ") disagrees with 'data.synthetic.channels' (" + std::to_string(spec.channels) + ")");
    }
  } else {
    // An ablation over the latent set needs the full width for every cell.
    data::FeatureLayout widest = layout;
    if (cfg.ablate && std::count(cfg.ablate->features.begin(), cfg.ablate->features.end(),
                                 data::FeatureSet::affect_behavioral_latent) > 0) {
      widest.set = data::FeatureSet::affect_behavioral_latent;
    }
    if (spec.channels == 0) spec.channels = widest.raw_width();
    if (spec.channels != widest.raw_width()) {
      throw ConfigError("config: 'data.synthetic.channels' is " + std::to_string(spec.channels) + " but feature set '" +
                        std::string(data::to_string(widest.set)) + "' needs " + std::to_string(widest.raw_width()));
    }
  }
  try {
    spec.validate();
  } catch (const UsageError& e) {
    throw ConfigError(std::string("config: 'data.synthetic': ") + e.what());
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const fs::path& base_dir) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config: YAML syntax error: " + std::string(e.what()));
  }
  if (!doc || doc.IsNull()) throw ConfigError("config: empty document");
  const Section root(doc, "", {"seed", "output", "checkpoint", "data", "layout", "augment", "model", "train", "ablate"});
  RunConfig cfg;
  cfg.output = resolve(base_dir, root.get<std::string>("output", "out"));
  if (root.has("checkpoint")) cfg.checkpoint = resolve(base_dir, root.get<std::string>("checkpoint", ""));
  parse_data(root, cfg, base_dir);
  parse_model(root, cfg.train.model);
  parse_train(root, cfg.train);
  parse_augment(root, cfg);
  parse_ablate(root, cfg);
  reconcile_synthetic(cfg);
  cfg.apply_seed(root.u64("seed", 0));
  cfg.train.validate();
  return cfg;
}

RunConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  const fs::path dir = fs::absolute(path).parent_path();
  return parse_config_text(os.str(), dir);
}

std::string resolved_yaml(const RunConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::Key << "output" << YAML::Value << c.output.string();
  if (c.checkpoint) e << YAML::Key << "checkpoint" << YAML::Value << c.checkpoint->string();

  e << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "num_classes" << YAML::Value << c.data.load.num_classes;
  e << YAML::Key << "frame_stride" << YAML::Value << c.data.load.frame_stride;
  if (c.data.load.crop_frames) e << YAML::Key << "crop_frames" << YAML::Value << *c.data.load.crop_frames;
  e << YAML::Key << "split" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "train" << YAML::Value
    << c.data.split.train << YAML::Key << "validation" << YAML::Value << c.data.split.validation << YAML::Key << "test"
    << YAML::Value << c.data.split.test << YAML::EndMap;
  if (c.data.synthetic) {
    const auto& s = *c.data.synthetic;
    e << YAML::Key << "synthetic" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "frames" << YAML::Value << s.frames;
    e << YAML::Key << "channels" << YAML::Value << s.channels;
    e << YAML::Key << "counts" << YAML::Value << YAML::Flow << s.counts;
    e << YAML::Key << "separability" << YAML::Value << s.separability;
    e << YAML::Key << "noise_std" << YAML::Value << s.noise_std;
    e << YAML::EndMap;
  } else {
    e << YAML::Key << "features" << YAML::Value << c.data.features->string();
    e << YAML::Key << "labels" << YAML::Value << c.data.labels->string();
  }
  e << YAML::EndMap;

  const auto& m = c.train.model;
  e << YAML::Key << "layout" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "features" << YAML::Value << std::string(data::to_string(m.layout.set));
  e << YAML::Key << "generic_dims" << YAML::Value << m.layout.generic_dims;
  e << YAML::EndMap;

  e << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "encoder" << YAML::Value << std::string(models::to_string(m.encoder));
  e << YAML::Key << "lstm" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "layers" << YAML::Value
    << m.lstm.layers << YAML::Key << "hidden" << YAML::Value << m.lstm.hidden << YAML::EndMap;
  e << YAML::Key << "tcn" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "levels" << YAML::Value
    << m.tcn.levels << YAML::Key << "hidden" << YAML::Value << m.tcn.hidden << YAML::Key << "kernel" << YAML::Value
    << m.tcn.kernel << YAML::Key << "dropout" << YAML::Value << m.tcn.dropout << YAML::Key << "mean_pool"
    << YAML::Value << m.tcn.mean_pool << YAML::EndMap;
  e << YAML::Key << "fusion_hidden" << YAML::Value << m.fusion_hidden;
  e << YAML::Key << "projection_dim" << YAML::Value << m.projection_dim;
  e << YAML::Key << "classifier_hidden" << YAML::Value << m.classifier_hidden;
  e << YAML::EndMap;

  const auto& t = c.train;
  e << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "strategy" << YAML::Value << std::string(pipeline::to_string(t.strategy));
  e << YAML::Key << "tau" << YAML::Value << t.tau;
  e << YAML::Key << "epochs_phase1" << YAML::Value << t.epochs_phase1;
  e << YAML::Key << "epochs_phase2" << YAML::Value << t.epochs_phase2;
  e << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  e << YAML::Key << "shared_encoder" << YAML::Value << t.shared_encoder;
  e << YAML::Key << "optimizer" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "kind" << YAML::Value
    << std::string(engage::to_string(t.optimizer.kind)) << YAML::Key << "learning_rate" << YAML::Value
    << t.optimizer.learning_rate << YAML::Key << "beta1" << YAML::Value << t.optimizer.beta1 << YAML::Key << "beta2"
    << YAML::Value << t.optimizer.beta2 << YAML::Key << "epsilon" << YAML::Value << t.optimizer.epsilon << YAML::EndMap;
  e << YAML::EndMap;

  if (t.augment) {
    const auto& p = *t.augment;
    std::vector<std::string> names;
    for (auto tr : p.transforms) names.emplace_back(augment::to_string(tr));
    e << YAML::Key << "augment" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "factors" << YAML::Value << YAML::Flow << p.factors;
    e << YAML::Key << "transforms" << YAML::Value << YAML::Flow << names;
    e << YAML::Key << "jitter_fraction" << YAML::Value << p.jitter_fraction;
    e << YAML::Key << "scale_low" << YAML::Value << p.scale_low;
    e << YAML::Key << "scale_high" << YAML::Value << p.scale_high;
    e << YAML::Key << "shift_units" << YAML::Value << p.shift_units;
    e << YAML::Key << "permute_segments" << YAML::Value << p.permute_segments;
    e << YAML::Key << "flip_mode" << YAML::Value << std::string(augment::to_string(p.flip_mode));
    e << YAML::EndMap;
  }
  if (c.ablate) {
    std::vector<std::string> f, en, st;
    for (auto v : c.ablate->features) f.emplace_back(data::to_string(v));
    for (auto v : c.ablate->encoders) en.emplace_back(models::to_string(v));
    for (auto v : c.ablate->strategies) st.emplace_back(pipeline::to_string(v));
    e << YAML::Key << "ablate" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "features" << YAML::Value << YAML::Flow << f;
    e << YAML::Key << "encoders" << YAML::Value << YAML::Flow << en;
    e << YAML::Key << "strategies" << YAML::Value << YAML::Flow << st;
    e << YAML::EndMap;
  }
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace engage::cli
