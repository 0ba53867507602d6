// SPDX-License-Identifier: Apache-2.0
#include "engage/cli/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "engage/augment/augment.hpp"
#include "engage/cli/config.hpp"
#include "engage/data/io.hpp"
#include "engage/error.hpp"
#include "engage/models/models.hpp"
#include "engage/ordinal/ordinal.hpp"
#include "engage/pipeline/report.hpp"

namespace engage::cli {
namespace {

namespace fs = std::filesystem;
using data::Dataset;
using data::DatasetSplits;
using data::Split;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
}

// Every split is tagged so that written CSVs round-trip into the same split.
DatasetSplits load_splits(const RunConfig& cfg) {
  if (cfg.data.synthetic) {
    const Dataset all = data::generate_synthetic(*cfg.data.synthetic);
    return data::split_dataset(all, cfg.data.split, cfg.seed);
  }
  // Width is checked later per feature set; a 270-wide file serves both
  // affect-based sets.
  const data::FeatureLayout any_width{data::FeatureSet::generic, 0};
  const Dataset all = data::load_dataset(*cfg.data.features, *cfg.data.labels, any_width, cfg.data.load);
  const bool tagged = std::all_of(all.sequences().begin(), all.sequences().end(),
                                  [](const auto& s) { return s.split.has_value(); });
  return tagged ? data::partition_by_tags(all) : data::split_dataset(all, cfg.data.split, cfg.seed);
}

Dataset training_pool(const DatasetSplits& s) { return data::merge({&s.train, &s.validation}); }

fs::path checkpoint_path(const RunConfig& cfg) { return cfg.checkpoint.value_or(cfg.output / "model.ckpt"); }

nlohmann::json trace_json(const pipeline::TrainedModel& m) {
  const auto& t = m.trace;
  return {{"strategy", std::string(pipeline::to_string(m.config.strategy))},
          {"fingerprint", m.config.fingerprint()},
          {"num_classes", m.num_classes},
          {"phase1_loss", t.phase1_loss},
          {"phase2_loss", t.phase2_loss},
          {"batches_without_positives", t.batches_without_positives},
          {"anchors_without_positives", t.anchors_without_positives},
          {"trained_samples", t.trained_ids.size()},
          {"warnings", t.warnings},
          {"seconds", t.seconds}};
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.data.synthetic) throw ConfigError("synth needs a 'data.synthetic' section");
  const DatasetSplits s = load_splits(cfg);
  const Dataset all = data::merge({&s.train, &s.validation, &s.test});
  data::write_dataset(all, cfg.output / "features.csv", cfg.output / "labels.csv");
  for (const auto& w : s.warnings) out << "warning: " << w << '\n';
  out << "wrote " << all.size() << " samples (" << s.train.size() << " train, " << s.validation.size()
      << " validation, " << s.test.size() << " test) to " << cfg.output.string() << '\n';
  return 0;
}

int cmd_augment(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.train.augment) throw ConfigError("augment needs an 'augment' section");
  const DatasetSplits s = load_splits(cfg);
  const Dataset pool = training_pool(s);
  const Dataset aug = augment::apply_policy(pool, *cfg.train.augment);
  data::write_dataset(aug, cfg.output / "augmented_features.csv", cfg.output / "augmented_labels.csv");
  out << "augmented " << pool.size() << " -> " << aug.size() << " samples; class counts";
  for (auto c : aug.class_counts()) out << ' ' << c;
  out << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const DatasetSplits s = load_splits(cfg);
  const pipeline::TrainedModel m = pipeline::train_pipeline(cfg.train, training_pool(s));
  const std::string bytes = m.ensemble ? ordinal::save_ensemble(*m.ensemble) : models::save_checkpoint(*m.network);
  const fs::path ckpt = checkpoint_path(cfg);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  models::write_file(ckpt.string(), bytes);
  write_text(cfg.output / "training.json", trace_json(m).dump(2) + "\n");
  for (const auto& w : m.trace.warnings) out << "warning: " << w << '\n';
  out << "trained strategy " << pipeline::to_string(m.config.strategy) << " in " << m.trace.seconds << " s; wrote "
      << ckpt.string() << '\n';
  return 0;
}

// Rebuilds the trained model around a checkpoint. Leakage checks use the ids
// of the train and validation splits, which are exactly what train consumed.
pipeline::TrainedModel restore(const RunConfig& cfg, const Dataset& pool) {
  pipeline::TrainedModel m;
  m.config = cfg.train;
  m.num_classes = pool.num_classes();
  pipeline::prepare_features(pool, m.config.model.layout);
  const std::string bytes = models::read_file(checkpoint_path(cfg).string());
  models::ModelConfig mc = m.config.model;
  if (pipeline::traits(cfg.train.strategy).ordinal) {
    mc.num_outputs = 1;
    m.ensemble = ordinal::load_ensemble(bytes, mc);
    if (m.ensemble->num_classes() != m.num_classes) {
      throw CheckpointError("ensemble covers " + std::to_string(m.ensemble->num_classes()) + " classes, data has " +
                            std::to_string(m.num_classes));
    }
  } else {
    mc.num_outputs = static_cast<std::size_t>(m.num_classes);
    m.network = models::load_checkpoint(bytes, mc);
  }
  for (const auto& seq : pool.sequences()) m.trace.trained_ids.insert(seq.sample_id);
  return m;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const DatasetSplits s = load_splits(cfg);
  const pipeline::TrainedModel m = restore(cfg, training_pool(s));
  const pipeline::RunReport r = pipeline::evaluate(m, s.test);
  pipeline::write_run_report(r, cfg.output);
  out << "accuracy " << r.accuracy << " on " << s.test.size() << " test samples\n";
  return 0;
}

std::string cell_name(const pipeline::TrainConfig& c) {
  return std::string(data::to_string(c.model.layout.set)) + "_" + std::string(models::to_string(c.model.encoder)) +
         "_" + std::string(pipeline::to_string(c.strategy));
}

int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.ablate) throw ConfigError("ablate needs an 'ablate' section");
  const DatasetSplits s = load_splits(cfg);
  const auto& ab = *cfg.ablate;
  const auto grid = pipeline::make_grid(cfg.train, ab.features, ab.encoders, ab.strategies,
                                        cfg.train.augment.value_or(augment::AugmentPolicy{}));
  const auto cells = pipeline::run_ablation(grid, training_pool(s), s.test);
  pipeline::write_grid(cells, s.test.num_classes(), cfg.output / "grid.csv");
  std::size_t failed = 0;
  for (const auto& cell : cells) {
    if (cell.report) {
      const fs::path dir = cfg.output / "cells" / cell_name(cell.config);
      fs::create_directories(dir);
      pipeline::write_run_report(*cell.report, dir);
    } else {
      ++failed;
      out << "cell " << cell_name(cell.config) << " failed: " << cell.error << '\n';
    }
  }
  out << "ablation: " << cells.size() - failed << " of " << cells.size() << " cells completed; grid at "
      << (cfg.output / "grid.csv").string() << '\n';
  return 0;
}

// Collects report.json files under the given directories into one grid.
int cmd_report(const std::vector<std::string>& roots, const std::string& output, std::ostream& out) {
  std::vector<fs::path> files;
  for (const auto& root : roots) {
    if (!fs::exists(root)) throw ConfigError("report: '" + root + "' does not exist");
    if (fs::is_regular_file(root)) {
      files.emplace_back(root);
      continue;
    }
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("report: no report.json found");
  std::string csv;
  int classes = -1;
  for (const auto& f : files) {
    std::ifstream in(f);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("report: '" + f.string() + "' is not valid JSON: " + e.what());
    }
    const pipeline::RunReport r = pipeline::report_from_json(j);
    if (classes < 0) {
      classes = r.num_classes;
      csv = pipeline::grid_header(classes) + "\n";
    } else if (r.num_classes != classes) {
      throw ConfigError("report: '" + f.string() + "' has " + std::to_string(r.num_classes) + " classes, expected " +
                        std::to_string(classes));
    }
    csv += pipeline::grid_row(r) + "\n";
  }
  if (output.empty()) {
    out << csv;
  } else {
    write_text(output, csv);
    out << "summarised " << files.size() << " reports into " << output << '\n';
  }
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive ordinal engagement classification", "engage"};
  app.require_subcommand(1);
  std::string config_path, output;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "YAML run config")->required();
    sub->add_option("-o,--out", output, "Output directory (overrides the config)");
    sub->add_option("-s,--seed", seed, "Run seed (overrides the config)");
  };
  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, std::ostream&);
  };
  const Cmd cmds[] = {
      {"synth", "Generate a synthetic dataset with split tags", cmd_synth},
      {"augment", "Write the augmented training pool", cmd_augment},
      {"train", "Train a model and write its checkpoint", cmd_train},
      {"eval", "Evaluate a checkpoint on the test split", cmd_eval},
      {"ablate", "Run the feature x encoder x strategy grid", cmd_ablate},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : cmds) {
    subs.push_back(app.add_subcommand(c.name, c.help));
    add_common(subs.back());
  }
  std::vector<std::string> report_roots;
  std::string report_out;
  CLI::App* report = app.add_subcommand("report", "Summarise report.json files into one grid CSV");
  report->add_option("dirs", report_roots, "Directories or report.json files")->required();
  report->add_option("-o,--out", report_out, "Write the summary here instead of stdout");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (report->parsed()) return cmd_report(report_roots, report_out, out);
    RunConfig cfg = parse_config(config_path);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      if (subs[i]->count("--seed") > 0) cfg.apply_seed(seed);
      if (!output.empty()) cfg.output = fs::absolute(output);
      fs::create_directories(cfg.output);
      write_text(cfg.output / "resolved_config.yaml", resolved_yaml(cfg));
      return cmds[i].fn(cfg, out);
    }
    return 1;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeFailure& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace engage::cli
