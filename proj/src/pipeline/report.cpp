// SPDX-License-Identifier: Apache-2.0
#include "engage/pipeline/report.hpp"

#include <cstdio>
#include <fstream>

#include "engage/error.hpp"

namespace engage::pipeline {
namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

}  // namespace

std::string grid_header(int num_classes) {
  std::string h = "features,model,strategy,total_acc";
  for (int c = 0; c < num_classes; ++c) h += ",prec_" + std::to_string(c);
  for (int c = 0; c < num_classes; ++c) h += ",rec_" + std::to_string(c);
  return h;
}

std::string grid_row(const RunReport& r) {
  std::string row = r.features + "," + r.model + "," + r.strategy + "," + fixed(r.accuracy);
  for (double p : r.precision) row += "," + fixed(p);
  for (double v : r.recall) row += "," + fixed(v);
  return row;
}

std::string confusion_csv(const RunReport& r) {
  std::string out = "true\\predicted";
  for (int c = 0; c < r.num_classes; ++c) out += "," + std::to_string(c);
  out += "\n";
  for (int t = 0; t < r.num_classes; ++t) {
    out += std::to_string(t);
    for (std::size_t n : r.confusion[static_cast<std::size_t>(t)]) out += "," + std::to_string(n);
    out += "\n";
  }
  return out;
}

nlohmann::json to_json(const RunReport& r) {
  return {{"features", r.features},
          {"model", r.model},
          {"strategy", r.strategy},
          {"num_classes", r.num_classes},
          {"total_accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"precision_undefined", r.precision_undefined},
          {"recall_undefined", r.recall_undefined},
          {"confusion", r.confusion},
          {"clamped_predictions", r.clamped_predictions},
          {"fingerprint", r.fingerprint},
          {"seed", r.seed},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

RunReport report_from_json(const nlohmann::json& j) {
  try {
    RunReport r;
    r.features = j.at("features").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.num_classes = j.at("num_classes").get<int>();
    r.accuracy = j.at("total_accuracy").get<double>();
    r.precision = j.at("precision").get<std::vector<double>>();
    r.recall = j.at("recall").get<std::vector<double>>();
    r.precision_undefined = j.at("precision_undefined").get<std::vector<bool>>();
    r.recall_undefined = j.at("recall_undefined").get<std::vector<bool>>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    r.clamped_predictions = j.at("clamped_predictions").get<std::size_t>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run report: ") + e.what());
  }
}

void write_run_report(const RunReport& r, const std::filesystem::path& dir) {
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "confusion.csv", confusion_csv(r));
  write_text(dir / "grid.csv", grid_header(r.num_classes) + "\n" + grid_row(r) + "\n");
}

void write_grid(std::span<const AblationCell> cells, int num_classes, const std::filesystem::path& path) {
  std::string out = grid_header(num_classes) + ",error\n";
  for (const AblationCell& cell : cells) {
    if (cell.report) {
      out += grid_row(*cell.report) + ",\n";
      continue;
    }
    out += std::string(data::to_string(cell.config.model.layout.set)) + "," +
           std::string(models::to_string(cell.config.model.encoder)) + "," +
           std::string(to_string(cell.config.strategy)) + std::string(2 + 2 * static_cast<std::size_t>(num_classes), ',') +
           csv_quote(cell.error) + "\n";
  }
  write_text(path, out);
}

}  // namespace engage::pipeline
