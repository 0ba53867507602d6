// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "engage/pipeline/pipeline.hpp"

namespace engage::pipeline {

// Grid CSV: features,model,strategy,total_acc,prec_0..,rec_0..[,error]
std::string grid_header(int num_classes);
std::string grid_row(const RunReport& r);
std::string confusion_csv(const RunReport& r);

nlohmann::json to_json(const RunReport& r);
RunReport report_from_json(const nlohmann::json& j);

// report.json, confusion.csv and grid.csv under dir.
void write_run_report(const RunReport& r, const std::filesystem::path& dir);
// grid.csv with one row per cell; failed cells keep their columns empty and
// carry the error text.
void write_grid(std::span<const AblationCell> cells, int num_classes, const std::filesystem::path& path);

}  // namespace engage::pipeline
