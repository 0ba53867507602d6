// SPDX-License-Identifier: Apache-2.0
#include "engage/data/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "engage/error.hpp"

namespace engage::data {
namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(const std::filesystem::path& file, std::size_t line, std::string_view sample,
                       const std::string& what) {
  std::string msg = file.filename().string() + ":" + std::to_string(line) + ": ";
  if (!sample.empty()) msg += "sample '" + std::string(sample) + "': ";
  throw IngestionError(msg + what);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

struct RawSample {
  std::size_t first_line = 0;
  std::vector<std::pair<long long, std::vector<double>>> rows;
};

std::ifstream open(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw IngestionError("cannot open '" + p.string() + "'");
  return in;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& features, const std::filesystem::path& labels,
                     const FeatureLayout& layout, const LoadOptions& options) {
  if (options.frame_stride < 1) throw ParameterError("frame_stride must be >= 1");
  if (options.num_classes < 2) throw ParameterError("num_classes must be >= 2");

  // Labels first so feature rows can be checked as they stream in.
  struct LabelEntry {
    int label;
    std::optional<Split> split;
    std::size_t line;
  };
  std::unordered_map<std::string, LabelEntry> label_of;
  {
    std::ifstream in = open(labels);
    std::string line;
    if (!std::getline(in, line)) fail(labels, 1, {}, "empty labels file");
    auto header = split_csv(line);
    if (header.size() < 2 || trim(header[0]) != "sample_id" || trim(header[1]) != "label" ||
        (header.size() == 3 && trim(header[2]) != "split") || header.size() > 3) {
      fail(labels, 1, {}, "header must be 'sample_id,label[,split]'");
    }
    const bool has_split = header.size() == 3;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto cols = split_csv(line);
      if (cols.size() != header.size()) fail(labels, lineno, {}, "expected " + std::to_string(header.size()) + " columns");
      const std::string id(trim(cols[0]));
      int label = 0;
      if (!parse_number(cols[1], label)) fail(labels, lineno, id, "unknown label '" + std::string(cols[1]) + "'");
      if (label < 0 || label >= options.num_classes) {
        fail(labels, lineno, id, "label out of range: " + std::to_string(label) + " (classes 0.." +
                                     std::to_string(options.num_classes - 1) + ")");
      }
      std::optional<Split> split;
      if (has_split) {
        try {
          split = parse_split(trim(cols[2]));
        } catch (const ParameterError& e) {
          fail(labels, lineno, id, e.what());
        }
      }
      if (!label_of.emplace(id, LabelEntry{label, split, lineno}).second) fail(labels, lineno, id, "duplicate label row");
    }
  }

  std::vector<std::string> order;
  std::unordered_map<std::string, RawSample> samples;
  std::size_t width = 0;
  {
    std::ifstream in = open(features);
    std::string line;
    if (!std::getline(in, line)) fail(features, 1, {}, "empty features file");
    auto header = split_csv(line);
    if (header.size() < 3 || trim(header[0]) != "sample_id" || trim(header[1]) != "frame") {
      fail(features, 1, {}, "header must be 'sample_id,frame,f0,...'");
    }
    width = header.size() - 2;
    for (std::size_t j = 0; j < width; ++j) {
      if (trim(header[j + 2]) != "f" + std::to_string(j)) fail(features, 1, {}, "feature column " + std::to_string(j) + " must be named f" + std::to_string(j));
    }
    const std::size_t expected = layout.raw_width();
    if (expected != 0 && expected != width) {
      fail(features, 1, {}, "layout '" + std::string(to_string(layout.set)) + "' expects " + std::to_string(expected) +
                                " feature columns, file has " + std::to_string(width));
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto cols = split_csv(line);
      const std::string id(trim(cols[0]));
      if (cols.size() != header.size()) {
        fail(features, lineno, id, "ragged row: " + std::to_string(cols.size()) + " columns, expected " +
                                       std::to_string(header.size()));
      }
      long long frame = 0;
      if (!parse_number(cols[1], frame) || frame < 0) fail(features, lineno, id, "bad frame index '" + std::string(cols[1]) + "'");
      std::vector<double> values(width);
      for (std::size_t j = 0; j < width; ++j) {
        if (!parse_number(cols[j + 2], values[j]) || !std::isfinite(values[j])) {
          fail(features, lineno, id, "non-finite or unparsable value in f" + std::to_string(j));
        }
      }
      auto [it, inserted] = samples.try_emplace(id);
      if (inserted) {
        order.push_back(id);
        it->second.first_line = lineno;
      }
      it->second.rows.emplace_back(frame, std::move(values));
    }
  }

  std::vector<FeatureSequence> sequences;
  sequences.reserve(order.size());
  for (const std::string& id : order) {
    RawSample& raw = samples[id];
    auto lab = label_of.find(id);
    if (lab == label_of.end()) fail(features, raw.first_line, id, "no label in " + labels.filename().string());
    std::stable_sort(raw.rows.begin(), raw.rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < raw.rows.size(); ++k) {
      if (raw.rows[k].first != static_cast<long long>(k)) {
        const std::string what = raw.rows[k].first < static_cast<long long>(k)
                                     ? "duplicate frame " + std::to_string(raw.rows[k].first)
                                     : "missing frame " + std::to_string(k);
        fail(features, raw.first_line, id, what);
      }
    }
    std::size_t frames = raw.rows.size();
    if (options.crop_frames) {
      if (frames < *options.crop_frames) {
        fail(features, raw.first_line, id, "has " + std::to_string(frames) + " frames, fewer than crop_frames=" +
                                               std::to_string(*options.crop_frames));
      }
      frames = *options.crop_frames;
    }
    const std::size_t kept = (frames + options.frame_stride - 1) / options.frame_stride;
    Tensor m(Shape{kept, width});
    for (std::size_t t = 0; t < kept; ++t) {
      const auto& src = raw.rows[t * options.frame_stride].second;
      std::copy(src.begin(), src.end(), m.raw() + t * width);
    }
    sequences.push_back(FeatureSequence{id, std::move(m), lab->second.label, Origin::original, lab->second.split});
    label_of.erase(lab);
  }
  if (!label_of.empty()) {
    auto worst = std::min_element(label_of.begin(), label_of.end(),
                                  [](const auto& a, const auto& b) { return a.second.line < b.second.line; });
    fail(labels, worst->second.line, worst->first, "labeled sample has no feature rows");
  }
  return Dataset(std::move(sequences), options.num_classes);
}

void write_dataset(const Dataset& d, const std::filesystem::path& features, const std::filesystem::path& labels) {
  std::ofstream f(features, std::ios::binary);
  std::ofstream l(labels, std::ios::binary);
  if (!f) throw IngestionError("cannot write '" + features.string() + "'");
  if (!l) throw IngestionError("cannot write '" + labels.string() + "'");

  const std::size_t width = d.channels();
  f << "sample_id,frame";
  for (std::size_t j = 0; j < width; ++j) f << ",f" << j;
  f << '\n';

  const bool with_split = d.split().has_value() ||
                          std::any_of(d.sequences().begin(), d.sequences().end(), [](const auto& s) { return s.split.has_value(); });
  l << (with_split ? "sample_id,label,split\n" : "sample_id,label\n");

  char buf[64];
  for (const FeatureSequence& s : d.sequences()) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      f << s.sample_id << ',' << t;
      for (std::size_t j = 0; j < width; ++j) {
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, s.frames.at(t, j));
        f << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
      }
      f << '\n';
    }
    l << s.sample_id << ',' << s.label;
    if (with_split) l << ',' << to_string(s.split.value_or(d.split().value_or(Split::train)));
    l << '\n';
  }
  if (!f || !l) throw IngestionError("write failed for '" + features.string() + "'");
}

}  // namespace engage::data
