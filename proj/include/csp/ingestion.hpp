#pragma once

// Corpus ingestion. One category per `<label>.ndjson` file; each line is a
// record {"word": "<label>", "drawing": [[[x0,x1,...],[y0,y1,...]], ...]}
// with integer coordinates in 0..255. Malformed lines are skipped and
// counted; a file where more than half the lines are malformed is rejected.

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "csp/error.hpp"
#include "csp/sketch.hpp"

namespace csp {

inline constexpr std::string_view kCorpusExtension = ".ndjson";

struct CategoryEntry {
  std::string label;
  std::filesystem::path path;
  std::size_t sketch_count = 0;

  friend bool operator==(const CategoryEntry&, const CategoryEntry&) = default;
};

struct CorpusManifest {
  std::vector<CategoryEntry> categories;  // sorted by label
  std::size_t total_sketches = 0;

  const CategoryEntry* find(std::string_view label) const {
    for (const auto& c : categories) {
      if (c.label == label) return &c;
    }
    return nullptr;
  }

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

struct CategoryLoad {
  std::vector<Sketch> sketches;
  std::size_t lines_read = 0;
  std::size_t skipped = 0;
};

// Parses the stroke array of a corpus record. Returns nullopt for anything
// that does not match the corpus shape.
inline std::optional<std::vector<Stroke>> parse_drawing(const nlohmann::json& drawing) {
  if (!drawing.is_array() || drawing.empty()) return std::nullopt;
  std::vector<Stroke> strokes;
  strokes.reserve(drawing.size());
  for (const auto& stroke : drawing) {
    if (!stroke.is_array() || stroke.size() < 2) return std::nullopt;
    const auto& xs = stroke[0];
    const auto& ys = stroke[1];
    if (!xs.is_array() || !ys.is_array() || xs.size() != ys.size() || xs.empty()) {
      return std::nullopt;
    }
    Stroke s;
    s.points.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i].is_number_integer() || !ys[i].is_number_integer()) return std::nullopt;
      const auto x = xs[i].get<long long>();
      const auto y = ys[i].get<long long>();
      if (x < 0 || x > kCanvasMax || y < 0 || y > kCanvasMax) return std::nullopt;
      s.points.push_back({static_cast<int>(x), static_cast<int>(y)});
    }
    strokes.push_back(std::move(s));
  }
  return strokes;
}

inline nlohmann::json drawing_to_json(const std::vector<Stroke>& strokes) {
  auto drawing = nlohmann::json::array();
  for (const auto& s : strokes) {
    auto xs = nlohmann::json::array();
    auto ys = nlohmann::json::array();
    for (const auto& p : s.points) {
      xs.push_back(p.x);
      ys.push_back(p.y);
    }
    drawing.push_back(nlohmann::json::array({std::move(xs), std::move(ys)}));
  }
  return drawing;
}

// Serializes one corpus record (no trailing newline).
inline std::string to_record(const Sketch& sketch) {
  nlohmann::json j;
  j["word"] = sketch.label;
  j["drawing"] = drawing_to_json(sketch.strokes);
  return j.dump();
}

// Parses one corpus line. `expected_label`, when non-empty, must match the
// record's normalized word. Returns nullopt for malformed records, including
// sketches that cannot be normalized.
inline std::optional<Sketch> parse_record(std::string_view line, std::string_view expected_label = {}) {
  auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto word = j.find("word");
  const auto drawing = j.find("drawing");
  if (word == j.end() || drawing == j.end() || !word->is_string()) return std::nullopt;
  Sketch sketch;
  sketch.label = normalize_label(word->get<std::string>());
  if (sketch.label.empty()) return std::nullopt;
  if (!expected_label.empty() && sketch.label != expected_label) return std::nullopt;
  auto strokes = parse_drawing(*drawing);
  if (!strokes) return std::nullopt;
  sketch.strokes = std::move(*strokes);
  try {
    validate(sketch);
    (void)normalize(sketch);
  } catch (const Error&) {
    return std::nullopt;
  }
  return sketch;
}

// Source ids are "<label>:<zero-based line number>".
inline std::string make_source_id(std::string_view label, std::size_t line_no) {
  return std::string(label) + ":" + std::to_string(line_no);
}

inline CategoryLoad load_category_detailed(const std::filesystem::path& path, std::string_view label,
                                           std::optional<std::size_t> limit = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  const std::string norm_label = normalize_label(label);

  CategoryLoad out;
  std::string line;
  while ((!limit || out.sketches.size() < *limit) && std::getline(in, line)) {
    const std::size_t line_no = out.lines_read++;
    auto sketch = parse_record(line, norm_label);
    if (!sketch) {
      ++out.skipped;
      continue;
    }
    sketch->source_id = make_source_id(norm_label, line_no);
    out.sketches.push_back(std::move(*sketch));
  }
  if (out.lines_read == 0) throw Error(ErrorCode::kFormatError, path.string() + ": no records");
  if (2 * out.skipped > out.lines_read) {
    throw Error(ErrorCode::kFormatError, path.string() + ": " + std::to_string(out.skipped) + " of " +
                                             std::to_string(out.lines_read) + " lines malformed");
  }
  return out;
}

inline std::vector<Sketch> load_category(const std::filesystem::path& path, std::string_view label,
                                         std::optional<std::size_t> limit = std::nullopt) {
  return load_category_detailed(path, label, limit).sketches;
}

namespace detail {

inline std::vector<std::pair<std::string, std::filesystem::path>> category_files(
    const std::filesystem::path& directory) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) throw Error(ErrorCode::kFileNotFound, directory.string());
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (!entry.is_regular_file() || entry.path().extension() != kCorpusExtension) continue;
    auto label = normalize_label(entry.path().stem().string());
    if (!label.empty()) files.emplace_back(std::move(label), entry.path());
  }
  std::sort(files.begin(), files.end());
  for (std::size_t i = 1; i < files.size(); ++i) {
    if (files[i].first == files[i - 1].first) {
      throw Error(ErrorCode::kFormatError, "duplicate category label '" + files[i].first + "'");
    }
  }
  if (files.empty()) throw Error(ErrorCode::kEmptyCorpus, directory.string());
  return files;
}

}  // namespace detail

// In-memory corpus: the manifest plus every loaded sketch by source id.
struct Corpus {
  CorpusManifest manifest;
  std::map<std::string, std::vector<Sketch>> by_category;
  std::map<std::string, const Sketch*, std::less<>> by_source_id;

  Corpus() = default;
  Corpus(const Corpus&) = delete;
  Corpus& operator=(const Corpus&) = delete;
  Corpus(Corpus&&) = default;
  Corpus& operator=(Corpus&&) = default;

  const Sketch* find(std::string_view source_id) const {
    const auto it = by_source_id.find(source_id);
    return it == by_source_id.end() ? nullptr : it->second;
  }
};

// Loads every category file under `directory`. Files are parsed in parallel;
// the result is ordered by label regardless of completion order.
inline Corpus load_corpus(const std::filesystem::path& directory,
                          std::optional<std::size_t> limit_per_category = std::nullopt) {
  const auto files = detail::category_files(directory);
  std::vector<std::future<CategoryLoad>> jobs;
  jobs.reserve(files.size());
  for (const auto& [label, path] : files) {
    jobs.push_back(std::async(std::launch::async, [&label, &path, limit_per_category] {
      return load_category_detailed(path, label, limit_per_category);
    }));
  }
  Corpus corpus;
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto load = jobs[i].get();
    const auto& [label, path] = files[i];
    if (load.sketches.empty()) throw Error(ErrorCode::kFormatError, path.string() + ": no valid sketches");
    corpus.manifest.categories.push_back({label, path, load.sketches.size()});
    corpus.manifest.total_sketches += load.sketches.size();
    corpus.by_category.emplace(label, std::move(load.sketches));
  }
  for (const auto& [label, sketches] : corpus.by_category) {
    for (const auto& s : sketches) corpus.by_source_id.emplace(s.source_id, &s);
  }
  return corpus;
}

inline CorpusManifest scan_corpus(const std::filesystem::path& directory) {
  return load_corpus(directory).manifest;
}

}  // namespace csp
