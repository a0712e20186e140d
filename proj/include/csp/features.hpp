#pragma once

// Visual feature vectors. The built-in extractor maps a normalized sketch to
// 48 values:
//   [0, 36)  6x6 ink-density grid over the canvas (sums to 1 before scaling)
//   [36, 44) stroke direction histogram, 45 degree bins centered on 0 degrees,
//            weighted by segment length
//   [44, 48) stroke count / 16, path length / 2048 (both capped at 1),
//            bounding-box aspect min/max, start-to-end distance / path length
// and L2-normalizes the result. Imported vectors (e.g. from an external neural
// model) are read from the text interchange format "D N" + N rows of
// "source_id v1 ... vD".

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "csp/error.hpp"
#include "csp/ingestion.hpp"
#include "csp/sketch.hpp"

namespace csp {

enum class ExtractorKind { kBuiltin = 0, kImported = 1 };

struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::kBuiltin;
  std::size_t dimension = 48;
  std::string version = "builtin-v1";

  friend bool operator==(const ExtractorSpec&, const ExtractorSpec&) = default;
};

inline constexpr std::size_t kGridSide = 6;
inline constexpr std::size_t kDirectionBins = 8;
inline constexpr std::size_t kBuiltinDimension = kGridSide * kGridSide + kDirectionBins + 4;

inline ExtractorSpec builtin_extractor_spec() { return {}; }

struct FeatureVector {
  std::vector<double> values;
  std::string sketch_ref;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double squared_l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_l2(a, b));
}

// Scales v to unit L2 norm. Throws FormatError for zero or non-finite input.
inline void normalize_unit(std::vector<double>& v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::kFormatError, "vector has zero or non-finite norm");
  for (auto& x : v) x /= n;
}

namespace detail {

inline std::size_t grid_cell(double coord) {
  const auto cell = static_cast<std::size_t>(coord * kGridSide / (kCanvasMax + 1));
  return std::min(cell, kGridSide - 1);
}

inline std::size_t direction_bin(double dx, double dy) {
  constexpr double kBinWidth = 2.0 * std::numbers::pi / kDirectionBins;
  double angle = std::atan2(dy, dx);
  if (angle < 0) angle += 2.0 * std::numbers::pi;
  return static_cast<std::size_t>(std::floor(angle / kBinWidth + 0.5)) % kDirectionBins;
}

}  // namespace detail

// Expects a normalized sketch (see csp::normalize).
inline FeatureVector extract(const Sketch& sketch) {
  if (sketch.strokes.empty()) throw Error(ErrorCode::kEmptySketch, "sketch has no strokes");
  std::array<double, kGridSide * kGridSide> grid{};
  std::array<double, kDirectionBins> directions{};
  double path_length = 0.0;
  double grid_mass = 0.0;

  int min_x = kCanvasMax, min_y = kCanvasMax, max_x = 0, max_y = 0;
  for (const auto& stroke : sketch.strokes) {
    for (const auto& p : stroke.points) {
      min_x = std::min(min_x, p.x);
      min_y = std::min(min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
    const auto& pts = stroke.points;
    if (pts.size() == 1) {
      grid[detail::grid_cell(pts[0].y) * kGridSide + detail::grid_cell(pts[0].x)] += 1.0;
      grid_mass += 1.0;
      continue;
    }
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const double dx = pts[i].x - pts[i - 1].x;
      const double dy = pts[i].y - pts[i - 1].y;
      const double len = std::hypot(dx, dy);
      if (len == 0.0) continue;
      path_length += len;
      directions[detail::direction_bin(dx, dy)] += len;
      // Spread the segment's length over unit-ish steps so long segments
      // deposit ink in every cell they cross.
      const auto steps = static_cast<std::size_t>(std::ceil(len));
      const double piece = len / static_cast<double>(steps);
      for (std::size_t s = 0; s < steps; ++s) {
        const double t = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
        const double x = pts[i - 1].x + t * dx;
        const double y = pts[i - 1].y + t * dy;
        grid[detail::grid_cell(y) * kGridSide + detail::grid_cell(x)] += piece;
      }
      grid_mass += len;
    }
  }
  if (!(grid_mass > 0.0)) throw Error(ErrorCode::kDegenerateSketch, "sketch has no ink");

  FeatureVector out;
  out.sketch_ref = sketch.source_id;
  out.values.reserve(kBuiltinDimension);
  for (double g : grid) out.values.push_back(g / grid_mass);
  for (double d : directions) out.values.push_back(path_length > 0.0 ? d / path_length : 0.0);

  const double w = max_x - min_x;
  const double h = max_y - min_y;
  const auto& first = sketch.strokes.front().points.front();
  const auto& last = sketch.strokes.back().points.back();
  const double span = std::hypot(double(last.x - first.x), double(last.y - first.y));
  out.values.push_back(std::min(static_cast<double>(sketch.strokes.size()) / 16.0, 1.0));
  out.values.push_back(std::min(path_length / 2048.0, 1.0));
  out.values.push_back(std::max(w, h) > 0.0 ? std::min(w, h) / std::max(w, h) : 0.0);
  out.values.push_back(path_length > 0.0 ? std::min(span / path_length, 1.0) : 0.0);
  normalize_unit(out.values);
  return out;
}

using VectorTable = std::map<std::string, FeatureVector, std::less<>>;

// Reads the vector interchange format and re-normalizes every row to unit
// length. `known_id(source_id)` rejects rows that name no corpus sketch.
template <typename KnownId>
  requires std::predicate<KnownId&, std::string_view>
VectorTable import_vectors(const std::filesystem::path& path, KnownId&& known_id) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::kFormatError, path.string() + ": empty file");
  std::istringstream hs(header);
  long long dim = 0, rows = 0;
  std::string extra;
  if (!(hs >> dim >> rows) || (hs >> extra) || dim <= 0 || rows < 0) {
    throw Error(ErrorCode::kFormatError, path.string() + ": bad header '" + header + "'");
  }
  VectorTable table;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    FeatureVector fv;
    if (!(ls >> fv.sketch_ref)) throw Error(ErrorCode::kFormatError, "line " + std::to_string(line_no));
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::kFormatError, "line " + std::to_string(line_no) + ": bad value '" + tok + "'");
      }
      fv.values.push_back(v);
    }
    if (fv.values.size() != static_cast<std::size_t>(dim)) {
      throw Error(ErrorCode::kDimensionMismatch, "line " + std::to_string(line_no) + ": expected " +
                                                     std::to_string(dim) + " values, got " +
                                                     std::to_string(fv.values.size()));
    }
    if (!known_id(fv.sketch_ref)) throw Error(ErrorCode::kUnknownSketchRef, fv.sketch_ref);
    normalize_unit(fv.values);
    if (table.contains(fv.sketch_ref)) {
      throw Error(ErrorCode::kFormatError, "duplicate row for '" + fv.sketch_ref + "'");
    }
    auto ref = fv.sketch_ref;
    table.emplace(std::move(ref), std::move(fv));
  }
  if (table.size() != static_cast<std::size_t>(rows)) {
    throw Error(ErrorCode::kFormatError, path.string() + ": header declares " + std::to_string(rows) +
                                             " rows, found " + std::to_string(table.size()));
  }
  if (table.empty()) throw Error(ErrorCode::kFormatError, path.string() + ": no rows");
  return table;
}

inline VectorTable import_vectors(const std::filesystem::path& path, const Corpus& corpus) {
  return import_vectors(path, [&corpus](std::string_view id) { return corpus.find(id) != nullptr; });
}

// Accepts source ids of the form "<label>:<n>" whose label is in the manifest.
inline VectorTable import_vectors(const std::filesystem::path& path, const CorpusManifest& manifest) {
  return import_vectors(path, [&manifest](std::string_view id) {
    const auto colon = id.rfind(':');
    return colon != std::string_view::npos && manifest.find(id.substr(0, colon)) != nullptr;
  });
}

inline void write_vectors(std::ostream& out, const std::vector<FeatureVector>& vectors) {
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().values.size();
  out << dim << ' ' << vectors.size() << '\n';
  out << std::setprecision(17);
  for (const auto& v : vectors) {
    if (v.values.size() != dim) throw Error(ErrorCode::kDimensionMismatch, v.sketch_ref);
    out << v.sketch_ref;
    for (double x : v.values) out << ' ' << x;
    out << '\n';
  }
}

}  // namespace csp
