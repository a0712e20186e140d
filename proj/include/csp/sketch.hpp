#pragma once

// Sketch data model: strokes of integer points on a 256x256 canvas, the
// pen-delta encoding (dx, dy, pen) and canonical normalization.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csp/error.hpp"

namespace csp {

inline constexpr int kCanvasMax = 255;

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Stroke {
  std::vector<Point> points;

  friend bool operator==(const Stroke&, const Stroke&) = default;
};

// One pen event. pen == 1 draws from the previous position, pen == 0 moves
// without ink (the first event of every stroke).
struct DeltaEvent {
  int dx = 0;
  int dy = 0;
  int pen = 0;

  friend bool operator==(const DeltaEvent&, const DeltaEvent&) = default;
};

struct Sketch {
  std::string label;
  std::vector<Stroke> strokes;
  std::string source_id;

  std::size_t point_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : strokes) n += s.points.size();
    return n;
  }

  friend bool operator==(const Sketch&, const Sketch&) = default;
};

// Lowercases and joins whitespace-separated words with single underscores:
// "Aircraft  Carrier" -> "aircraft_carrier".
inline std::string normalize_label(std::string_view raw) {
  std::string out;
  bool pending_sep = false;
  for (char ch : raw) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc) || ch == '_') {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) {
      out.push_back('_');
      pending_sep = false;
    }
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

// Throws EmptySketch/FormatError when the sketch breaks the data model
// invariants (>= 1 non-empty stroke, >= 2 points, normalized non-empty label).
inline void validate(const Sketch& sketch) {
  if (sketch.strokes.empty()) throw Error(ErrorCode::kEmptySketch, "sketch has no strokes");
  for (const auto& s : sketch.strokes) {
    if (s.points.empty()) throw Error(ErrorCode::kFormatError, "stroke with no points");
  }
  if (sketch.point_count() < 2) throw Error(ErrorCode::kFormatError, "sketch needs at least 2 points");
  if (sketch.label.empty() || normalize_label(sketch.label) != sketch.label) {
    throw Error(ErrorCode::kFormatError, "label '" + sketch.label + "' is not normalized");
  }
}

// Pen position carries across strokes; the first event is relative to (0,0).
inline std::vector<DeltaEvent> to_delta_sequence(const Sketch& sketch) {
  if (sketch.strokes.empty()) throw Error(ErrorCode::kEmptySketch, "sketch has no strokes");
  std::vector<DeltaEvent> events;
  events.reserve(sketch.point_count());
  Point pen{0, 0};
  for (const auto& stroke : sketch.strokes) {
    bool first = true;
    for (const auto& p : stroke.points) {
      events.push_back({p.x - pen.x, p.y - pen.y, first ? 0 : 1});
      pen = p;
      first = false;
    }
  }
  return events;
}

// Inverse of to_delta_sequence. The returned sketch has no label.
inline Sketch from_delta_sequence(std::span<const DeltaEvent> events) {
  if (events.empty()) throw Error(ErrorCode::kEmptyInput, "no delta events");
  Sketch sketch;
  Point pen{0, 0};
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.pen != 0 && e.pen != 1) {
      throw Error(ErrorCode::kFormatError, "pen flag must be 0 or 1");
    }
    pen = {pen.x + e.dx, pen.y + e.dy};
    if (i == 0 || e.pen == 0) sketch.strokes.emplace_back();
    sketch.strokes.back().points.push_back(pen);
  }
  return sketch;
}

// Translate to the origin, scale uniformly so the longest bounding-box side is
// 255, center the short axis on the canvas midline, round to integers and
// collapse consecutive duplicates. Idempotent.
inline Sketch normalize(const Sketch& sketch) {
  if (sketch.strokes.empty()) throw Error(ErrorCode::kEmptySketch, "sketch has no strokes");
  int min_x = std::numeric_limits<int>::max(), min_y = min_x;
  int max_x = std::numeric_limits<int>::min(), max_y = max_x;
  for (const auto& s : sketch.strokes) {
    for (const auto& p : s.points) {
      min_x = std::min(min_x, p.x);
      min_y = std::min(min_y, p.y);
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
  }
  if (min_x > max_x) throw Error(ErrorCode::kEmptySketch, "sketch has no points");
  const double width = static_cast<double>(max_x) - min_x;
  const double height = static_cast<double>(max_y) - min_y;
  const double extent = std::max(width, height);
  if (extent == 0.0) throw Error(ErrorCode::kDegenerateSketch, "all points identical");

  // Multiply before dividing so exact ratios stay exact.
  auto scaled = [extent](double v) { return static_cast<int>(std::lround(v * kCanvasMax / extent)); };
  const int scaled_w = scaled(width);
  const int scaled_h = scaled(height);
  const int off_x = (kCanvasMax - scaled_w) / 2;
  const int off_y = (kCanvasMax - scaled_h) / 2;

  Sketch out;
  out.label = sketch.label;
  out.source_id = sketch.source_id;
  out.strokes.reserve(sketch.strokes.size());
  for (const auto& s : sketch.strokes) {
    Stroke ns;
    ns.points.reserve(s.points.size());
    for (const auto& p : s.points) {
      Point q{off_x + scaled(static_cast<double>(p.x) - min_x), off_y + scaled(static_cast<double>(p.y) - min_y)};
      if (ns.points.empty() || ns.points.back() != q) ns.points.push_back(q);
    }
    if (!ns.points.empty()) out.strokes.push_back(std::move(ns));
  }
  return out;
}

}  // namespace csp
