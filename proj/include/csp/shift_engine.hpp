#pragma once

// Conceptual-shift query path:
//   1. locate the query's representative cluster inside its own category,
//   2. take the top-N nearest centroids of *other* categories from that
//      cluster's distance-matrix row and min-max normalize their distances
//      into visual similarities,
//   3. pair each with the label-embedding similarity, flag pairs whose two
//      similarities agree within a threshold, and average them,
//   4. split the candidates into similarity tertiles (most similar third =
//      low novelty, least similar third = high novelty),
//   5. answer with a concrete sketch from the best candidate of the
//      requested tertile.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "csp/cluster_index.hpp"
#include "csp/embeddings.hpp"
#include "csp/error.hpp"
#include "csp/features.hpp"
#include "csp/ingestion.hpp"
#include "csp/sketch.hpp"

namespace csp {

inline constexpr std::size_t kDefaultTopN = 20;
inline constexpr double kDefaultAgreementThreshold = 0.05;

enum class Novelty { kLow, kIntermediate, kHigh };

constexpr std::string_view to_string(Novelty n) noexcept {
  switch (n) {
    case Novelty::kLow: return "low";
    case Novelty::kIntermediate: return "intermediate";
    case Novelty::kHigh: return "high";
  }
  return "unknown";
}

inline std::optional<Novelty> parse_novelty(std::string_view s) {
  if (s == "low") return Novelty::kLow;
  if (s == "intermediate") return Novelty::kIntermediate;
  if (s == "high") return Novelty::kHigh;
  return std::nullopt;
}

struct VisualCandidate {
  ClusterId target;
  double raw_distance = 0.0;
  double visual_sim = 0.0;

  friend bool operator==(const VisualCandidate&, const VisualCandidate&) = default;
};

struct ShiftCandidate {
  ClusterId target;
  double raw_distance = 0.0;
  double visual_sim = 0.0;
  double conceptual_sim = 0.0;
  double conceptual_raw = 0.0;  // cosine before clamping, for diagnostics
  double composite = 0.0;
  bool passed_filter = false;
  Novelty novelty = Novelty::kLow;

  double gap() const { return std::abs(visual_sim - conceptual_sim); }

  friend bool operator==(const ShiftCandidate&, const ShiftCandidate&) = default;
};

struct ShiftResponse {
  ShiftCandidate candidate;
  Sketch sketch;
  std::string label;
  bool fallback_used = false;

  friend bool operator==(const ShiftResponse&, const ShiftResponse&) = default;
};

// Min-max normalization to similarities: nearest -> 1, farthest -> 0. A
// zero-width range maps every entry to 1.
inline std::vector<double> minmax_similarity(std::span<const double> distances) {
  if (distances.empty()) return {};
  const auto [lo, hi] = std::minmax_element(distances.begin(), distances.end());
  const double min_d = *lo, range = *hi - *lo;
  std::vector<double> sims;
  sims.reserve(distances.size());
  for (double d : distances) sims.push_back(range > 0.0 ? 1.0 - (d - min_d) / range : 1.0);
  return sims;
}

// Top-N cross-category clusters nearest to the matrix row `from`, by
// (distance, category, slot); returned sorted by visual similarity
// descending with the same tie order.
inline std::vector<VisualCandidate> rank_visual_from(const ClusterIndex& index, const ClusterId& from,
                                                     std::size_t top_n = kDefaultTopN) {
  const auto& m = index.matrix;
  const auto row = m.index_of(from);
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (!m.masked(row, j)) cols.push_back(j);
  }
  if (top_n == 0 || cols.size() < top_n) {
    throw Error(ErrorCode::kInsufficientCandidates, std::to_string(cols.size()) +
                                                        " cross-category clusters, need " + std::to_string(top_n));
  }
  const auto dist = m.row(row);
  // Labels are sorted by (category, slot), so column order is the tie order.
  std::stable_sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  cols.resize(top_n);

  std::vector<double> raw;
  raw.reserve(top_n);
  for (auto j : cols) raw.push_back(dist[j]);
  const auto sims = minmax_similarity(raw);

  std::vector<VisualCandidate> out;
  out.reserve(top_n);
  for (std::size_t i = 0; i < top_n; ++i) out.push_back({m.labels()[cols[i]], raw[i], sims[i]});
  std::stable_sort(out.begin(), out.end(), [](const VisualCandidate& a, const VisualCandidate& b) {
    if (a.visual_sim != b.visual_sim) return a.visual_sim > b.visual_sim;
    return a.target < b.target;
  });
  return out;
}

inline std::vector<VisualCandidate> rank_visual(std::span<const double> query, std::string_view source_label,
                                                const ClusterIndex& index, std::size_t top_n = kDefaultTopN) {
  return rank_visual_from(index, representative_cluster(query, source_label, index.model), top_n);
}

inline ShiftCandidate fuse_one(const VisualCandidate& v, double conceptual, double conceptual_raw,
                               double threshold = kDefaultAgreementThreshold) {
  ShiftCandidate c;
  c.target = v.target;
  c.raw_distance = v.raw_distance;
  c.visual_sim = v.visual_sim;
  c.conceptual_sim = conceptual;
  c.conceptual_raw = conceptual_raw;
  c.passed_filter = std::abs(v.visual_sim - conceptual) < threshold;
  c.composite = (v.visual_sim + conceptual) / 2.0;
  return c;
}

// Every candidate keeps its composite; the agreement filter is recorded in
// passed_filter and applied as a preference at selection time.
inline std::vector<ShiftCandidate> fuse(std::span<const VisualCandidate> candidates, const EmbeddingStore& store,
                                        std::string_view source_label,
                                        double threshold = kDefaultAgreementThreshold) {
  std::vector<ShiftCandidate> out;
  out.reserve(candidates.size());
  for (const auto& v : candidates) {
    const auto sim = conceptual_similarity_detail(source_label, v.target.category, store);
    out.push_back(fuse_one(v, sim.value, sim.raw, threshold));
  }
  return out;
}

// Sorts by composite descending (ties by target) and labels tertiles. Extra
// candidates when n is not a multiple of 3 go to the more similar buckets,
// e.g. 7/7/6 for n = 20.
inline std::vector<ShiftCandidate> classify_novelty(std::vector<ShiftCandidate> candidates) {
  const std::size_t n = candidates.size();
  if (n < 3) throw Error(ErrorCode::kInsufficientCandidates, std::to_string(n) + " candidates, need 3");
  std::stable_sort(candidates.begin(), candidates.end(), [](const ShiftCandidate& a, const ShiftCandidate& b) {
    if (a.composite != b.composite) return a.composite > b.composite;
    return a.target < b.target;
  });
  const std::size_t base = n / 3, rem = n % 3;
  const std::size_t low_end = base + (rem > 0 ? 1 : 0);
  const std::size_t mid_end = low_end + base + (rem > 1 ? 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    candidates[i].novelty = i < low_end ? Novelty::kLow : i < mid_end ? Novelty::kIntermediate : Novelty::kHigh;
  }
  return candidates;
}

struct BucketChoice {
  ShiftCandidate candidate;
  bool fallback_used = false;
};

// Within the bucket: the filter-passing candidate with the smallest
// visual/conceptual gap, else the smallest-gap candidate overall (fallback).
// Ties keep the classification order.
inline BucketChoice choose_in_bucket(std::span<const ShiftCandidate> classified, Novelty requested) {
  const ShiftCandidate* best_pass = nullptr;
  const ShiftCandidate* best_any = nullptr;
  for (const auto& c : classified) {
    if (c.novelty != requested) continue;
    if (!best_any || c.gap() < best_any->gap()) best_any = &c;
    if (c.passed_filter && (!best_pass || c.gap() < best_pass->gap())) best_pass = &c;
  }
  if (!best_any) throw Error(ErrorCode::kEmptyBucket, std::string(to_string(requested)));
  return best_pass ? BucketChoice{*best_pass, false} : BucketChoice{*best_any, true};
}

// Member of the cluster whose vector is nearest its centroid (ties by
// source id).
inline const std::string& representative_member(const ClusterIndex& index, const ClusterId& id) {
  const auto& cat = index.model.at(id.category);
  if (id.slot >= cat.centroids.size()) throw Error(ErrorCode::kUnknownCategory, id.category);
  const auto& centroid = cat.centroids[id.slot];
  const std::string* best = nullptr;
  double best_d = 0.0;
  for (std::size_t i = 0; i < cat.member_ids.size(); ++i) {
    if (cat.assignment[i] != id.slot) continue;
    const double d = squared_l2(cat.member_vectors[i], centroid);
    if (!best || d < best_d || (d == best_d && cat.member_ids[i] < *best)) {
      best = &cat.member_ids[i];
      best_d = d;
    }
  }
  if (!best) throw Error(ErrorCode::kEmptyBucket, "cluster " + id.category + "#" + std::to_string(id.slot) + " has no members");
  return *best;
}

inline ShiftResponse select_response(std::span<const ShiftCandidate> classified, Novelty requested,
                                     const ClusterIndex& index, const Corpus& corpus) {
  const auto choice = choose_in_bucket(classified, requested);
  const auto& member = representative_member(index, choice.candidate.target);
  const Sketch* sketch = corpus.find(member);
  if (!sketch) throw Error(ErrorCode::kUnknownSketchRef, member);
  return {choice.candidate, *sketch, choice.candidate.target.category, choice.fallback_used};
}

// Artifacts a query runs against. `imported` is required when the index was
// built from imported vectors; queries are then looked up by source id.
struct ShiftContext {
  const ClusterIndex& index;
  const EmbeddingStore& store;
  const Corpus& corpus;
  const VectorTable* imported = nullptr;
  std::size_t top_n = kDefaultTopN;
  double threshold = kDefaultAgreementThreshold;
};

inline std::vector<double> query_vector(const Sketch& sketch, const ShiftContext& ctx) {
  if (ctx.index.extractor.kind == ExtractorKind::kBuiltin) {
    if (sketch.strokes.empty()) throw Error(ErrorCode::kEmptySketch, "sketch has no strokes");
    return extract(normalize(sketch)).values;
  }
  if (!ctx.imported) {
    throw Error(ErrorCode::kExtractorMismatch, "index uses imported vectors but none were loaded");
  }
  const auto it = ctx.imported->find(sketch.source_id);
  if (it == ctx.imported->end()) throw Error(ErrorCode::kUnknownSketchRef, sketch.source_id);
  return it->second.values;
}

struct ShiftTrace {
  ClusterId representative;
  std::vector<ShiftCandidate> candidates;  // classified
};

inline ShiftResponse shift_from_vector(std::span<const double> query, std::string_view label, Novelty requested,
                                       const ShiftContext& ctx, ShiftTrace* trace = nullptr) {
  const auto rep = representative_cluster(query, label, ctx.index.model);
  const auto visual = rank_visual_from(ctx.index, rep, ctx.top_n);
  auto classified = classify_novelty(fuse(visual, ctx.store, label, ctx.threshold));
  auto response = select_response(classified, requested, ctx.index, ctx.corpus);
  if (trace) *trace = {rep, std::move(classified)};
  return response;
}

inline ShiftResponse conceptual_shift(const Sketch& sketch, Novelty requested, const ShiftContext& ctx,
                                      ShiftTrace* trace = nullptr) {
  const auto label = normalize_label(sketch.label);
  if (!ctx.index.model.find(label)) throw Error(ErrorCode::kUnknownCategory, label);
  const auto query = query_vector(sketch, ctx);
  return shift_from_vector(query, label, requested, ctx, trace);
}

}  // namespace csp
