#pragma once

// Visual cluster index: k clusters per category, their centroids and members,
// and the matrix of L2 distances between every pair of centroids. Entries for
// centroids of the same category are kept (so the matrix stays square and
// indexable by ClusterId) but flagged as masked.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csp/error.hpp"
#include "csp/features.hpp"
#include "csp/kmeans.hpp"

namespace csp {

inline constexpr std::size_t kDefaultClustersPerCategory = 10;

struct ClusterId {
  std::string category;
  std::size_t slot = 0;

  friend auto operator<=>(const ClusterId&, const ClusterId&) = default;
  friend bool operator==(const ClusterId&, const ClusterId&) = default;
};

struct CategoryClusters {
  std::string label;
  std::vector<std::string> member_ids;
  std::vector<std::vector<double>> member_vectors;
  std::vector<std::size_t> assignment;  // member index -> slot
  std::vector<std::vector<double>> centroids;
  std::vector<double> wcss;  // per slot
  std::vector<double> wcss_history;
  std::uint64_t seed = 0;

  double total_wcss() const {
    double t = 0.0;
    for (double w : wcss) t += w;
    return t;
  }

  friend bool operator==(const CategoryClusters&, const CategoryClusters&) = default;
};

struct ClusterModel {
  std::size_t k = 0;
  std::size_t dimension = 0;
  std::vector<CategoryClusters> categories;  // sorted by label

  const CategoryClusters* find(std::string_view label) const {
    const auto it = std::lower_bound(categories.begin(), categories.end(), label,
                                     [](const CategoryClusters& c, std::string_view l) { return c.label < l; });
    return it != categories.end() && it->label == label ? &*it : nullptr;
  }

  const CategoryClusters& at(std::string_view label) const {
    const auto* c = find(label);
    if (!c) throw Error(ErrorCode::kUnknownCategory, std::string(label));
    return *c;
  }

  friend bool operator==(const ClusterModel&, const ClusterModel&) = default;
};

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::vector<ClusterId> labels, std::vector<double> values)
      : labels_(std::move(labels)), values_(std::move(values)) {
    if (values_.size() != labels_.size() * labels_.size()) {
      throw Error(ErrorCode::kCorruptIndex, "distance matrix size does not match its labels");
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<ClusterId>& labels() const noexcept { return labels_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double at(std::size_t row, std::size_t col) const { return values_[row * labels_.size() + col]; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * labels_.size(), labels_.size()}; }
  bool masked(std::size_t row, std::size_t col) const { return labels_[row].category == labels_[col].category; }

  std::size_t index_of(const ClusterId& id) const {
    const auto it = std::lower_bound(labels_.begin(), labels_.end(), id);
    if (it == labels_.end() || *it != id) {
      throw Error(ErrorCode::kUnknownCategory, id.category + "#" + std::to_string(id.slot));
    }
    return static_cast<std::size_t>(it - labels_.begin());
  }

  friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;

 private:
  std::vector<ClusterId> labels_;  // sorted by (category, slot)
  std::vector<double> values_;     // row-major
};

struct ClusterIndex {
  ExtractorSpec extractor;
  std::uint64_t seed = 0;
  ClusterModel model;
  DistanceMatrix matrix;

  friend bool operator==(const ClusterIndex&, const ClusterIndex&) = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Per-category clustering seed: depends only on the global seed and the
// label, so a category clusters identically whatever else is in the corpus.
inline std::uint64_t category_seed(std::uint64_t seed, std::string_view label) {
  return detail::splitmix64(seed ^ detail::fnv1a64(label));
}

inline CategoryClusters cluster_category(std::string label, std::span<const FeatureVector> vectors, std::size_t k,
                                         std::uint64_t seed) {
  if (vectors.size() < k) {
    throw Error(ErrorCode::kTooFewPoints, label + " (" + std::to_string(vectors.size()) + " sketches, k=" +
                                              std::to_string(k) + ")");
  }
  CategoryClusters out;
  out.label = std::move(label);
  out.seed = category_seed(seed, out.label);
  out.member_ids.reserve(vectors.size());
  out.member_vectors.reserve(vectors.size());
  for (const auto& v : vectors) {
    out.member_ids.push_back(v.sketch_ref);
    out.member_vectors.push_back(v.values);
  }
  auto result = kmeans(std::span<const std::vector<double>>(out.member_vectors), k, out.seed);
  out.wcss = wcss_per_slot(out.member_vectors, result.centroids, result.assignment);
  out.assignment = std::move(result.assignment);
  out.centroids = std::move(result.centroids);
  out.wcss_history = std::move(result.wcss_history);
  return out;
}

inline DistanceMatrix centroid_distances(const ClusterModel& model) {
  std::vector<ClusterId> labels;
  std::vector<const std::vector<double>*> centroids;
  for (const auto& c : model.categories) {
    for (std::size_t s = 0; s < c.centroids.size(); ++s) {
      labels.push_back({c.label, s});
      centroids.push_back(&c.centroids[s]);
    }
  }
  const std::size_t n = labels.size();
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = l2_distance(*centroids[i], *centroids[j]);
      values[i * n + j] = d;
      values[j * n + i] = d;
    }
  }
  return DistanceMatrix(std::move(labels), std::move(values));
}

// Clusters each category (in parallel; per-category seeds keep the result
// independent of scheduling) and computes the centroid distance matrix.
inline ClusterIndex build_index(const std::map<std::string, std::vector<FeatureVector>>& vectors_by_category,
                                std::size_t k, std::uint64_t seed, ExtractorSpec extractor = builtin_extractor_spec()) {
  if (k == 0) throw Error(ErrorCode::kTooFewPoints, "k must be at least 1");
  if (vectors_by_category.empty()) throw Error(ErrorCode::kEmptyCorpus, "no categories to index");
  for (const auto& [label, vectors] : vectors_by_category) {
    if (vectors.size() < k) {
      throw Error(ErrorCode::kTooFewPoints, label + " (" + std::to_string(vectors.size()) + " sketches, k=" +
                                                std::to_string(k) + ")");
    }
    for (const auto& v : vectors) {
      if (v.values.size() != extractor.dimension) {
        throw Error(ErrorCode::kDimensionMismatch, v.sketch_ref + " has " + std::to_string(v.values.size()) +
                                                       " values, extractor declares " +
                                                       std::to_string(extractor.dimension));
      }
    }
  }

  std::vector<std::future<CategoryClusters>> jobs;
  for (const auto& [label, vectors] : vectors_by_category) {
    jobs.push_back(std::async(std::launch::async, [&label, &vectors, k, seed] {
      return cluster_category(label, vectors, k, seed);
    }));
  }
  ClusterIndex index;
  index.extractor = std::move(extractor);
  index.seed = seed;
  index.model.k = k;
  index.model.dimension = index.extractor.dimension;
  for (auto& job : jobs) index.model.categories.push_back(job.get());
  index.matrix = centroid_distances(index.model);
  return index;
}

// The slot of `label` whose centroid is L2-nearest to `query`; ties go to the
// lowest slot.
inline ClusterId representative_cluster(std::span<const double> query, std::string_view label,
                                        const ClusterModel& model) {
  const auto& cat = model.at(label);
  if (query.size() != model.dimension) {
    throw Error(ErrorCode::kDimensionMismatch, "query has " + std::to_string(query.size()) + " values, index has " +
                                                   std::to_string(model.dimension));
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < cat.centroids.size(); ++s) {
    const double d = squared_l2(query, cat.centroids[s]);
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }
  return {cat.label, best};
}

}  // namespace csp
