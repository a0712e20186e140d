#pragma once

// Lloyd's k-means with greedy k-means++ seeding, a Hartigan transfer pass
// and best-of-N restarts. Fully deterministic for a given seed: the only
// randomness is a std::mt19937_64 whose output is mapped to [0,1) by bit
// manipulation rather than a library distribution, so results do not depend
// on the standard library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "csp/error.hpp"
#include "csp/features.hpp"

namespace csp {

inline constexpr std::size_t kMaxLloydIterations = 300;
inline constexpr std::size_t kDefaultRestarts = 10;

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;  // point index -> slot
  double wcss = 0.0;
  // WCSS after every Lloyd update (nonincreasing).
  std::vector<double> wcss_history;
  std::size_t iterations = 0;
};

namespace detail {

inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t nearest_slot(std::span<const double> p, const std::vector<std::vector<double>>& centroids,
                                double* best_d2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_l2(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_d2) *best_d2 = best_d;
  return best;
}

// Greedy k-means++: each new centroid is the best of a few D^2-weighted
// draws, judged by the resulting potential.
inline std::vector<std::vector<double>> seed_centroids(std::span<const std::vector<double>> points, std::size_t k,
                                                       std::mt19937_64& rng) {
  const std::size_t n = points.size();
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  auto pick = [&](double u) { return std::min(static_cast<std::size_t>(u * static_cast<double>(n)), n - 1); };
  centroids.push_back(points[pick(unit_uniform(rng))]);

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_l2(points[i], centroids[0]);
  auto draw = [&](double total) {
    const double target = unit_uniform(rng) * total;
    double acc = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] == 0.0) continue;
      acc += d2[i];
      chosen = i;
      if (acc > target) break;
    }
    return chosen;
  };
  std::vector<double> trial_d2(n), best_d2(n);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    if (total <= 0.0) {
      centroids.push_back(points[pick(unit_uniform(rng))]);
      continue;
    }
    std::size_t best = n;
    double best_potential = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t cand = draw(total);
      double potential = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        trial_d2[i] = std::min(d2[i], squared_l2(points[i], points[cand]));
        potential += trial_d2[i];
      }
      if (potential < best_potential) {
        best_potential = potential;
        best = cand;
        best_d2.swap(trial_d2);
      }
    }
    centroids.push_back(points[best]);
    d2.swap(best_d2);
  }
  return centroids;
}

// Gives every empty slot the point farthest from its current centroid, taken
// from a slot that keeps at least one member.
inline void repair_empty(std::span<const std::vector<double>> points, const std::vector<std::vector<double>>& centroids,
                         std::vector<std::size_t>& assignment) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignment) ++counts[a];
  for (std::size_t empty = 0; empty < k; ++empty) {
    if (counts[empty] != 0) continue;
    std::size_t far = points.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (counts[assignment[i]] < 2) continue;
      const double d = squared_l2(points[i], centroids[assignment[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    --counts[assignment[far]];
    assignment[far] = empty;
    ++counts[empty];
  }
}

inline std::vector<std::vector<double>> cluster_means(std::span<const std::vector<double>> points,
                                                      const std::vector<std::size_t>& assignment, std::size_t k) {
  const std::size_t dim = points.front().size();
  std::vector<std::vector<double>> means(k, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& m = means[assignment[i]];
    for (std::size_t d = 0; d < dim; ++d) m[d] += points[i][d];
    ++counts[assignment[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (auto& v : means[c]) v /= static_cast<double>(counts[c]);
  }
  return means;
}

}  // namespace detail

inline double wcss(std::span<const std::vector<double>> points, const std::vector<std::vector<double>>& centroids,
                   const std::vector<std::size_t>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += squared_l2(points[i], centroids[assignment[i]]);
  return total;
}

// Per-slot within-cluster sum of squares.
inline std::vector<double> wcss_per_slot(std::span<const std::vector<double>> points,
                                         const std::vector<std::vector<double>>& centroids,
                                         const std::vector<std::size_t>& assignment) {
  std::vector<double> out(centroids.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) out[assignment[i]] += squared_l2(points[i], centroids[assignment[i]]);
  return out;
}

namespace detail {

// Single-point transfers (Hartigan): move a point to another cluster when
// that lowers the total WCSS, then recompute the means. Leaves a partition
// that is also stable under Lloyd's assignment step.
inline void hartigan_refine(std::span<const std::vector<double>> points, KMeansResult& r) {
  const std::size_t k = r.centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : r.assignment) ++counts[a];
  for (std::size_t pass = 0; pass < kMaxLloydIterations; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t from = r.assignment[i];
      if (counts[from] < 2) continue;
      const double na = static_cast<double>(counts[from]);
      const double removal = na / (na - 1.0) * squared_l2(points[i], r.centroids[from]);
      std::size_t to = from;
      double best_add = removal;
      for (std::size_t c = 0; c < k; ++c) {
        if (c == from) continue;
        const double nb = static_cast<double>(counts[c]);
        const double add = nb / (nb + 1.0) * squared_l2(points[i], r.centroids[c]);
        if (add < best_add) {
          best_add = add;
          to = c;
        }
      }
      if (to == from || removal - best_add <= 1e-12 * std::max(1.0, removal)) continue;
      r.assignment[i] = to;
      --counts[from];
      ++counts[to];
      r.centroids = cluster_means(points, r.assignment, k);
      moved = true;
    }
    if (!moved) break;
    r.wcss_history.push_back(wcss(points, r.centroids, r.assignment));
  }
}

inline KMeansResult lloyd(std::span<const std::vector<double>> points, std::size_t k, std::mt19937_64& rng) {
  KMeansResult r;
  r.centroids = seed_centroids(points, k, rng);
  std::vector<std::size_t> assignment(points.size());
  bool have_assignment = false;
  for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
    for (std::size_t i = 0; i < points.size(); ++i) assignment[i] = nearest_slot(points[i], r.centroids);
    repair_empty(points, r.centroids, assignment);
    if (have_assignment && assignment == r.assignment) break;
    r.assignment = assignment;
    have_assignment = true;
    r.centroids = cluster_means(points, r.assignment, k);
    r.wcss_history.push_back(wcss(points, r.centroids, r.assignment));
    r.iterations = iter + 1;
  }
  hartigan_refine(points, r);
  r.wcss = r.wcss_history.back();
  return r;
}

}  // namespace detail

// Runs `restarts` seeded Lloyd passes from one RNG stream and keeps the one
// with the lowest WCSS (earliest on ties).
inline KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t seed,
                           std::size_t restarts = kDefaultRestarts) {
  if (k == 0) throw Error(ErrorCode::kTooFewPoints, "k must be at least 1");
  if (points.size() < k) {
    throw Error(ErrorCode::kTooFewPoints,
                std::to_string(points.size()) + " points for k=" + std::to_string(k));
  }
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw Error(ErrorCode::kDimensionMismatch, "points of differing dimension");
  }

  std::mt19937_64 rng(seed);
  KMeansResult best;
  for (std::size_t run = 0; run < std::max<std::size_t>(restarts, 1); ++run) {
    auto r = detail::lloyd(points, k, rng);
    if (run == 0 || r.wcss < best.wcss) best = std::move(r);
  }
  return best;
}

inline KMeansResult kmeans(std::span<const FeatureVector> vectors, std::size_t k, std::uint64_t seed) {
  std::vector<std::vector<double>> points;
  points.reserve(vectors.size());
  for (const auto& v : vectors) points.push_back(v.values);
  return kmeans(std::span<const std::vector<double>>(points), k, seed);
}

struct ElbowCurve {
  std::vector<std::pair<std::size_t, double>> points;  // (k, wcss)
  std::size_t elbow_k = 0;
  // False when the range holds fewer than three k values; elbow_k is then the
  // first k of the range.
  bool elbow_defined = false;
};

// Runs kmeans for each k in [k_min, k_max] with the same seed and reports the
// k maximizing the discrete second difference W(k-1) - 2 W(k) + W(k+1)
// (ties go to the smaller k).
inline ElbowCurve elbow_curve(std::span<const std::vector<double>> points, std::size_t k_min, std::size_t k_max,
                              std::uint64_t seed) {
  if (k_min < 1 || k_min > k_max || k_max > points.size()) {
    throw Error(ErrorCode::kTooFewPoints, "k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                                              "] invalid for " + std::to_string(points.size()) + " points");
  }
  ElbowCurve curve;
  for (std::size_t k = k_min; k <= k_max; ++k) curve.points.emplace_back(k, kmeans(points, k, seed).wcss);
  curve.elbow_k = k_min;
  if (curve.points.size() < 3) return curve;
  curve.elbow_defined = true;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < curve.points.size(); ++i) {
    const double second =
        curve.points[i - 1].second - 2.0 * curve.points[i].second + curve.points[i + 1].second;
    if (second > best) {
      best = second;
      curve.elbow_k = curve.points[i].first;
    }
  }
  return curve;
}

}  // namespace csp
