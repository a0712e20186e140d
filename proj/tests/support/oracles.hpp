#pragma once

// Independent reference computations used to check the library. Nothing here
// calls into the code paths it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

namespace csp::testing {

inline double oracle_sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// WCSS of a fixed labelling, computing each group's mean from scratch.
inline double oracle_partition_wcss(const std::vector<std::vector<double>>& pts, const std::vector<std::size_t>& label,
                                    std::size_t k) {
  const std::size_t dim = pts.front().size();
  std::vector<std::vector<double>> sum(k, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) sum[label[i]][d] += pts[i][d];
    ++count[label[i]];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double mean = sum[label[i]][d] / static_cast<double>(count[label[i]]);
      total += (pts[i][d] - mean) * (pts[i][d] - mean);
    }
  }
  return total;
}

// Minimum WCSS over every assignment of the points to k labels.
inline double brute_force_optimal_wcss(const std::vector<std::vector<double>>& pts, std::size_t k) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    best = std::min(best, oracle_partition_wcss(pts, label, k));
    std::size_t i = 0;
    while (i < n && ++label[i] == k) label[i++] = 0;
    if (i == n) break;
  }
  return best;
}

struct OracleRow {
  std::string category;
  std::size_t slot;
  double distance;
};

// Full scan over all centroids: distance from `from` to every centroid of
// another category, sorted by (distance, category, slot).
inline std::vector<OracleRow> oracle_cross_category_scan(
    const std::vector<std::tuple<std::string, std::size_t, std::vector<double>>>& centroids,
    const std::string& from_category, const std::vector<double>& from) {
  std::vector<OracleRow> rows;
  for (const auto& [cat, slot, c] : centroids) {
    if (cat == from_category) continue;
    rows.push_back({cat, slot, std::sqrt(oracle_sq_dist(from, c))});
  }
  std::sort(rows.begin(), rows.end(), [](const OracleRow& a, const OracleRow& b) {
    return std::tie(a.distance, a.category, a.slot) < std::tie(b.distance, b.category, b.slot);
  });
  return rows;
}

inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / std::sqrt(na * nb));
}

}  // namespace csp::testing
