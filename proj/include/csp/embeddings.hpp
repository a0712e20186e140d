#pragma once

// Word vectors for category labels, read from the word2vec text format
// ("N D" header, then "token v1 ... vD" per line). Only tokens needed to
// resolve the requested vocabulary are kept.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "csp/error.hpp"
#include "csp/sketch.hpp"

namespace csp {

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dimension) : dimension_(dimension) {}

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return table_.size(); }
  bool contains(std::string_view label) const { return table_.find(label) != table_.end(); }

  const std::vector<double>& at(std::string_view label) const {
    const auto it = table_.find(label);
    if (it == table_.end()) throw Error(ErrorCode::kMissingToken, std::string(label));
    return it->second;
  }

  void insert(std::string label, std::vector<double> vec) {
    if (vec.size() != dimension_) {
      throw Error(ErrorCode::kDimensionMismatch, label + " has " + std::to_string(vec.size()) + " values");
    }
    double n2 = 0.0;
    for (double x : vec) {
      if (!std::isfinite(x)) throw Error(ErrorCode::kFormatError, label + " has a non-finite value");
      n2 += x * x;
    }
    if (!(n2 > 0.0)) throw Error(ErrorCode::kFormatError, label + " has a zero vector");
    table_[std::move(label)] = std::move(vec);
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : table_) out.push_back(k);
    return out;
  }

 private:
  std::size_t dimension_ = 0;
  std::map<std::string, std::vector<double>, std::less<>> table_;
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace detail {

inline std::vector<std::string> split_words(std::string_view label) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start <= label.size()) {
    const auto end = std::min(label.find('_', start), label.size());
    if (end > start) words.emplace_back(label.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

}  // namespace detail

// Resolves every label of `vocabulary`: the token itself first, otherwise the
// mean of its underscore-separated words. Throws MissingToken listing every
// label that cannot be resolved.
inline EmbeddingStore load_embeddings(const std::filesystem::path& path, const std::set<std::string>& vocabulary) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::kFormatError, path.string() + ": empty file");
  std::istringstream hs(header);
  long long rows = 0, dim = 0;
  std::string extra;
  if (!(hs >> rows >> dim) || (hs >> extra) || rows < 0 || dim <= 0) {
    throw Error(ErrorCode::kFormatError, path.string() + ": bad header '" + header + "'");
  }

  std::set<std::string, std::less<>> wanted;
  for (const auto& label : vocabulary) {
    wanted.insert(label);
    for (auto& w : detail::split_words(label)) wanted.insert(std::move(w));
  }

  std::map<std::string, std::vector<double>, std::less<>> found;
  std::string line;
  long long seen = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++seen;
    const auto sp = line.find(' ');
    if (sp == 0 || sp == std::string::npos) {
      throw Error(ErrorCode::kFormatError, path.string() + ": line " + std::to_string(seen + 1));
    }
    const std::string_view token(line.data(), sp);
    if (!wanted.contains(token)) continue;
    std::vector<double> vec;
    vec.reserve(static_cast<std::size_t>(dim));
    const char* p = line.c_str() + sp;
    char* end = nullptr;
    for (;;) {
      while (*p == ' ') ++p;
      if (*p == '\0') break;
      const double v = std::strtod(p, &end);
      if (end == p || (*end != ' ' && *end != '\0')) {
        throw Error(ErrorCode::kFormatError, "bad value in row for '" + std::string(token) + "'");
      }
      vec.push_back(v);
      p = end;
    }
    if (vec.size() != static_cast<std::size_t>(dim)) {
      throw Error(ErrorCode::kFormatError, "row for '" + std::string(token) + "' has " +
                                               std::to_string(vec.size()) + " values, header says " +
                                               std::to_string(dim));
    }
    found.emplace(std::string(token), std::move(vec));
  }
  if (seen != rows) {
    throw Error(ErrorCode::kFormatError, path.string() + ": header declares " + std::to_string(rows) +
                                             " rows, found " + std::to_string(seen));
  }

  EmbeddingStore store(static_cast<std::size_t>(dim));
  std::vector<std::string> missing;
  for (const auto& label : vocabulary) {
    if (const auto it = found.find(label); it != found.end()) {
      store.insert(label, it->second);
      continue;
    }
    const auto words = detail::split_words(label);
    const bool all_parts = !words.empty() && std::all_of(words.begin(), words.end(),
                                                         [&](const std::string& w) { return found.contains(w); });
    if (words.size() < 2 || !all_parts) {
      missing.push_back(label);
      continue;
    }
    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
    for (const auto& w : words) {
      const auto& v = found.at(w);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
    }
    for (auto& x : mean) x /= static_cast<double>(words.size());
    store.insert(label, std::move(mean));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::kMissingToken, list);
  }
  return store;
}

struct ConceptualSimilarity {
  double value = 0.0;  // clamped to [0, 1]
  double raw = 0.0;    // cosine similarity before clamping
};

inline ConceptualSimilarity conceptual_similarity_detail(std::string_view a, std::string_view b,
                                                         const EmbeddingStore& store) {
  const double raw = cosine(store.at(a), store.at(b));
  return {std::clamp(raw, 0.0, 1.0), raw};
}

// 1 - cosine distance between the label vectors, clamped to [0, 1].
inline double conceptual_similarity(std::string_view a, std::string_view b, const EmbeddingStore& store) {
  return conceptual_similarity_detail(a, b, store).value;
}

}  // namespace csp
