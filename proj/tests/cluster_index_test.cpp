#include <random>

#include <gtest/gtest.h>

#include "csp/cluster_index.hpp"
#include "csp/index_io.hpp"
#include "support/fixture_corpus.hpp"
#include "support/oracles.hpp"

namespace csp {
namespace {

using VectorsByCategory = std::map<std::string, std::vector<FeatureVector>>;

VectorsByCategory random_categories(std::size_t categories, std::size_t per_category, std::size_t dim,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  VectorsByCategory out;
  for (std::size_t c = 0; c < categories; ++c) {
    const std::string label = "cat" + std::to_string(c);
    for (std::size_t i = 0; i < per_category; ++i) {
      std::vector<double> v(dim);
      for (auto& x : v) x = n(rng) + static_cast<double>(c);
      out[label].push_back({std::move(v), make_source_id(label, i)});
    }
  }
  return out;
}

ExtractorSpec spec_for(std::size_t dim) { return {ExtractorKind::kImported, dim, "test"}; }

TEST(BuildIndex, MatrixShapeAndMasking) {
  const auto data = random_categories(12, 15, 4, 1);
  const auto index = build_index(data, 10, 9, spec_for(4));
  const auto& m = index.matrix;
  ASSERT_EQ(m.size(), 120u);
  EXPECT_EQ(m.values().size(), 120u * 120u);
  std::size_t masked = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m.at(i, i), 0.0);
    for (std::size_t j = 0; j < m.size(); ++j) {
      EXPECT_EQ(m.at(i, j), m.at(j, i));
      if (m.masked(i, j)) ++masked;
      else EXPECT_TRUE(std::isfinite(m.at(i, j)) && m.at(i, j) >= 0.0);
    }
  }
  EXPECT_EQ(masked, 12u * 10u * 10u);
}

TEST(BuildIndex, FullScaleLabelCountByFormula) {
  // 345 categories x 10 clusters per category.
  constexpr std::size_t kCategories = 345, kK = 10;
  EXPECT_EQ(kCategories * kK, 3450u);
  const auto data = random_categories(5, 10, 2, 2);
  const auto index = build_index(data, 10, 1, spec_for(2));
  EXPECT_EQ(index.matrix.labels().size(), data.size() * 10);
}

TEST(BuildIndex, IdenticalCategoriesHaveZeroCrossDistance) {
  auto data = random_categories(1, 30, 3, 3);
  auto copy = data.begin()->second;
  for (auto& v : copy) v.sketch_ref = "twin:" + v.sketch_ref;
  data["twin"] = copy;
  // Same seed for both categories so the clusterings coincide.
  const auto a = kmeans(std::span<const FeatureVector>(data.at("cat0")), 4, 77);
  const auto b = kmeans(std::span<const FeatureVector>(data.at("twin")), 4, 77);
  ClusterModel model{4, 3, {}};
  for (const auto& [label, r] : {std::pair<std::string, const KMeansResult*>{"cat0", &a}, {"twin", &b}}) {
    CategoryClusters c;
    c.label = label;
    c.centroids = r->centroids;
    model.categories.push_back(c);
  }
  const auto m = centroid_distances(model);
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(m.at(m.index_of({"cat0", s}), m.index_of({"twin", s})), 0.0);
  }
}

TEST(BuildIndex, EveryMemberAssignedWithinItsCategory) {
  const auto data = random_categories(3, 25, 3, 4);
  const auto index = build_index(data, 5, 2, spec_for(3));
  for (const auto& c : index.model.categories) {
    EXPECT_EQ(c.member_ids.size(), 25u);
    EXPECT_EQ(c.assignment.size(), 25u);
    for (auto s : c.assignment) EXPECT_LT(s, 5u);
    for (const auto& id : c.member_ids) EXPECT_EQ(id.substr(0, c.label.size()), c.label);
  }
}

TEST(BuildIndex, TooFewPointsNamesCategory) {
  auto data = random_categories(2, 12, 2, 5);
  data["sparse"] = {{{0.0, 1.0}, "sparse:0"}, {{1.0, 0.0}, "sparse:1"}};
  try {
    (void)build_index(data, 10, 1, spec_for(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewPoints);
    EXPECT_NE(std::string(e.what()).find("sparse"), std::string::npos);
  }
}

TEST(BuildIndex, DeterministicBytes) {
  const auto data = random_categories(6, 40, 8, 6);
  const auto a = serialize_index(build_index(data, 10, 3, spec_for(8)));
  const auto b = serialize_index(build_index(data, 10, 3, spec_for(8)));
  EXPECT_EQ(a, b);
  const auto c = serialize_index(build_index(data, 10, 4, spec_for(8)));
  EXPECT_NE(a, c);
}

TEST(BuildIndex, CategoryClusteringIndependentOfOtherCategories) {
  auto data = random_categories(4, 30, 3, 7);
  const auto full = build_index(data, 5, 11, spec_for(3));
  data.erase("cat3");
  const auto partial = build_index(data, 5, 11, spec_for(3));
  EXPECT_EQ(*full.model.find("cat1"), *partial.model.find("cat1"));
}

TEST(RepresentativeCluster, ExactCentroidAndTies) {
  ClusterModel model;
  model.k = 5;
  model.dimension = 1;
  CategoryClusters c;
  c.label = "cat";
  c.centroids = {{0.0}, {1.0}, {9.0}, {5.0}, {3.0}};
  model.categories.push_back(c);
  EXPECT_EQ(representative_cluster(std::vector<double>{5.0}, "cat", model), (ClusterId{"cat", 3}));
  // 2.0 is equidistant from slots 1 (1.0) and 4 (3.0).
  EXPECT_EQ(representative_cluster(std::vector<double>{2.0}, "cat", model), (ClusterId{"cat", 1}));
  try {
    (void)representative_cluster(std::vector<double>{2.0}, "dog", model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownCategory);
  }
}

TEST(IndexIo, RoundTripIsBitExact) {
  const auto data = random_categories(4, 20, 5, 8);
  const auto index = build_index(data, 3, 5, spec_for(5));
  const auto bytes = serialize_index(index);
  const auto back = deserialize_index(bytes);
  EXPECT_EQ(back, index);
  EXPECT_EQ(serialize_index(back), bytes);

  testing::TempDir dir("io");
  save_index(index, dir.path() / "x.idx");
  EXPECT_EQ(load_index(dir.path() / "x.idx"), index);
}

TEST(IndexIo, DetectsCorruption) {
  const auto data = random_categories(2, 10, 2, 9);
  auto bytes = serialize_index(build_index(data, 2, 1, spec_for(2)));
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  EXPECT_THROW((void)deserialize_index(flipped), Error);
  EXPECT_THROW((void)deserialize_index(bytes.substr(0, bytes.size() - 9)), Error);
  EXPECT_THROW((void)deserialize_index("garbage"), Error);
  try {
    (void)deserialize_index(flipped);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptIndex);
  }
}

TEST(IndexIo, VersionStringTracksContent) {
  const auto data = random_categories(2, 10, 2, 10);
  const auto a = build_index(data, 2, 1, spec_for(2));
  const auto b = build_index(data, 2, 2, spec_for(2));
  EXPECT_EQ(index_version(a), index_version(a));
  EXPECT_NE(index_version(a), index_version(b));
  EXPECT_EQ(index_version(a).substr(0, 2), "1-");
}

TEST(FixtureIndex, PlantedClustersRecovered) {
  // Every recovered cluster of the planted fixture is pure: all members come
  // from one planted sub-cluster.
  const auto fx = testing::make_fixture();
  VectorsByCategory data;
  for (auto v : fx.vectors) {
    normalize_unit(v.values);
    data[v.sketch_ref.substr(0, v.sketch_ref.find(':'))].push_back(v);
  }
  const auto index = build_index(data, 10, 1, spec_for(testing::fixture_dimension()));
  for (const auto& c : index.model.categories) {
    std::map<std::size_t, std::set<std::size_t>> planted_by_slot;
    for (std::size_t i = 0; i < c.member_ids.size(); ++i) {
      planted_by_slot[c.assignment[i]].insert(fx.planted_slot.at(c.member_ids[i]));
    }
    ASSERT_EQ(planted_by_slot.size(), 10u) << c.label;
    for (const auto& [slot, planted] : planted_by_slot) EXPECT_EQ(planted.size(), 1u) << c.label << "#" << slot;
  }
}

}  // namespace
}  // namespace csp
