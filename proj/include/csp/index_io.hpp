#pragma once

// Binary index file. All integers and floats little-endian:
//
//   magic        8 bytes  "CSPINDEX"
//   version      u32      kIndexFormatVersion
//   extractor    u32 kind, u64 dimension, str version
//   seed         u64
//   k            u64
//   categories   u64 count, then per category:
//                  str label, u64 category seed, u64 member count,
//                  per member: str source_id, u64 slot, f64[dimension]
//                  f64[k * dimension] centroids, f64[k] wcss,
//                  u64 history length, f64[history length]
//   matrix       u64 n, f64[n * n] row-major (labels implied by categories)
//   crc32        u32 over every preceding byte
//
// str = u64 byte length + UTF-8 bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/crc.hpp>

#include "csp/cluster_index.hpp"
#include "csp/error.hpp"

namespace csp {

inline constexpr std::string_view kIndexMagic = "CSPINDEX";
inline constexpr std::uint32_t kIndexFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }
  std::string& bytes() { return bytes_; }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string str() {
    const auto n = count(1);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> f64s(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  // Reads a u64 element count and checks that `elem_size` bytes per element
  // are still available.
  std::size_t count(std::size_t elem_size) {
    const auto n = u64();
    if (elem_size != 0 && n > (data_.size() - pos_) / elem_size) corrupt("length field exceeds file size");
    return static_cast<std::size_t>(n);
  }
  bool done() const { return pos_ == data_.size(); }

  [[noreturn]] static void corrupt(const std::string& why) { throw Error(ErrorCode::kCorruptIndex, why); }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) corrupt("truncated file");
  }
  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(std::string_view bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

}  // namespace detail

inline std::string serialize_index(const ClusterIndex& index) {
  detail::ByteWriter w;
  w.raw(kIndexMagic);
  w.u32(kIndexFormatVersion);
  w.u32(static_cast<std::uint32_t>(index.extractor.kind));
  w.u64(index.extractor.dimension);
  w.str(index.extractor.version);
  w.u64(index.seed);
  w.u64(index.model.k);
  w.u64(index.model.categories.size());
  for (const auto& c : index.model.categories) {
    w.str(c.label);
    w.u64(c.seed);
    w.u64(c.member_ids.size());
    for (std::size_t i = 0; i < c.member_ids.size(); ++i) {
      w.str(c.member_ids[i]);
      w.u64(c.assignment[i]);
      w.f64s(c.member_vectors[i]);
    }
    for (const auto& centroid : c.centroids) w.f64s(centroid);
    w.f64s(c.wcss);
    w.u64(c.wcss_history.size());
    w.f64s(c.wcss_history);
  }
  w.u64(index.matrix.size());
  w.f64s(index.matrix.values());
  const auto crc = detail::crc32(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

inline ClusterIndex deserialize_index(std::string_view bytes) {
  using detail::ByteReader;
  if (bytes.size() < kIndexMagic.size() + 8) ByteReader::corrupt("file too short");
  const auto body = bytes.substr(0, bytes.size() - 4);
  ByteReader tail(bytes.substr(bytes.size() - 4));
  if (tail.u32() != detail::crc32(body)) ByteReader::corrupt("checksum mismatch");

  ByteReader r(body);
  if (r.raw(kIndexMagic.size()) != kIndexMagic) ByteReader::corrupt("bad magic");
  if (const auto v = r.u32(); v != kIndexFormatVersion) {
    ByteReader::corrupt("unsupported format version " + std::to_string(v));
  }
  ClusterIndex index;
  const auto kind = r.u32();
  if (kind > 1) ByteReader::corrupt("unknown extractor kind");
  index.extractor.kind = static_cast<ExtractorKind>(kind);
  index.extractor.dimension = r.u64();
  index.extractor.version = r.str();
  index.seed = r.u64();
  index.model.k = r.u64();
  index.model.dimension = index.extractor.dimension;
  const auto dim = index.model.dimension;
  const auto k = index.model.k;
  if (dim == 0 || k == 0) ByteReader::corrupt("zero dimension or k");

  const auto n_categories = r.count(8);
  for (std::size_t ci = 0; ci < n_categories; ++ci) {
    CategoryClusters c;
    c.label = r.str();
    c.seed = r.u64();
    const auto members = r.count(16 + 8 * dim);
    for (std::size_t i = 0; i < members; ++i) {
      c.member_ids.push_back(r.str());
      const auto slot = r.u64();
      if (slot >= k) ByteReader::corrupt("member slot out of range");
      c.assignment.push_back(static_cast<std::size_t>(slot));
      c.member_vectors.push_back(r.f64s(dim));
    }
    for (std::size_t s = 0; s < k; ++s) c.centroids.push_back(r.f64s(dim));
    c.wcss = r.f64s(k);
    const auto history = r.count(8);
    c.wcss_history = r.f64s(history);
    if (!index.model.categories.empty() && !(index.model.categories.back().label < c.label)) {
      ByteReader::corrupt("categories out of order");
    }
    index.model.categories.push_back(std::move(c));
  }
  const auto n = r.count(0);
  if (n != n_categories * k) ByteReader::corrupt("matrix dimension does not match categories x k");
  auto values = r.f64s(n * n);
  if (!r.done()) ByteReader::corrupt("trailing bytes");

  std::vector<ClusterId> labels;
  for (const auto& c : index.model.categories) {
    for (std::size_t s = 0; s < k; ++s) labels.push_back({c.label, s});
  }
  index.matrix = DistanceMatrix(std::move(labels), std::move(values));
  return index;
}

inline void save_index(const ClusterIndex& index, const std::filesystem::path& path) {
  const auto bytes = serialize_index(index);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kFileNotFound, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kFileNotFound, "write failed for " + path.string());
}

inline ClusterIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_index(ss.str());
}

// "<format version>-<crc32 of the serialized index, hex>".
inline std::string index_version(const ClusterIndex& index) {
  const auto bytes = serialize_index(index);
  detail::ByteReader tail(std::string_view(bytes).substr(bytes.size() - 4));
  std::ostringstream ss;
  ss << kIndexFormatVersion << '-' << std::hex << std::setw(8) << std::setfill('0') << tail.u32();
  return ss.str();
}

}  // namespace csp
