#pragma once

#include <cstddef>
#include <filesystem>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "earco/embedding.hpp"

namespace earco {

struct QueryResult {
  std::string incident_id;
  double distance = 0.0;  // L2

  bool operator==(const QueryResult&) const = default;
};

/// Exact flat store searched by L2 distance. Concurrent searches are safe;
/// add() takes an exclusive lock.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim);

  VectorIndex(const VectorIndex& other);
  VectorIndex& operator=(const VectorIndex& other);
  VectorIndex(VectorIndex&& other) noexcept;
  VectorIndex& operator=(VectorIndex&& other) noexcept;

  std::size_t dim() const { return dim_; }
  std::size_t size() const;
  bool contains(std::string_view id) const;

  /// Ids in insertion order.
  std::vector<std::string> ids() const;
  EmbeddingVector vector(std::string_view id) const;

  /// Throws kDimensionMismatch or kDuplicate.
  void add(const std::string& id, const EmbeddingVector& vector);

  /// min(k, size) nearest entries, ascending distance, ties broken by the
  /// lexicographically smaller id.
  std::vector<QueryResult> search_top_k(const EmbeddingVector& query, std::size_t k) const;

  /// Bitwise equality of dim, ids, insertion order and vectors.
  bool operator==(const VectorIndex& other) const;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> data_;  // row-major, one row per id
  std::unordered_map<std::string, std::size_t> rows_;
  mutable std::shared_mutex mutex_;
};

/// File layout (little-endian): "EARCIDX1", u32 dim, u64 count, then per
/// entry u32 id length, id bytes, dim f32 values.
void save_index(const VectorIndex& index, const std::filesystem::path& path);
/// Throws kVersionMismatch for another EARCIDX version, kCorruptFile otherwise.
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace earco
