#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "spvp/core.hpp"

namespace spvp {

struct Hit {
  std::string image_id;
  double distance = 0.0;
};

struct RankedResult {
  std::string query_id;
  std::vector<Hit> hits;  // ascending distance, ties by image_id
};

/// Exact Euclidean index over a contiguous descriptor store.
class DescriptorIndex {
 public:
  DescriptorIndex() = default;
  DescriptorIndex(Method method, std::size_t dim);

  // Throws DimensionError / DataError on heterogeneous dim, method or duplicate id.
  void add(const Descriptor& descriptor);

  Method method() const { return method_; }
  std::size_t dim() const { return dim_; }
  std::size_t count() const { return ids_.size(); }
  bool contains(const std::string& id) const { return rows_.count(id) > 0; }

  const std::string& id(std::size_t row) const { return ids_[row]; }
  std::span<const float> values(std::size_t row) const { return {values_.data() + row * dim_, dim_}; }
  std::span<const float> values(const std::string& id) const;

  // Approximate heap footprint in bytes.
  std::size_t memory_bytes() const;

 private:
  Method method_ = Method::kSpvp;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> rows_;
};

DescriptorIndex build_index(std::span<const Descriptor> descriptors);

RankedResult search_knn(const DescriptorIndex& index, const Descriptor& query, std::size_t top_n);

/// Answers a batch of queries with one pass over the index per entry chunk.
std::vector<RankedResult> search_batch(const DescriptorIndex& index,
                                       std::span<const Descriptor> queries, std::size_t top_n);

// PVIX files hold both indexes and plain descriptor sets (encode output).
std::vector<std::uint8_t> encode_index(const DescriptorIndex& index);
DescriptorIndex decode_index(std::vector<std::uint8_t> bytes);
void save_index(const DescriptorIndex& index, const std::filesystem::path& path);
DescriptorIndex load_index(const std::filesystem::path& path);

std::vector<Descriptor> index_descriptors(const DescriptorIndex& index);

// Tab-separated ranking file: query_id, rank (1-based), image_id, distance.
void save_results(std::span<const RankedResult> results, const std::filesystem::path& path);
std::vector<RankedResult> load_results(const std::filesystem::path& path);

}  // namespace spvp
