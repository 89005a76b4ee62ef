#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spvp {

// Error taxonomy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector lengths or model shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Not enough samples/features/records for the requested operation.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Malformed, corrupted or out-of-range input data (files, values, ids).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr std::size_t kDefaultDescriptorDim = 40;

struct LocalFeature {
  float x = 0.0f;  // normalized to [0,1]
  float y = 0.0f;
  std::vector<float> descriptor;
};

struct LocalFeatureMap {
  std::string image_id;
  std::vector<LocalFeature> features;
  std::uint16_t source_width = 0;
  std::uint16_t source_height = 0;

  // Descriptor dimension of the first feature, 0 when empty.
  std::size_t dim() const {
    return features.empty() ? 0 : features.front().descriptor.size();
  }
};

enum class Method : std::uint8_t { kSpvp = 0, kVlad = 1, kBovw = 2, kMac = 3, kSpoc = 4, kGem = 5 };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct Descriptor {
  std::string image_id;
  Method method = Method::kSpvp;
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
};

struct GeoRecord {
  std::string image_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::optional<double> yaw;
};

/// Dense row-major float matrix used for sample sets (k-means, PCA).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  // Appends a row; the first appended row fixes the column count.
  void push_row(std::span<const float> values);

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Returns v / ||v|| when ||v|| > kNormEpsilon; otherwise v unchanged.
std::vector<float> l2_normalize(std::span<const float> v);
void l2_normalize_inplace(std::span<float> v);
void l2_normalize_inplace(std::span<double> v);

double l2_norm(std::span<const float> v);
double dot(std::span<const float> a, std::span<const float> b);

/// Throws DimensionError on length mismatch.
double euclidean_distance(std::span<const float> a, std::span<const float> b);
double squared_distance(std::span<const float> a, std::span<const float> b);

bool all_finite(std::span<const float> v);

// Validates a LocalFeature against the dataset dimension. Throws DataError.
void validate_feature(const LocalFeature& f, std::size_t dim);
void validate_geo(const GeoRecord& g);

// ---------------------------------------------------------------------------
// Worker pool configuration shared by all parallel stages.

void set_worker_count(std::size_t workers);
std::size_t worker_count();

/// Runs fn(chunk_index, begin, end) for fixed-size chunks of [0, n).
/// Chunk boundaries depend only on n and chunk_size, never on the worker
/// count, so per-chunk partial results can be merged in chunk order for
/// reproducible reductions.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
  return (n + chunk_size - 1) / chunk_size;
}

}  // namespace spvp
