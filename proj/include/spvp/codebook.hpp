#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "spvp/core.hpp"

namespace spvp {

struct TrainingMeta {
  std::size_t iterations = 0;
  bool converged = false;
  // inertia_trace[t] is the inertia of the assignment made in iteration t.
  std::vector<double> inertia_trace;
  double final_inertia = 0.0;
};

/// k visual words of dimension d, stored row-major.
class Codebook {
 public:
  Codebook() = default;
  // Validates shape, finiteness and pairwise distinctness.
  Codebook(std::size_t k, std::size_t d, std::vector<float> centroids, TrainingMeta meta = {});

  std::size_t k() const { return k_; }
  std::size_t d() const { return d_; }
  std::span<const float> centroid(std::size_t i) const { return {centroids_.data() + i * d_, d_}; }
  const std::vector<float>& centroids() const { return centroids_; }
  const TrainingMeta& training_meta() const { return meta_; }

 private:
  std::size_t k_ = 0;
  std::size_t d_ = 0;
  std::vector<float> centroids_;
  TrainingMeta meta_;
};

struct KMeansOptions {
  std::size_t k = 256;
  std::size_t max_iters = 100;
  std::uint64_t seed = 0;
};

/// Lloyd's k-means with k-means++ seeding. Assignment runs over fixed-size
/// chunks and per-chunk sums are merged in chunk order, so the result for a
/// seed does not depend on the worker count.
Codebook train_codebook(const Matrix& features, const KMeansOptions& options);

/// Nearest centroid by squared L2; ties go to the lowest index.
std::size_t assign(std::span<const float> feature, const Codebook& codebook);

/// Uniform reservoir sample of descriptors over a stream of feature maps.
class FeatureReservoir {
 public:
  FeatureReservoir(std::size_t target, std::uint64_t seed);

  void add(const LocalFeatureMap& map);
  std::size_t seen() const { return seen_; }
  // Throws InsufficientDataError when nothing was streamed.
  Matrix take() &&;

 private:
  std::size_t target_;
  std::uint64_t seen_ = 0;
  std::size_t maps_ = 0;
  std::mt19937_64 rng_;
  Matrix sample_;
};

Matrix sample_features(std::span<const LocalFeatureMap> maps, std::size_t target,
                       std::uint64_t seed);

void save_codebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_codebook(const Codebook& codebook);
Codebook decode_codebook(std::vector<std::uint8_t> bytes);

}  // namespace spvp
