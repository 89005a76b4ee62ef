#pragma once

// Image-level descriptor construction from local features.
//
// VLAD:  per-centroid residual sums, signed square root, global L2.
// SPVP:  VLAD per cell of a multi-level grid, cells concatenated in a fixed
//        order (levels in config order, row-major within a level), then L2.
// BoVW:  TF-IDF weighted visual-word histogram.
// MAC / SPoC / GeM: max, mean and generalized-mean pooling.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spvp/codebook.hpp"
#include "spvp/core.hpp"
#include "spvp/pca.hpp"

namespace spvp {

struct VladOptions {
  // Per-centroid L2 normalization applied before the global normalization.
  bool intra_normalize = false;
};

struct PyramidConfig {
  std::vector<std::size_t> levels = {1, 2, 4};
  // PCA output size per cell; nullopt keeps the raw k*d VLAD block.
  std::optional<std::size_t> per_patch_dim;
  // L2-normalize each cell after PCA.
  bool normalize_after_pca = true;
  VladOptions vlad;

  void validate() const;
  std::size_t cell_count() const;
};

struct TfIdfStats {
  std::uint64_t image_count = 0;             // N
  std::vector<std::uint64_t> doc_frequency;  // N_i, length V

  std::size_t vocabulary_size() const { return doc_frequency.size(); }
  // log(N / N_i), defined as 0 when N_i == 0 or N_i == N.
  double idf(std::size_t word) const;
};

/// Raw residual sums, k blocks of length d, no normalization.
std::vector<double> vlad_residuals(std::span<const LocalFeature> features, const Codebook& codebook);

std::vector<float> vlad_encode(std::span<const LocalFeature> features, const Codebook& codebook,
                               const VladOptions& options = {});

/// Cell index of a normalized coordinate pair on a g x g grid (row-major).
std::size_t pyramid_cell(float x, float y, std::size_t grid);

Descriptor spvp_encode(const LocalFeatureMap& map, const Codebook& codebook,
                       const PyramidConfig& config, const PCAModel* patch_pca = nullptr);

/// Per-cell VLAD vectors in output order; empty cells are omitted. Used to
/// collect PCA training samples.
std::vector<std::vector<float>> spvp_cell_vectors(const LocalFeatureMap& map,
                                                  const Codebook& codebook,
                                                  const PyramidConfig& config);

std::size_t spvp_output_dim(const Codebook& codebook, const PyramidConfig& config);

/// Sorted set of visual words present in the feature list.
std::vector<std::uint32_t> word_presence(std::span<const LocalFeature> features,
                                         const Codebook& codebook);

class TfIdfAccumulator {
 public:
  explicit TfIdfAccumulator(std::size_t vocabulary_size);
  void add(std::span<const std::uint32_t> present_words);
  TfIdfStats finish() const;

 private:
  TfIdfStats stats_;
};

TfIdfStats update_tfidf_stats(std::span<const std::vector<std::uint32_t>> presence_sets,
                              std::size_t vocabulary_size);

/// t_i = (n_id / n_d) * idf_i, before normalization.
std::vector<double> bovw_weights(std::span<const LocalFeature> features, const Codebook& codebook,
                                 const TfIdfStats& stats);
std::vector<float> bovw_encode(std::span<const LocalFeature> features, const Codebook& codebook,
                               const TfIdfStats& stats);

enum class Pooling { kMac, kSpoc, kGem };

/// GeM is defined on non-negative inputs: when any component of the image
/// is negative, every component is shifted by the image-wide minimum first.
/// `dim` sizes the zero vector SPoC returns for an empty feature list.
std::vector<float> pool_baseline(std::span<const LocalFeature> features, Pooling method,
                                 double p = 3.0, std::size_t dim = 0);

// TfIdfStats persistence for the BoVW pipeline (JSON text).
void save_tfidf(const TfIdfStats& stats, const std::filesystem::path& path);
TfIdfStats load_tfidf(const std::filesystem::path& path);

}  // namespace spvp
