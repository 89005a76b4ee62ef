#pragma once

// Stage functions behind the command-line tool. Each stage reads its inputs
// from files, writes its outputs atomically, and can be re-run on its own.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spvp/dataset_io.hpp"
#include "spvp/encoders.hpp"
#include "spvp/evaluation.hpp"
#include "spvp/index.hpp"

namespace spvp {

/// Where a fitted PCA model is applied when encoding.
enum class PcaPlacement { kNone, kPatch, kFinal };

PcaPlacement parse_pca_placement(const std::string& name);

struct EncodeOptions {
  Method method = Method::kSpvp;
  PyramidConfig pyramid;  // pyramid.vlad also governs plain VLAD
  double gem_p = 3.0;
};

struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path work_dir;
  std::filesystem::path report;  // defaults to work_dir/report.jsonl

  EncodeOptions encode;
  std::size_t k = 256;
  std::size_t max_iters = 100;
  std::size_t sample_target = 200000;
  PcaPlacement pca_placement = PcaPlacement::kNone;
  std::size_t pca_dim = 256;
  bool whiten = false;
  std::size_t pca_samples = 4000;

  std::size_t top_n = 20;
  double threshold_m = 25.0;
  std::vector<double> thresholds_m = {10, 20, 30, 40, 50};
  std::vector<std::size_t> n_values = {1, 2, 5, 10, 15, 20};
  bool exclude_uncoverable = false;
  std::uint64_t seed = 0;
  bool resume = false;
  bool quiet = false;

  void validate() const;
};

struct PipelineResult {
  EvalReport report;                 // at threshold_m
  std::vector<EvalReport> sweep;     // one per thresholds_m
  std::filesystem::path report_path;
  std::filesystem::path sweep_path;
};

void set_progress_enabled(bool enabled);

// Individual stages.
void stage_sample(const std::filesystem::path& manifest, std::size_t target, std::uint64_t seed,
                  const std::filesystem::path& out);
void stage_train_codebook(const std::filesystem::path& samples, const KMeansOptions& options,
                          const std::filesystem::path& out);
/// Fits PCA on per-cell VLAD vectors of the database images.
void stage_fit_patch_pca(const std::filesystem::path& manifest, const std::filesystem::path& codebook,
                         const PyramidConfig& pyramid, std::size_t out_dim, bool whiten,
                         std::size_t max_samples, std::uint64_t seed, const std::filesystem::path& out);
/// Fits PCA on already-encoded descriptors (a PVIX descriptor file).
void stage_fit_final_pca(const std::filesystem::path& descriptors, std::size_t out_dim, bool whiten,
                         const std::filesystem::path& out);

struct EncodeInputs {
  std::filesystem::path manifest;
  Split split = Split::kDatabase;
  std::filesystem::path codebook;    // VLAD, SPVP, BoVW
  std::filesystem::path patch_pca;   // SPVP only
  std::filesystem::path final_pca;   // any method
  std::filesystem::path tfidf;       // BoVW: written for database, read for queries
};
void stage_encode(const EncodeInputs& inputs, const EncodeOptions& options,
                  const std::filesystem::path& out);
void stage_index(const std::filesystem::path& descriptors, const std::filesystem::path& out);
void stage_search(const std::filesystem::path& index, const std::filesystem::path& queries,
                  std::size_t top_n, const std::filesystem::path& out);
std::vector<EvalReport> stage_evaluate(const std::filesystem::path& manifest,
                                       const std::filesystem::path& results,
                                       const std::vector<double>& thresholds_m,
                                       const std::vector<std::size_t>& n_values,
                                       bool exclude_uncoverable, const std::filesystem::path& out);

/// Encodes one feature map with already-loaded models.
Descriptor encode_map(const LocalFeatureMap& map, const EncodeOptions& options, const Codebook* codebook,
                      const PCAModel* patch_pca, const TfIdfStats* tfidf, std::size_t feature_dim);

PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace spvp
