#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "spvp/core.hpp"
#include "spvp/index.hpp"

namespace spvp {

inline constexpr double kEarthRadiusM = 6371000.0;

/// Great-circle distance on a sphere of radius kEarthRadiusM.
double haversine_m(const GeoRecord& a, const GeoRecord& b);

/// Correct database ids per query: every record strictly closer than D.
struct GroundTruth {
  double threshold_m = 0.0;
  std::map<std::string, std::unordered_set<std::string>> correct;

  const std::unordered_set<std::string>& correct_for(const std::string& query_id) const;
};

GroundTruth build_ground_truth(std::span<const GeoRecord> queries, std::span<const GeoRecord> database,
                               double threshold_m);

struct MetricOptions {
  // Drop queries without any correct database record from the denominators.
  bool exclude_uncoverable = false;
};

double recall_at_n(std::span<const RankedResult> results, const GroundTruth& gt, std::size_t n,
                   const MetricOptions& options = {});

/// Mean fraction of correct images among the top n (normalized by M*n).
double precision_at_n(std::span<const RankedResult> results, const GroundTruth& gt, std::size_t n,
                      const MetricOptions& options = {});

/// Mean count of correct images in the top n, without the 1/n factor.
double mean_correct_at_n(std::span<const RankedResult> results, const GroundTruth& gt, std::size_t n,
                         const MetricOptions& options = {});

struct MetricRow {
  std::size_t n = 0;
  double recall = 0.0;
  double precision = 0.0;
  double mean_correct = 0.0;
};

struct EvalReport {
  double threshold_m = 0.0;
  std::vector<MetricRow> rows;  // ascending n
  // 1-based rank of the first correct hit, nullopt for a miss.
  std::map<std::string, std::optional<std::size_t>> first_hit_rank;
  std::size_t uncoverable_queries = 0;

  const MetricRow& at(std::size_t n) const;
};

EvalReport evaluate(std::span<const RankedResult> results, const GroundTruth& gt,
                    std::span<const std::size_t> n_values, const MetricOptions& options = {});

/// One report per threshold; rankings are reused, ground truth is rebuilt.
std::vector<EvalReport> threshold_sweep(std::span<const RankedResult> results,
                                        std::span<const GeoRecord> queries,
                                        std::span<const GeoRecord> database,
                                        std::span<const double> thresholds_m,
                                        std::span<const std::size_t> n_values,
                                        const MetricOptions& options = {});

/// JSON-lines metrics, one record per (D, N).
std::string format_report(std::span<const EvalReport> reports);
/// Tab-separated query_id, D, first-hit rank ("miss" when none).
std::string format_first_hits(std::span<const EvalReport> reports);

void save_reports(std::span<const EvalReport> reports, const std::filesystem::path& path);

}  // namespace spvp
