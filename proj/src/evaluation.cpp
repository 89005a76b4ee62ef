#include "spvp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "spvp/binary_io.hpp"

namespace spvp {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

std::size_t retrieved_depth(std::span<const RankedResult> results) {
  std::size_t depth = std::numeric_limits<std::size_t>::max();
  for (const RankedResult& r : results) depth = std::min(depth, r.hits.size());
  return results.empty() ? 0 : depth;
}

void check_depth(std::span<const RankedResult> results, std::size_t n) {
  if (n == 0) throw UsageError("metrics: N must be >= 1");
  const std::size_t k = retrieved_depth(results);
  if (n > k) {
    throw UsageError("metrics: N=" + std::to_string(n) + " exceeds retrieved depth K=" +
                     std::to_string(k));
  }
}

// Calls fn(result, correct_set) for each query counted in the denominators.
template <typename Fn>
std::size_t for_counted(std::span<const RankedResult> results, const GroundTruth& gt,
                        const MetricOptions& options, Fn&& fn) {
  std::size_t counted = 0;
  for (const RankedResult& r : results) {
    const auto& correct = gt.correct_for(r.query_id);
    if (options.exclude_uncoverable && correct.empty()) continue;
    ++counted;
    fn(r, correct);
  }
  return counted;
}

std::size_t correct_in_top(const RankedResult& r, const std::unordered_set<std::string>& correct,
                           std::size_t n) {
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n && k < r.hits.size(); ++k) hits += correct.count(r.hits[k].image_id);
  return hits;
}

}  // namespace

double haversine_m(const GeoRecord& a, const GeoRecord& b) {
  const double phi1 = radians(a.latitude);
  const double phi2 = radians(b.latitude);
  const double dphi = radians(b.latitude - a.latitude);
  const double dlambda = radians(b.longitude - a.longitude);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = std::min(1.0, s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2);
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

const std::unordered_set<std::string>& GroundTruth::correct_for(const std::string& query_id) const {
  const auto it = correct.find(query_id);
  if (it == correct.end()) throw DataError("ground truth has no query '" + query_id + "'");
  return it->second;
}

GroundTruth build_ground_truth(std::span<const GeoRecord> queries, std::span<const GeoRecord> database,
                               double threshold_m) {
  if (!(threshold_m > 0.0)) throw UsageError("ground truth: threshold D must be > 0");
  GroundTruth gt;
  gt.threshold_m = threshold_m;
  for (const GeoRecord& q : queries) {
    auto [it, inserted] = gt.correct.try_emplace(q.image_id);
    if (!inserted) throw DataError("ground truth: duplicate query id '" + q.image_id + "'");
    for (const GeoRecord& db : database) {
      if (haversine_m(q, db) < threshold_m) it->second.insert(db.image_id);
    }
  }
  return gt;
}

double recall_at_n(std::span<const RankedResult> results, const GroundTruth& gt, std::size_t n,
                   const MetricOptions& options) {
  check_depth(results, n);
  std::size_t found = 0;
  const std::size_t m = for_counted(results, gt, options, [&](const RankedResult& r, const auto& correct) {
    if (correct_in_top(r, correct, n) > 0) ++found;
  });
  return m == 0 ? 0.0 : static_cast<double>(found) / static_cast<double>(m);
}

double mean_correct_at_n(std::span<const RankedResult> results, const GroundTruth& gt, std::size_t n,
                         const MetricOptions& options) {
  check_depth(results, n);
  std::size_t total = 0;
  const std::size_t m = for_counted(results, gt, options, [&](const RankedResult& r, const auto& correct) {
    total += correct_in_top(r, correct, n);
  });
  return m == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(m);
}

double precision_at_n(std::span<const RankedResult> results, const GroundTruth& gt, std::size_t n,
                      const MetricOptions& options) {
  return mean_correct_at_n(results, gt, n, options) / static_cast<double>(n);
}

const MetricRow& EvalReport::at(std::size_t n) const {
  for (const MetricRow& row : rows) {
    if (row.n == n) return row;
  }
  throw UsageError("report has no row for N=" + std::to_string(n));
}

EvalReport evaluate(std::span<const RankedResult> results, const GroundTruth& gt,
                    std::span<const std::size_t> n_values, const MetricOptions& options) {
  EvalReport report;
  report.threshold_m = gt.threshold_m;
  std::vector<std::size_t> ns(n_values.begin(), n_values.end());
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  for (std::size_t n : ns) {
    report.rows.push_back({n, recall_at_n(results, gt, n, options), precision_at_n(results, gt, n, options),
                           mean_correct_at_n(results, gt, n, options)});
  }
  for (const RankedResult& r : results) {
    const auto& correct = gt.correct_for(r.query_id);
    if (correct.empty()) ++report.uncoverable_queries;
    std::optional<std::size_t> rank;
    for (std::size_t k = 0; k < r.hits.size(); ++k) {
      if (correct.count(r.hits[k].image_id)) {
        rank = k + 1;
        break;
      }
    }
    report.first_hit_rank[r.query_id] = rank;
  }
  return report;
}

std::vector<EvalReport> threshold_sweep(std::span<const RankedResult> results,
                                        std::span<const GeoRecord> queries,
                                        std::span<const GeoRecord> database,
                                        std::span<const double> thresholds_m,
                                        std::span<const std::size_t> n_values,
                                        const MetricOptions& options) {
  if (thresholds_m.empty() || n_values.empty()) {
    throw UsageError("sweep: thresholds and N values must be non-empty");
  }
  std::vector<EvalReport> reports;
  for (double d : thresholds_m) {
    reports.push_back(evaluate(results, build_ground_truth(queries, database, d), n_values, options));
  }
  return reports;
}

std::string format_report(std::span<const EvalReport> reports) {
  std::string out;
  for (const EvalReport& rep : reports) {
    for (const MetricRow& row : rep.rows) {
      nlohmann::ordered_json j;
      j["D"] = rep.threshold_m;
      j["N"] = row.n;
      j["recall"] = row.recall;
      j["precision"] = row.precision;
      j["mean_correct_at_n"] = row.mean_correct;
      j["queries"] = rep.first_hit_rank.size();
      j["uncoverable"] = rep.uncoverable_queries;
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::string format_first_hits(std::span<const EvalReport> reports) {
  std::string out = "query_id\tD\tfirst_hit_rank\n";
  for (const EvalReport& rep : reports) {
    const std::string d = nlohmann::json(rep.threshold_m).dump();
    for (const auto& [query, rank] : rep.first_hit_rank) {
      out += query + '\t' + d + '\t' + (rank ? std::to_string(*rank) : std::string("miss")) + '\n';
    }
  }
  return out;
}

void save_reports(std::span<const EvalReport> reports, const std::filesystem::path& path) {
  std::filesystem::path ranks = path;
  ranks += ".ranks.tsv";
  io::write_text_atomic(ranks, format_first_hits(reports));
  io::write_text_atomic(path, format_report(reports));
}

}  // namespace spvp
