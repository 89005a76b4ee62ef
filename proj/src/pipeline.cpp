#include "spvp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <mutex>
#include <random>

#include "spvp/binary_io.hpp"
#include "spvp/pca.hpp"

namespace spvp {

namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_progress{true};

/// Structured progress lines on stderr: stage, items done, rate.
class Progress {
 public:
  Progress(std::string stage, std::size_t total)
      : stage_(std::move(stage)), total_(total), start_(std::chrono::steady_clock::now()) {}

  void tick() {
    const std::size_t done = ++done_;
    if (done == total_ || done % 100 == 0) report(done);
  }

 private:
  void report(std::size_t done) {
    if (!g_progress) return;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::lock_guard<std::mutex> lock(mu_);
    std::fprintf(stderr, "stage=%s done=%zu/%zu rate=%.1f/s\n", stage_.c_str(), done, total_,
                 secs > 0 ? static_cast<double>(done) / secs : 0.0);
  }

  std::string stage_;
  std::size_t total_;
  std::atomic<std::size_t> done_{0};
  std::chrono::steady_clock::time_point start_;
  std::mutex mu_;
};

void note(const std::string& msg) {
  if (g_progress) std::fprintf(stderr, "%s\n", msg.c_str());
}

// Re-throws any library error with the stage name prefixed, keeping its type.
template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  const std::string prefix = "stage " + stage + ": ";
  try {
    return fn();
  } catch (const UsageError& e) {
    throw UsageError(prefix + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(prefix + e.what());
  } catch (const InsufficientDataError& e) {
    throw InsufficientDataError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

LocalFeatureMap load_record(const Manifest& manifest, const ManifestRecord& rec,
                            std::optional<std::size_t> dim) {
  LocalFeatureMap map = load_feature_map(manifest.resolve(rec), dim);
  map.image_id = rec.image_id;
  return map;
}

std::vector<const ManifestRecord*> require_split(const Manifest& manifest, Split split) {
  auto records = manifest.select(split);
  if (records.empty()) {
    throw InsufficientDataError(std::string("manifest has no ") +
                                (split == Split::kDatabase ? "database" : "query") + " records");
  }
  return records;
}

bool needs_codebook(Method m) { return m == Method::kSpvp || m == Method::kVlad || m == Method::kBovw; }

Pooling pooling_for(Method m) {
  switch (m) {
    case Method::kMac: return Pooling::kMac;
    case Method::kSpoc: return Pooling::kSpoc;
    case Method::kGem: return Pooling::kGem;
    default: throw UsageError("not a pooling method: " + std::string(method_name(m)));
  }
}

bool fresh(const PipelineConfig& cfg, const fs::path& p) { return !(cfg.resume && fs::exists(p)); }

}  // namespace

PcaPlacement parse_pca_placement(const std::string& name) {
  if (name == "none") return PcaPlacement::kNone;
  if (name == "patch") return PcaPlacement::kPatch;
  if (name == "final") return PcaPlacement::kFinal;
  throw UsageError("PCA placement must be none, patch or final; got '" + name + "'");
}

void set_progress_enabled(bool enabled) { g_progress = enabled; }

void PipelineConfig::validate() const {
  if (manifest.empty()) throw UsageError("pipeline: manifest path required");
  if (work_dir.empty()) throw UsageError("pipeline: work directory required");
  encode.pyramid.validate();
  if (k == 0 || max_iters == 0 || sample_target == 0) {
    throw UsageError("pipeline: k, max-iters and sample target must be >= 1");
  }
  if (top_n == 0) throw UsageError("pipeline: top-n must be >= 1");
  if (!(threshold_m > 0.0)) throw UsageError("pipeline: threshold must be > 0");
  for (double d : thresholds_m) {
    if (!(d > 0.0)) throw UsageError("pipeline: thresholds must be > 0");
  }
  for (std::size_t n : n_values) {
    if (n == 0 || n > top_n) throw UsageError("pipeline: N values must lie in [1, top-n]");
  }
  if (encode.method == Method::kGem && !(encode.gem_p >= 1.0)) {
    throw UsageError("pipeline: GeM p must be >= 1");
  }
  if (pca_placement == PcaPlacement::kPatch && encode.method != Method::kSpvp) {
    throw UsageError("pipeline: patch PCA applies to the spvp method only");
  }
  if (pca_placement != PcaPlacement::kNone && pca_dim == 0) throw UsageError("pipeline: PCA dim must be >= 1");
}

void stage_sample(const fs::path& manifest_path, std::size_t target, std::uint64_t seed,
                  const fs::path& out) {
  const Manifest manifest = load_manifest(manifest_path);
  const auto records = require_split(manifest, Split::kDatabase);
  FeatureReservoir reservoir(target, seed);
  Progress progress("sample", records.size());
  std::optional<std::size_t> dim;
  for (const ManifestRecord* rec : records) {
    const LocalFeatureMap map = load_record(manifest, *rec, dim);
    if (!dim && !map.features.empty()) dim = map.dim();
    reservoir.add(map);
    progress.tick();
  }
  const Matrix sample = std::move(reservoir).take();
  LocalFeatureMap out_map;
  out_map.image_id = "samples";
  bool unit = true;
  for (std::size_t i = 0; i < sample.rows(); ++i) {
    const auto row = sample.row(i);
    unit = unit && std::abs(l2_norm(row) - 1.0) <= 1e-5;
    out_map.features.push_back({0.0f, 0.0f, {row.begin(), row.end()}});
  }
  save_feature_map(out_map, out, unit);
  note("sample: kept " + std::to_string(sample.rows()) + " of " + std::to_string(reservoir.seen()) +
       " features");
}

void stage_train_codebook(const fs::path& samples, const KMeansOptions& options, const fs::path& out) {
  const LocalFeatureMap map = load_feature_map(samples);
  Matrix features;
  for (const LocalFeature& f : map.features) features.push_row(f.descriptor);
  const Codebook codebook = train_codebook(features, options);
  save_codebook(codebook, out);
  note("train-codebook: k=" + std::to_string(codebook.k()) + " iterations=" +
       std::to_string(codebook.training_meta().iterations) + " inertia=" +
       std::to_string(codebook.training_meta().final_inertia));
}

void stage_fit_patch_pca(const fs::path& manifest_path, const fs::path& codebook_path,
                         const PyramidConfig& pyramid, std::size_t out_dim, bool whiten,
                         std::size_t max_samples, std::uint64_t seed, const fs::path& out) {
  const Manifest manifest = load_manifest(manifest_path);
  const Codebook codebook = load_codebook(codebook_path);
  const auto records = require_split(manifest, Split::kDatabase);
  PyramidConfig raw = pyramid;
  raw.per_patch_dim.reset();

  // Reservoir over cell vectors, visiting images in manifest order.
  std::mt19937_64 rng(seed);
  Matrix samples;
  std::uint64_t seen = 0;
  Progress progress("fit-pca", records.size());
  for (const ManifestRecord* rec : records) {
    const LocalFeatureMap map = load_record(manifest, *rec, codebook.d());
    for (const auto& cell : spvp_cell_vectors(map, codebook, raw)) {
      if (samples.rows() < max_samples) {
        samples.push_row(cell);
      } else {
        const std::uint64_t j = std::uniform_int_distribution<std::uint64_t>(0, seen)(rng);
        if (j < max_samples) std::copy(cell.begin(), cell.end(), samples.row(j).begin());
      }
      ++seen;
    }
    progress.tick();
  }
  save_pca(pca_fit(samples, out_dim, whiten), out);
  note("fit-pca: " + std::to_string(samples.rows()) + " patch vectors, " +
       std::to_string(codebook.k() * codebook.d()) + " -> " + std::to_string(out_dim));
}

void stage_fit_final_pca(const fs::path& descriptors, std::size_t out_dim, bool whiten, const fs::path& out) {
  const DescriptorIndex set = load_index(descriptors);
  Matrix samples;
  for (std::size_t row = 0; row < set.count(); ++row) samples.push_row(set.values(row));
  save_pca(pca_fit(samples, out_dim, whiten), out);
  note("fit-pca: " + std::to_string(samples.rows()) + " descriptors, " + std::to_string(set.dim()) +
       " -> " + std::to_string(out_dim));
}

Descriptor encode_map(const LocalFeatureMap& map, const EncodeOptions& options, const Codebook* codebook,
                      const PCAModel* patch_pca, const TfIdfStats* tfidf, std::size_t feature_dim) {
  if (needs_codebook(options.method) && !codebook) {
    throw UsageError(std::string(method_name(options.method)) + " encoding requires a codebook");
  }
  Descriptor d{map.image_id, options.method, {}};
  switch (options.method) {
    case Method::kSpvp: {
      PyramidConfig pyramid = options.pyramid;
      if (patch_pca) pyramid.per_patch_dim = patch_pca->out_dim();
      d = spvp_encode(map, *codebook, pyramid, patch_pca);
      break;
    }
    case Method::kVlad:
      d.values = vlad_encode(map.features, *codebook, options.pyramid.vlad);
      break;
    case Method::kBovw:
      if (!tfidf) throw UsageError("bovw encoding requires tf-idf statistics");
      d.values = bovw_encode(map.features, *codebook, *tfidf);
      break;
    case Method::kMac:
    case Method::kSpoc:
    case Method::kGem:
      if (map.features.empty()) {
        // Featureless images get a zero descriptor so the index stays dense.
        d.values.assign(feature_dim, 0.0f);
      } else {
        d.values = pool_baseline(map.features, pooling_for(options.method), options.gem_p, feature_dim);
      }
      break;
  }
  return d;
}

void stage_encode(const EncodeInputs& inputs, const EncodeOptions& options, const fs::path& out) {
  const Manifest manifest = load_manifest(inputs.manifest);
  const auto records = require_split(manifest, inputs.split);

  std::optional<Codebook> codebook;
  if (needs_codebook(options.method)) {
    if (inputs.codebook.empty()) throw UsageError("encode: --codebook is required for this method");
    codebook = load_codebook(inputs.codebook);
  }
  std::optional<PCAModel> patch_pca, final_pca;
  if (!inputs.patch_pca.empty()) {
    if (options.method != Method::kSpvp) throw UsageError("encode: patch PCA applies to spvp only");
    patch_pca = load_pca(inputs.patch_pca);
  }
  if (!inputs.final_pca.empty()) final_pca = load_pca(inputs.final_pca);

  std::optional<std::size_t> dim;
  if (codebook) dim = codebook->d();
  if (!dim) {
    for (const ManifestRecord* rec : records) {
      FeatureFileHeader h;
      load_feature_map(manifest.resolve(*rec), std::nullopt, &h);
      if (h.count > 0) {
        dim = h.dim;
        break;
      }
    }
    if (!dim) throw InsufficientDataError("encode: every image in the split is featureless");
  }

  std::optional<TfIdfStats> tfidf;
  if (options.method == Method::kBovw) {
    if (inputs.tfidf.empty()) throw UsageError("encode: --tfidf is required for bovw");
    if (inputs.split == Split::kDatabase) {
      std::vector<std::vector<std::uint32_t>> presence(records.size());
      Progress progress("tfidf", records.size());
      parallel_chunks(records.size(), 8, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          presence[i] = word_presence(load_record(manifest, *records[i], dim).features, *codebook);
          progress.tick();
        }
      });
      tfidf = update_tfidf_stats(presence, codebook->k());
      save_tfidf(*tfidf, inputs.tfidf);
    } else {
      tfidf = load_tfidf(inputs.tfidf);
    }
  }

  std::vector<Descriptor> descriptors(records.size());
  Progress progress("encode", records.size());
  parallel_chunks(records.size(), 4, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const LocalFeatureMap map = load_record(manifest, *records[i], dim);
      Descriptor d = encode_map(map, options, codebook ? &*codebook : nullptr,
                                patch_pca ? &*patch_pca : nullptr, tfidf ? &*tfidf : nullptr, *dim);
      if (final_pca) d.values = pca_apply(*final_pca, std::span<const float>(d.values), true);
      descriptors[i] = std::move(d);
      progress.tick();
    }
  });
  save_index(build_index(descriptors), out);
}

void stage_index(const fs::path& descriptors, const fs::path& out) {
  const DescriptorIndex loaded = load_index(descriptors);
  const std::vector<Descriptor> all = index_descriptors(loaded);
  const DescriptorIndex index = build_index(all);
  save_index(index, out);
  note("index: " + std::to_string(index.count()) + " entries of dimension " + std::to_string(index.dim()));
}

void stage_search(const fs::path& index_path, const fs::path& queries_path, std::size_t top_n,
                  const fs::path& out) {
  const DescriptorIndex index = load_index(index_path);
  const DescriptorIndex query_set = load_index(queries_path);
  if (query_set.method() != index.method()) {
    throw DataError("search: query descriptors use " + std::string(method_name(query_set.method())) +
                    ", index uses " + std::string(method_name(index.method())));
  }
  const std::vector<Descriptor> queries = index_descriptors(query_set);
  std::vector<RankedResult> results;
  constexpr std::size_t kBatch = 256;
  Progress progress("search", queries.size());
  for (std::size_t b = 0; b < queries.size(); b += kBatch) {
    const std::size_t n = std::min(kBatch, queries.size() - b);
    auto batch = search_batch(index, std::span<const Descriptor>(queries).subspan(b, n), top_n);
    for (auto& r : batch) {
      results.push_back(std::move(r));
      progress.tick();
    }
  }
  save_results(results, out);
}

std::vector<EvalReport> stage_evaluate(const fs::path& manifest_path, const fs::path& results_path,
                                       const std::vector<double>& thresholds_m,
                                       const std::vector<std::size_t>& n_values, bool exclude_uncoverable,
                                       const fs::path& out) {
  const Manifest manifest = load_manifest(manifest_path);
  const std::vector<RankedResult> results = load_results(results_path);
  const auto queries = manifest.geo(Split::kQuery);
  const auto database = manifest.geo(Split::kDatabase);
  std::vector<GeoRecord> answered;
  for (const RankedResult& r : results) {
    const auto it = std::find_if(queries.begin(), queries.end(),
                                 [&](const GeoRecord& g) { return g.image_id == r.query_id; });
    if (it == queries.end()) throw DataError("evaluate: result query '" + r.query_id + "' not in manifest");
    answered.push_back(*it);
  }
  if (answered.size() != queries.size()) {
    throw DataError("evaluate: results cover " + std::to_string(answered.size()) + " of " +
                    std::to_string(queries.size()) + " queries");
  }
  const auto reports = threshold_sweep(results, answered, database, thresholds_m, n_values,
                                       MetricOptions{exclude_uncoverable});
  save_reports(reports, out);
  return reports;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  set_progress_enabled(!cfg.quiet);
  fs::create_directories(cfg.work_dir);
  const fs::path w = cfg.work_dir;
  const Method method = cfg.encode.method;
  const std::string tag(method_name(method));

  const fs::path samples = w / "samples.pvfm";
  const fs::path codebook = w / "codebook.pvcb";
  const fs::path pca = w / (tag + "_pca.pvpc");
  const fs::path tfidf = w / "tfidf.json";
  const fs::path db = w / (tag + "_database.pvix");
  const fs::path db_raw = w / (tag + "_database_raw.pvix");
  const fs::path qs = w / (tag + "_queries.pvix");
  const fs::path index = w / (tag + "_index.pvix");
  const fs::path results = w / (tag + "_results.tsv");

  if (needs_codebook(method)) {
    if (fresh(cfg, samples)) in_stage("sample", [&] { stage_sample(cfg.manifest, cfg.sample_target, cfg.seed, samples); });
    if (fresh(cfg, codebook)) {
      in_stage("train-codebook", [&] {
        stage_train_codebook(samples, KMeansOptions{cfg.k, cfg.max_iters, cfg.seed}, codebook);
      });
    }
  }

  EncodeInputs db_in{cfg.manifest, Split::kDatabase, needs_codebook(method) ? codebook : fs::path(), {}, {},
                     method == Method::kBovw ? tfidf : fs::path()};
  EncodeInputs q_in = db_in;
  q_in.split = Split::kQuery;

  if (cfg.pca_placement == PcaPlacement::kPatch) {
    if (fresh(cfg, pca)) {
      in_stage("fit-pca", [&] {
        stage_fit_patch_pca(cfg.manifest, codebook, cfg.encode.pyramid, cfg.pca_dim, cfg.whiten,
                            cfg.pca_samples, cfg.seed, pca);
      });
    }
    db_in.patch_pca = q_in.patch_pca = pca;
  }
  if (cfg.pca_placement == PcaPlacement::kFinal) {
    if (fresh(cfg, db_raw)) in_stage("encode", [&] { stage_encode(db_in, cfg.encode, db_raw); });
    if (fresh(cfg, pca)) in_stage("fit-pca", [&] { stage_fit_final_pca(db_raw, cfg.pca_dim, cfg.whiten, pca); });
    db_in.final_pca = q_in.final_pca = pca;
  }
  if (fresh(cfg, db)) in_stage("encode", [&] { stage_encode(db_in, cfg.encode, db); });
  if (fresh(cfg, qs)) in_stage("encode", [&] { stage_encode(q_in, cfg.encode, qs); });
  if (fresh(cfg, index)) in_stage("index", [&] { stage_index(db, index); });
  if (fresh(cfg, results)) in_stage("search", [&] { stage_search(index, qs, cfg.top_n, results); });

  PipelineResult out;
  out.report_path = cfg.report.empty() ? w / "report.jsonl" : cfg.report;
  out.sweep_path = out.report_path;
  out.sweep_path += ".sweep.jsonl";
  in_stage("evaluate", [&] {
    out.report = stage_evaluate(cfg.manifest, results, {cfg.threshold_m}, cfg.n_values, cfg.exclude_uncoverable,
                                out.report_path)
                     .front();
  });
  in_stage("sweep", [&] {
    out.sweep = stage_evaluate(cfg.manifest, results, cfg.thresholds_m, cfg.n_values, cfg.exclude_uncoverable,
                               out.sweep_path);
  });
  return out;
}

}  // namespace spvp
