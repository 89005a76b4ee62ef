// spvp: place-recognition retrieval pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spvp/codebook.hpp"
#include "spvp/dataset_io.hpp"
#include "spvp/pipeline.hpp"
#include "spvp/synth.hpp"

namespace {

using namespace spvp;
namespace fs = std::filesystem;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

const std::map<std::string, Split> kSplits = {{"database", Split::kDatabase}, {"query", Split::kQuery}};

std::size_t env_workers() {
  const char* v = std::getenv("SPVP_WORKERS");
  if (!v || !*v) return 0;
  try {
    return static_cast<std::size_t>(std::stoul(v));
  } catch (const std::exception&) {
    throw UsageError(std::string("SPVP_WORKERS must be a non-negative integer, got '") + v + "'");
  }
}

struct PyramidFlags {
  std::vector<std::size_t> levels = {1, 2, 4};
  bool intra_norm = false;
  bool no_renorm = false;

  void add(CLI::App* app) {
    app->add_option("--levels", levels, "Pyramid grid sizes, strictly increasing")
        ->delimiter(',')
        ->capture_default_str();
    app->add_flag("--intra-norm", intra_norm, "Per-centroid L2 inside each VLAD block");
    app->add_flag("--no-renorm-after-pca", no_renorm, "Skip L2 after per-patch PCA");
  }

  PyramidConfig config() const {
    PyramidConfig c;
    c.levels = levels;
    c.vlad.intra_normalize = intra_norm;
    c.normalize_after_pca = !no_renorm;
    c.validate();
    return c;
  }
};

void print_inspection(const fs::path& path, const FeatureFileHeader& h, const LocalFeatureMap& map) {
  double min_norm = map.features.empty() ? 0.0 : 1e300;
  double max_norm = 0.0;
  for (const LocalFeature& f : map.features) {
    const double n = l2_norm(f.descriptor);
    min_norm = std::min(min_norm, n);
    max_norm = std::max(max_norm, n);
  }
  std::printf("%s\tok\tversion=%u normalized=%d count=%u dim=%u source=%ux%u norm=[%.6f,%.6f]\n",
              path.string().c_str(), h.version, h.normalized ? 1 : 0, h.count, h.dim, h.source_width,
              h.source_height, min_norm, max_norm);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial pyramid VLAD place recognition: build, search and evaluate image descriptors"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags take precedence");
  std::size_t workers = 0;
  app.add_option("--workers", workers, "Worker threads (0 = SPVP_WORKERS or hardware concurrency)");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress lines on stderr");

  // synth
  SynthConfig synth;
  fs::path synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic geo-tagged feature corpus");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--rows", synth.grid_rows)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--cols", synth.grid_cols)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--step", synth.grid_step_m, "Grid step in meters")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--yaws", synth.yaw_count)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--features", synth.features_per_image)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", synth.descriptor_dim)->capture_default_str()->check(CLI::Range(1, 65535));
  synth_cmd->add_option("--clusters", synth.cluster_count)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--repetitive", synth.repetitive_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--shift", synth.viewpoint_shift)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--jitter", synth.descriptor_jitter)->capture_default_str()->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--queries", synth.query_count)->capture_default_str();
  synth_cmd->add_option("--objects", synth.objects_per_image)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--repetitive-prototypes", synth.repetitive_prototypes)->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth.feature_noise)->capture_default_str()->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--spread", synth.object_spread)->capture_default_str()->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();

  // sample
  fs::path manifest, out;
  std::size_t target = 200000;
  std::uint64_t seed = 0;
  auto* sample_cmd = app.add_subcommand("sample", "Reservoir-sample database descriptors for codebook training");
  sample_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--target", target)->capture_default_str()->check(CLI::PositiveNumber);
  sample_cmd->add_option("--seed", seed)->capture_default_str();
  sample_cmd->add_option("--out", out, "Output PVFM file")->required();

  // train-codebook
  fs::path samples;
  KMeansOptions kmeans;
  auto* train_cmd = app.add_subcommand("train-codebook", "Train the k-means visual vocabulary");
  train_cmd->add_option("--samples", samples, "PVFM sample file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--k", kmeans.k)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-iters", kmeans.max_iters)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", kmeans.seed)->capture_default_str();
  train_cmd->add_option("--out", out)->required();

  // fit-pca
  std::string placement = "patch";
  fs::path codebook, descriptors;
  std::size_t out_dim = 256, max_samples = 4000;
  bool whiten = false;
  PyramidFlags pca_pyramid;
  auto* pca_cmd = app.add_subcommand("fit-pca", "Fit PCA on per-patch VLAD vectors or on final descriptors");
  pca_cmd->add_option("--placement", placement)->capture_default_str()->check(CLI::IsMember({"patch", "final"}));
  pca_cmd->add_option("--manifest", manifest, "Manifest (patch placement)")->check(CLI::ExistingFile);
  pca_cmd->add_option("--codebook", codebook, "Codebook (patch placement)")->check(CLI::ExistingFile);
  pca_cmd->add_option("--descriptors", descriptors, "Descriptor file (final placement)")->check(CLI::ExistingFile);
  pca_cmd->add_option("--out-dim", out_dim)->capture_default_str()->check(CLI::PositiveNumber);
  pca_cmd->add_flag("--whiten", whiten);
  pca_cmd->add_option("--max-samples", max_samples)->capture_default_str()->check(CLI::PositiveNumber);
  pca_cmd->add_option("--seed", seed)->capture_default_str();
  pca_cmd->add_option("--out", out)->required();
  pca_pyramid.add(pca_cmd);

  // encode
  EncodeInputs enc_in;
  std::string method = "spvp";
  std::string split = "database";
  double gem_p = 3.0;
  PyramidFlags enc_pyramid;
  auto* enc_cmd = app.add_subcommand("encode", "Encode one manifest split into a descriptor file");
  enc_cmd->add_option("--manifest", enc_in.manifest)->required()->check(CLI::ExistingFile);
  enc_cmd->add_option("--split", split)->capture_default_str()->check(CLI::IsMember({"database", "query"}));
  enc_cmd->add_option("--method", method)->capture_default_str()
      ->check(CLI::IsMember({"spvp", "vlad", "bovw", "mac", "spoc", "gem"}, CLI::ignore_case));
  enc_cmd->add_option("--codebook", enc_in.codebook)->check(CLI::ExistingFile);
  enc_cmd->add_option("--patch-pca", enc_in.patch_pca)->check(CLI::ExistingFile);
  enc_cmd->add_option("--final-pca", enc_in.final_pca)->check(CLI::ExistingFile);
  enc_cmd->add_option("--tfidf", enc_in.tfidf, "BoVW statistics: written for database, read for query");
  enc_cmd->add_option("--gem-p", gem_p)->capture_default_str()->check(CLI::Range(1.0, 1e6));
  enc_cmd->add_option("--out", out)->required();
  enc_pyramid.add(enc_cmd);

  // index
  auto* index_cmd = app.add_subcommand("index", "Validate database descriptors and write the search index");
  index_cmd->add_option("--descriptors", descriptors)->required()->check(CLI::ExistingFile);
  index_cmd->add_option("--out", out)->required();

  // search
  fs::path index_path, queries;
  std::size_t top_n = 20;
  auto* search_cmd = app.add_subcommand("search", "Exact top-N search for every query descriptor");
  search_cmd->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
  search_cmd->add_option("--queries", queries)->required()->check(CLI::ExistingFile);
  search_cmd->add_option("--top-n", top_n)->capture_default_str()->check(CLI::PositiveNumber);
  search_cmd->add_option("--out", out)->required();

  // evaluate / sweep
  fs::path results;
  double threshold = 25.0;
  std::vector<double> thresholds = {10, 20, 30, 40, 50};
  std::vector<std::size_t> n_values = {1, 2, 5, 10, 15, 20};
  bool exclude_uncoverable = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Recall@N and Precision@N at one distance threshold");
  auto* sweep_cmd = app.add_subcommand("sweep", "Recall@N and Precision@N over several distance thresholds");
  for (auto* cmd : {eval_cmd, sweep_cmd}) {
    cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    cmd->add_option("--results", results)->required()->check(CLI::ExistingFile);
    cmd->add_option("--n-values", n_values)->delimiter(',')->capture_default_str();
    cmd->add_flag("--exclude-uncoverable", exclude_uncoverable,
                  "Drop queries with no database image within D from the denominators");
    cmd->add_option("--out", out, "JSON-lines report; first-hit ranks go to <out>.ranks.tsv")->required();
  }
  eval_cmd->add_option("--threshold", threshold, "Distance threshold D in meters")
      ->capture_default_str()->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--thresholds", thresholds)->delimiter(',')->capture_default_str();

  // validate-manifest
  std::size_t expected_dim = 0;
  auto* validate_cmd = app.add_subcommand("validate-manifest", "Check a manifest and every feature file it references");
  validate_cmd->add_option("--manifest", manifest)->required();
  validate_cmd->add_option("--dim", expected_dim, "Required descriptor dimension (0 = any)");

  // inspect-features
  std::vector<fs::path> feature_files;
  auto* inspect_cmd = app.add_subcommand("inspect-features", "Validate PVFM feature files and print their headers");
  inspect_cmd->add_option("files", feature_files)->required();
  inspect_cmd->add_option("--dim", expected_dim, "Required descriptor dimension (0 = any)");

  // run
  PipelineConfig pipe;
  std::string pipe_method = "spvp";
  std::string pipe_placement = "none";
  PyramidFlags pipe_pyramid;
  auto* run_cmd = app.add_subcommand("run", "Run every stage from sampling to the threshold sweep");
  run_cmd->add_option("--manifest", pipe.manifest)->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--work-dir", pipe.work_dir)->required();
  run_cmd->add_option("--report", pipe.report, "Report path (default <work-dir>/report.jsonl)");
  run_cmd->add_option("--method", pipe_method)->capture_default_str()
      ->check(CLI::IsMember({"spvp", "vlad", "bovw", "mac", "spoc", "gem"}, CLI::ignore_case));
  run_cmd->add_option("--k", pipe.k)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-iters", pipe.max_iters)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--sample-target", pipe.sample_target)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--pca", pipe_placement)->capture_default_str()->check(CLI::IsMember({"none", "patch", "final"}));
  run_cmd->add_option("--pca-dim", pipe.pca_dim)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--pca-samples", pipe.pca_samples)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_flag("--whiten", pipe.whiten);
  run_cmd->add_option("--gem-p", pipe.encode.gem_p)->capture_default_str()->check(CLI::Range(1.0, 1e6));
  run_cmd->add_option("--top-n", pipe.top_n)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--threshold", pipe.threshold_m)->capture_default_str()->check(CLI::PositiveNumber);
  run_cmd->add_option("--thresholds", pipe.thresholds_m)->delimiter(',')->capture_default_str();
  run_cmd->add_option("--n-values", pipe.n_values)->delimiter(',')->capture_default_str();
  run_cmd->add_flag("--exclude-uncoverable", pipe.exclude_uncoverable);
  run_cmd->add_option("--seed", pipe.seed)->capture_default_str();
  run_cmd->add_flag("--resume", pipe.resume, "Reuse intermediate files already present in the work directory");
  pipe_pyramid.add(run_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    set_worker_count(workers > 0 ? workers : env_workers());
    set_progress_enabled(!quiet);

    if (*synth_cmd) {
      const fs::path path = write_synthetic(generate_synthetic(synth), synth_out);
      std::printf("%s\n", path.string().c_str());
    } else if (*sample_cmd) {
      stage_sample(manifest, target, seed, out);
    } else if (*train_cmd) {
      stage_train_codebook(samples, kmeans, out);
    } else if (*pca_cmd) {
      if (placement == "patch") {
        if (manifest.empty() || codebook.empty()) {
          throw UsageError("fit-pca --placement patch needs --manifest and --codebook");
        }
        stage_fit_patch_pca(manifest, codebook, pca_pyramid.config(), out_dim, whiten, max_samples, seed, out);
      } else {
        if (descriptors.empty()) throw UsageError("fit-pca --placement final needs --descriptors");
        stage_fit_final_pca(descriptors, out_dim, whiten, out);
      }
    } else if (*enc_cmd) {
      enc_in.split = kSplits.at(split);
      EncodeOptions options;
      options.method = parse_method(method);
      options.pyramid = enc_pyramid.config();
      options.gem_p = gem_p;
      stage_encode(enc_in, options, out);
    } else if (*index_cmd) {
      stage_index(descriptors, out);
    } else if (*search_cmd) {
      stage_search(index_path, queries, top_n, out);
    } else if (*eval_cmd || *sweep_cmd) {
      const std::vector<double> ds = *eval_cmd ? std::vector<double>{threshold} : thresholds;
      for (double d : ds) {
        if (!(d > 0.0)) throw UsageError("thresholds must be > 0");
      }
      const auto reports = stage_evaluate(manifest, results, ds, n_values, exclude_uncoverable, out);
      std::fputs(format_report(reports).c_str(), stdout);
    } else if (*validate_cmd) {
      const auto v = validate_manifest(manifest, expected_dim ? std::optional<std::size_t>(expected_dim)
                                                              : std::nullopt);
      std::printf("ok database=%zu queries=%zu features=%zu dim=%zu\n", v.database, v.queries, v.features, v.dim);
    } else if (*inspect_cmd) {
      int status = 0;
      for (const fs::path& f : feature_files) {
        try {
          FeatureFileHeader h;
          const LocalFeatureMap map = load_feature_map(
              f, expected_dim ? std::optional<std::size_t>(expected_dim) : std::nullopt, &h);
          print_inspection(f, h, map);
        } catch (const Error& e) {
          std::printf("%s\tinvalid\t%s\n", f.string().c_str(), e.what());
          status = kExitData;
        }
      }
      return status;
    } else if (*run_cmd) {
      pipe.encode.method = parse_method(pipe_method);
      pipe.encode.pyramid = pipe_pyramid.config();
      pipe.pca_placement = parse_pca_placement(pipe_placement);
      pipe.quiet = quiet;
      const PipelineResult r = run_pipeline(pipe);
      std::fputs(format_report(std::span<const EvalReport>(&r.report, 1)).c_str(), stdout);
      std::fprintf(stderr, "report: %s\nsweep: %s\n", r.report_path.string().c_str(), r.sweep_path.string().c_str());
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const InsufficientDataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
  return 0;
}
