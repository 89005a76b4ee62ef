#include <gtest/gtest.h>

#include "spvp/binary_io.hpp"
#include "spvp/pipeline.hpp"
#include "spvp/synth.hpp"
#include "test_support.hpp"

using namespace spvp;
namespace fs = std::filesystem;

namespace {

fs::path make_corpus(const std::string& name) {
  SynthConfig c;
  c.grid_rows = 4;
  c.grid_cols = 4;
  c.yaw_count = 2;
  c.features_per_image = 100;
  c.query_count = 10;
  c.repetitive_fraction = 0.3;
  c.viewpoint_shift = 0.1;
  c.seed = 5;
  return write_synthetic(generate_synthetic(c), test::scratch_dir(name));
}

PipelineConfig base_config(const fs::path& manifest, const fs::path& work, Method m) {
  PipelineConfig cfg;
  cfg.manifest = manifest;
  cfg.work_dir = work;
  cfg.encode.method = m;
  cfg.k = 8;
  cfg.max_iters = 30;
  cfg.sample_target = 2000;
  cfg.top_n = 20;
  cfg.quiet = true;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST(Pipeline, DeterministicReports) {
  const fs::path manifest = make_corpus("pipe_det");
  const fs::path root = test::scratch_dir("pipe_det_work");
  const auto a = run_pipeline(base_config(manifest, root / "a", Method::kSpvp));
  set_worker_count(3);
  const auto b = run_pipeline(base_config(manifest, root / "b", Method::kSpvp));
  set_worker_count(0);
  EXPECT_EQ(io::read_file(a.report_path), io::read_file(b.report_path));
  EXPECT_EQ(io::read_file(a.sweep_path), io::read_file(b.sweep_path));
  EXPECT_EQ(io::read_file(root / "a" / "codebook.pvcb"), io::read_file(root / "b" / "codebook.pvcb"));
  EXPECT_EQ(io::read_file(root / "a" / "spvp_index.pvix"), io::read_file(root / "b" / "spvp_index.pvix"));
  EXPECT_EQ(a.sweep.size(), 5u);
  EXPECT_EQ(a.report.at(1).recall, a.report.at(1).precision);
  EXPECT_TRUE(fs::exists(a.report_path.string() + ".ranks.tsv"));
}

TEST(Pipeline, EveryMethodAndPcaPlacementRuns) {
  const fs::path manifest = make_corpus("pipe_all");
  const fs::path work = test::scratch_dir("pipe_all_work");
  for (Method m : {Method::kVlad, Method::kBovw, Method::kMac, Method::kSpoc, Method::kGem}) {
    const auto r = run_pipeline(base_config(manifest, work, m));
    EXPECT_EQ(r.report.first_hit_rank.size(), 10u) << method_name(m);
    EXPECT_GE(r.report.at(20).recall, r.report.at(1).recall);
  }
  EXPECT_TRUE(fs::exists(work / "tfidf.json"));

  auto patch = base_config(manifest, test::scratch_dir("pipe_patch"), Method::kSpvp);
  patch.pca_placement = PcaPlacement::kPatch;
  patch.pca_dim = 16;
  patch.encode.pyramid.per_patch_dim = 16;
  run_pipeline(patch);
  EXPECT_EQ(load_index(patch.work_dir / "spvp_index.pvix").dim(), 21u * 16u);

  auto final_pca = base_config(manifest, test::scratch_dir("pipe_final"), Method::kVlad);
  final_pca.pca_placement = PcaPlacement::kFinal;
  final_pca.pca_dim = 12;
  final_pca.whiten = true;
  run_pipeline(final_pca);
  EXPECT_EQ(load_index(final_pca.work_dir / "vlad_index.pvix").dim(), 12u);
}

TEST(Pipeline, ResumeSkipsFinishedStages) {
  const fs::path manifest = make_corpus("pipe_resume");
  auto cfg = base_config(manifest, test::scratch_dir("pipe_resume_work"), Method::kVlad);
  run_pipeline(cfg);
  // A resumed run must reuse the stored codebook even when asked for a different k.
  const auto before = io::read_file(cfg.work_dir / "codebook.pvcb");
  cfg.resume = true;
  cfg.k = 4;
  run_pipeline(cfg);
  EXPECT_EQ(io::read_file(cfg.work_dir / "codebook.pvcb"), before);
}

TEST(Pipeline, StageErrorsKeepTypeAndName) {
  const fs::path work = test::scratch_dir("pipe_err");
  auto cfg = base_config(work / "missing.csv", work, Method::kSpvp);
  try {
    run_pipeline(cfg);
    FAIL() << "missing manifest accepted";
  } catch (const DataError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("stage sample: ", 0), 0u) << e.what();
  }
  const fs::path manifest = make_corpus("pipe_err_corpus");
  cfg = base_config(manifest, work / "w", Method::kSpvp);
  cfg.k = 100000;  // more words than sampled features
  EXPECT_THROW(run_pipeline(cfg), InsufficientDataError);
  cfg = base_config(manifest, work / "w2", Method::kSpvp);
  cfg.top_n = 5;
  cfg.n_values = {1, 10};
  EXPECT_THROW(run_pipeline(cfg), UsageError);
}

TEST(Pipeline, EncodeMapHandlesEmptyImages) {
  LocalFeatureMap empty;
  empty.image_id = "e";
  EncodeOptions opts;
  for (Method m : {Method::kMac, Method::kSpoc, Method::kGem}) {
    opts.method = m;
    const Descriptor d = encode_map(empty, opts, nullptr, nullptr, nullptr, 40);
    EXPECT_EQ(d.values, std::vector<float>(40, 0.0f));
    EXPECT_EQ(d.method, m);
  }
}
