#include "spvp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "spvp/evaluation.hpp"

namespace spvp {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (purpose, item) so images can be generated in any order.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t item) {
  return std::mt19937_64(splitmix64(splitmix64(seed ^ splitmix64(purpose)) + item));
}

std::vector<float> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<float> v(dim);
  do {
    for (float& x : v) x = static_cast<float>(n(rng));
  } while (l2_norm(v) < 1e-6);
  l2_normalize_inplace(std::span<float>(v));
  return v;
}

std::vector<float> noisy_copy(std::span<const float> base, double sigma, std::mt19937_64& rng) {
  std::vector<float> v(base.begin(), base.end());
  if (sigma <= 0.0) return v;
  std::normal_distribution<double> n(0.0, sigma);
  for (float& x : v) x = static_cast<float>(x + n(rng));
  l2_normalize_inplace(std::span<float>(v));
  return v;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

enum Purpose : std::uint64_t { kPrototypes = 1, kDatabaseImage = 2, kQueryPick = 3, kQueryImage = 4 };

LocalFeatureMap make_database_image(const SynthConfig& cfg, std::size_t index,
                                    const std::vector<std::vector<float>>& structures,
                                    const std::vector<std::vector<float>>& repetitive) {
  auto rng = stream(cfg.seed, kDatabaseImage, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> inner(0.1, 0.9);
  std::normal_distribution<double> spread(0.0, cfg.object_spread);

  struct Object {
    std::size_t prototype;
    double x, y;
  };
  std::vector<Object> objects(cfg.objects_per_image);
  for (Object& o : objects) {
    o.prototype = std::uniform_int_distribution<std::size_t>(0, structures.size() - 1)(rng);
    o.x = inner(rng);
    o.y = inner(rng);
  }
  std::uniform_int_distribution<std::size_t> pattern(0, repetitive.size() - 1);

  const auto repetitive_count = static_cast<std::size_t>(
      std::llround(cfg.repetitive_fraction * static_cast<double>(cfg.features_per_image)));
  LocalFeatureMap map;
  map.source_width = 640;
  map.source_height = 640;
  map.features.reserve(cfg.features_per_image);
  for (std::size_t i = 0; i < cfg.features_per_image; ++i) {
    LocalFeature f;
    if (i < repetitive_count) {
      f.x = clamp01(unit(rng));
      f.y = clamp01(unit(rng));
      f.descriptor = noisy_copy(repetitive[pattern(rng)], cfg.feature_noise, rng);
    } else {
      const Object& o = objects[std::uniform_int_distribution<std::size_t>(0, objects.size() - 1)(rng)];
      f.x = clamp01(o.x + spread(rng));
      f.y = clamp01(o.y + spread(rng));
      f.descriptor = noisy_copy(structures[o.prototype], cfg.feature_noise, rng);
    }
    map.features.push_back(std::move(f));
  }
  return map;
}

LocalFeatureMap make_query_image(const SynthConfig& cfg, std::size_t index, const LocalFeatureMap& source) {
  auto rng = stream(cfg.seed, kQueryImage, index);
  std::uniform_real_distribution<double> shift(-cfg.viewpoint_shift, cfg.viewpoint_shift);
  const double dx = cfg.viewpoint_shift > 0.0 ? shift(rng) : 0.0;
  const double dy = cfg.viewpoint_shift > 0.0 ? shift(rng) : 0.0;

  LocalFeatureMap map;
  map.source_width = source.source_width;
  map.source_height = source.source_height;
  for (const LocalFeature& f : source.features) {
    const double x = f.x + dx;
    const double y = f.y + dy;
    if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) continue;  // left the frame
    map.features.push_back({static_cast<float>(x), static_cast<float>(y),
                            noisy_copy(f.descriptor, cfg.descriptor_jitter, rng)});
  }
  if (map.features.empty() && !source.features.empty()) {
    // Keep the query non-empty so every encoder has input.
    const LocalFeature& f = source.features.front();
    map.features.push_back({clamp01(f.x + dx), clamp01(f.y + dy), f.descriptor});
  }
  return map;
}

std::string db_id(std::size_t row, std::size_t col, std::size_t yaw) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "db_r%03zu_c%03zu_y%zu", row, col, yaw);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  const auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw UsageError(std::string("synth: ") + name + " must be >= 1");
  };
  positive(grid_rows, "grid_rows");
  positive(grid_cols, "grid_cols");
  positive(yaw_count, "yaw_count");
  positive(features_per_image, "features_per_image");
  positive(descriptor_dim, "descriptor_dim");
  positive(cluster_count, "cluster_count");
  positive(objects_per_image, "objects_per_image");
  positive(repetitive_prototypes, "repetitive_prototypes");
  if (descriptor_dim > 0xFFFF) throw UsageError("synth: descriptor_dim must be <= 65535");
  if (!(grid_step_m > 0.0)) throw UsageError("synth: grid_step_m must be > 0");
  for (double f : {repetitive_fraction, viewpoint_shift}) {
    if (!(f >= 0.0 && f <= 1.0)) throw UsageError("synth: fractions must lie in [0,1]");
  }
  if (!(descriptor_jitter >= 0.0 && feature_noise >= 0.0 && object_spread >= 0.0)) {
    throw UsageError("synth: noise levels must be >= 0");
  }
  if (query_count > grid_rows * grid_cols * yaw_count) {
    throw UsageError("synth: query_count exceeds the number of database images");
  }
}

GeoRecord grid_position(std::size_t row, std::size_t col, double step_m) {
  const double lat0 = kSynthOriginLat * std::numbers::pi / 180.0;
  GeoRecord g;
  g.latitude = kSynthOriginLat + static_cast<double>(row) * step_m / kEarthRadiusM * 180.0 / std::numbers::pi;
  g.longitude = kSynthOriginLon + static_cast<double>(col) * step_m / (kEarthRadiusM * std::cos(lat0)) *
                                      180.0 / std::numbers::pi;
  return g;
}

SyntheticCorpus generate_synthetic(const SynthConfig& config) {
  config.validate();
  auto proto_rng = stream(config.seed, kPrototypes, 0);
  std::vector<std::vector<float>> structures, repetitive;
  for (std::size_t i = 0; i < config.cluster_count; ++i) {
    structures.push_back(random_unit(config.descriptor_dim, proto_rng));
  }
  for (std::size_t i = 0; i < config.repetitive_prototypes; ++i) {
    repetitive.push_back(random_unit(config.descriptor_dim, proto_rng));
  }

  SyntheticCorpus corpus;
  const std::size_t db_count = config.grid_rows * config.grid_cols * config.yaw_count;
  corpus.records.resize(db_count);
  corpus.maps.resize(db_count);
  for (std::size_t r = 0; r < config.grid_rows; ++r) {
    for (std::size_t c = 0; c < config.grid_cols; ++c) {
      for (std::size_t y = 0; y < config.yaw_count; ++y) {
        const std::size_t i = (r * config.grid_cols + c) * config.yaw_count + y;
        ManifestRecord& rec = corpus.records[i];
        rec.image_id = db_id(r, c, y);
        rec.feature_path = fs::path("features") / (rec.image_id + ".pvfm");
        rec.geo = grid_position(r, c, config.grid_step_m);
        rec.geo.image_id = rec.image_id;
        rec.geo.yaw = 360.0 / static_cast<double>(config.yaw_count) * static_cast<double>(y);
        rec.split = Split::kDatabase;
      }
    }
  }
  parallel_chunks(db_count, 16, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      corpus.maps[i] = make_database_image(config, i, structures, repetitive);
      corpus.maps[i].image_id = corpus.records[i].image_id;
    }
  });

  // Query sources: a seeded partial shuffle of the database.
  std::vector<std::size_t> order(db_count);
  for (std::size_t i = 0; i < db_count; ++i) order[i] = i;
  auto pick_rng = stream(config.seed, kQueryPick, 0);
  for (std::size_t i = 0; i < config.query_count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, db_count - 1);
    std::swap(order[i], order[pick(pick_rng)]);
  }
  for (std::size_t q = 0; q < config.query_count; ++q) {
    const std::size_t src = order[q];
    char buf[32];
    std::snprintf(buf, sizeof(buf), "q%04zu", q);
    ManifestRecord rec;
    rec.image_id = buf;
    rec.feature_path = fs::path("features") / (rec.image_id + ".pvfm");
    rec.geo = corpus.records[src].geo;
    rec.geo.image_id = rec.image_id;
    rec.split = Split::kQuery;
    LocalFeatureMap map = make_query_image(config, q, corpus.maps[src]);
    map.image_id = rec.image_id;
    corpus.query_sources.push_back(corpus.records[src].image_id);
    corpus.records.push_back(std::move(rec));
    corpus.maps.push_back(std::move(map));
  }
  return corpus;
}

fs::path write_synthetic(const SyntheticCorpus& corpus, const fs::path& out_dir) {
  fs::create_directories(out_dir / "features");
  parallel_chunks(corpus.records.size(), 16, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      save_feature_map(corpus.maps[i], out_dir / corpus.records[i].feature_path, true);
    }
  });
  Manifest manifest;
  manifest.base_dir = out_dir;
  manifest.records = corpus.records;
  const fs::path path = out_dir / "manifest.csv";
  save_manifest(manifest, path);
  return path;
}

}  // namespace spvp
