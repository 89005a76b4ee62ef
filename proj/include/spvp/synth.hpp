#pragma once

// Synthetic street-level corpus on a regular geo grid.
//
// Every grid location holds yaw_count database images. An image is a layout
// of "objects": each object is one of cluster_count structure prototypes
// placed at a random position, and emits features scattered around it. A
// repetitive_fraction share of every image's features instead comes from a
// small pool of repetitive prototypes shared by all locations, scattered
// uniformly over the frame. Queries are copies of database images seen from
// a shifted viewpoint (features translated by up to viewpoint_shift, those
// leaving the frame dropped) with jittered descriptors.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spvp/dataset_io.hpp"

namespace spvp {

struct SynthConfig {
  std::size_t grid_rows = 10;
  std::size_t grid_cols = 10;
  double grid_step_m = 10.0;
  std::size_t yaw_count = 8;
  std::size_t features_per_image = 300;
  std::size_t descriptor_dim = 40;
  std::size_t cluster_count = 4;
  double repetitive_fraction = 0.0;
  double viewpoint_shift = 0.0;
  double descriptor_jitter = 0.05;
  std::size_t query_count = 100;
  std::size_t objects_per_image = 24;
  std::size_t repetitive_prototypes = 4;
  double feature_noise = 0.1;
  double object_spread = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kSynthOriginLat = 36.35;
inline constexpr double kSynthOriginLon = 127.38;

struct SyntheticCorpus {
  std::vector<ManifestRecord> records;  // database first, then queries
  std::vector<LocalFeatureMap> maps;    // parallel to records
  // Source database image of each query, in query order.
  std::vector<std::string> query_sources;
};

/// Geo position of grid cell (row, col) around the fixed origin.
GeoRecord grid_position(std::size_t row, std::size_t col, double step_m);

SyntheticCorpus generate_synthetic(const SynthConfig& config);

/// Writes manifest.csv and features/<image_id>.pvfm under out_dir and
/// returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& out_dir);

}  // namespace spvp
