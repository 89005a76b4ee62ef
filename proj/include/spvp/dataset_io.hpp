#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spvp/core.hpp"

namespace spvp {

// ---------------------------------------------------------------------------
// PVFM feature files
//
//   "PVFM" | version u16 | normalized u8 | count u32 | dim u16 |
//   source_width u16 | source_height u16 |
//   count x (x f32, y f32, dim x f32) | FNV-1a 64 checksum
//
// All little-endian.

struct FeatureFileHeader {
  std::uint16_t version = 0;
  bool normalized = false;
  std::uint32_t count = 0;
  std::uint16_t dim = 0;
  std::uint16_t source_width = 0;
  std::uint16_t source_height = 0;
};

std::vector<std::uint8_t> encode_feature_map(const LocalFeatureMap& map, bool normalized);

/// Parses and validates a PVFM buffer. Descriptors are re-normalized when
/// the header's normalized flag is 0. When expected_dim is set, a different
/// file dimension is an error.
LocalFeatureMap decode_feature_map(std::vector<std::uint8_t> bytes, std::string image_id,
                                   std::optional<std::size_t> expected_dim = std::nullopt,
                                   FeatureFileHeader* header_out = nullptr);

void save_feature_map(const LocalFeatureMap& map, const std::filesystem::path& path, bool normalized);
LocalFeatureMap load_feature_map(const std::filesystem::path& path,
                                 std::optional<std::size_t> expected_dim = std::nullopt,
                                 FeatureFileHeader* header_out = nullptr);

// ---------------------------------------------------------------------------
// Manifest: UTF-8 comma-separated text with a header line
//   image_id,path,latitude,longitude,yaw,split
// yaw may be empty; split is "database" or "query"; relative paths resolve
// against the manifest's directory.

enum class Split { kDatabase, kQuery };

struct ManifestRecord {
  std::string image_id;
  std::filesystem::path feature_path;  // as written in the manifest
  GeoRecord geo;
  Split split = Split::kDatabase;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const ManifestRecord& r) const;
  std::vector<const ManifestRecord*> select(Split split) const;
  std::vector<GeoRecord> geo(Split split) const;
};

inline constexpr char kManifestHeader[] = "image_id,path,latitude,longitude,yaw,split";

/// Parses the manifest and checks ids are unique and every referenced
/// feature file exists. Fails as a whole; no partial manifest is returned.
Manifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const Manifest& manifest);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct ManifestValidation {
  std::size_t database = 0;
  std::size_t queries = 0;
  std::size_t features = 0;
  std::size_t dim = 0;
};

/// Loads the manifest and every feature file; all files must share one
/// dimension (expected_dim when given).
ManifestValidation validate_manifest(const std::filesystem::path& path,
                                     std::optional<std::size_t> expected_dim = std::nullopt);

}  // namespace spvp
