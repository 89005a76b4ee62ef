#include "spvp/dataset_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "spvp/binary_io.hpp"

namespace spvp {

namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[] = "PVFM";
constexpr std::uint16_t kFeatureVersion = 1;
// Tolerance for descriptors in files flagged as normalized.
constexpr double kNormalizedFileTolerance = 1e-4;

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError(what + ": '" + s + "' is not a number");
  }
  if (used != s.size() || !std::isfinite(v)) throw DataError(what + ": '" + s + "' is not a number");
  return v;
}

std::string format_double(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> encode_feature_map(const LocalFeatureMap& map, bool normalized) {
  const std::size_t dim = map.features.empty() ? 0 : map.dim();
  if (dim > 0xFFFF) throw DimensionError("feature file: descriptor dimension exceeds 65535");
  if (map.features.size() > 0xFFFFFFFFULL) throw DataError("feature file: too many features");
  io::ByteWriter w(kFeatureMagic, kFeatureVersion);
  w.u8(normalized ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(map.features.size()));
  w.u16(static_cast<std::uint16_t>(dim));
  w.u16(map.source_width);
  w.u16(map.source_height);
  for (const LocalFeature& f : map.features) {
    validate_feature(f, dim);
    w.f32(f.x);
    w.f32(f.y);
    w.f32s(f.descriptor);
  }
  return std::move(w).finish();
}

LocalFeatureMap decode_feature_map(std::vector<std::uint8_t> bytes, std::string image_id,
                                   std::optional<std::size_t> expected_dim,
                                   FeatureFileHeader* header_out) {
  io::ByteReader r(std::move(bytes), kFeatureMagic, "feature file");
  FeatureFileHeader h;
  h.version = r.version();
  if (h.version != kFeatureVersion) {
    throw DataError("feature file: unsupported version " + std::to_string(h.version));
  }
  const std::uint8_t flag = r.u8();
  if (flag > 1) throw DataError("feature file: invalid normalized flag " + std::to_string(flag));
  h.normalized = flag == 1;
  h.count = r.u32();
  h.dim = r.u16();
  h.source_width = r.u16();
  h.source_height = r.u16();
  const std::uint64_t per_feature = (2ULL + h.dim) * 4ULL;
  if (h.count * per_feature != r.remaining()) {
    throw DataError("feature file: header count=" + std::to_string(h.count) + " dim=" +
                    std::to_string(h.dim) + " disagrees with payload size");
  }
  if (h.count > 0 && h.dim == 0) throw DataError("feature file: zero descriptor dimension");
  if (h.count > 0 && expected_dim && *expected_dim != h.dim) {
    throw DimensionError("feature file: dimension " + std::to_string(h.dim) + " but manifest declares " +
                         std::to_string(*expected_dim));
  }

  LocalFeatureMap map;
  map.image_id = std::move(image_id);
  map.source_width = h.source_width;
  map.source_height = h.source_height;
  map.features.resize(h.count);
  for (LocalFeature& f : map.features) {
    f.x = r.f32();
    f.y = r.f32();
    f.descriptor.resize(h.dim);
    r.f32s(f.descriptor);
    validate_feature(f, h.dim);
    if (h.normalized) {
      if (std::abs(l2_norm(f.descriptor) - 1.0) > kNormalizedFileTolerance) {
        throw DataError("feature file: descriptor flagged normalized is not unit length");
      }
    } else {
      l2_normalize_inplace(std::span<float>(f.descriptor));
    }
  }
  r.expect_end();
  if (header_out) *header_out = h;
  return map;
}

void save_feature_map(const LocalFeatureMap& map, const fs::path& path, bool normalized) {
  io::write_file_atomic(path, encode_feature_map(map, normalized));
}

LocalFeatureMap load_feature_map(const fs::path& path, std::optional<std::size_t> expected_dim,
                                 FeatureFileHeader* header_out) {
  try {
    return decode_feature_map(io::read_file(path), path.stem().string(), expected_dim, header_out);
  } catch (const DimensionError& e) {
    throw DimensionError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

fs::path Manifest::resolve(const ManifestRecord& r) const {
  return r.feature_path.is_absolute() ? r.feature_path : base_dir / r.feature_path;
}

std::vector<const ManifestRecord*> Manifest::select(Split split) const {
  std::vector<const ManifestRecord*> out;
  for (const ManifestRecord& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

std::vector<GeoRecord> Manifest::geo(Split split) const {
  std::vector<GeoRecord> out;
  for (const ManifestRecord* r : select(split)) out.push_back(r->geo);
  return out;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  Manifest manifest;
  manifest.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");

  std::string line;
  std::size_t line_no = 0;
  const auto where = [&] { return "manifest '" + path.string() + "' line " + std::to_string(line_no); };
  const auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  if (!std::getline(in, line)) throw DataError("manifest '" + path.string() + "' is empty");
  ++line_no;
  strip_cr(line);
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != kManifestHeader) {
    throw DataError(where() + ": expected header '" + std::string(kManifestHeader) + "'");
  }

  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 6) {
      throw DataError(where() + ": expected 6 fields, found " + std::to_string(fields.size()));
    }
    ManifestRecord rec;
    rec.image_id = fields[0];
    if (rec.image_id.empty()) throw DataError(where() + ": empty image_id");
    if (fields[1].empty()) throw DataError(where() + ": empty path");
    rec.feature_path = fields[1];
    rec.geo.image_id = rec.image_id;
    rec.geo.latitude = parse_double(fields[2], where() + " latitude");
    rec.geo.longitude = parse_double(fields[3], where() + " longitude");
    if (!fields[4].empty()) rec.geo.yaw = parse_double(fields[4], where() + " yaw");
    if (fields[5] == "database") {
      rec.split = Split::kDatabase;
    } else if (fields[5] == "query") {
      rec.split = Split::kQuery;
    } else {
      throw DataError(where() + ": split must be 'database' or 'query', got '" + fields[5] + "'");
    }
    try {
      validate_geo(rec.geo);
    } catch (const DataError& e) {
      throw DataError(where() + ": " + e.what());
    }
    if (!ids.insert(rec.image_id).second) {
      throw DataError(where() + ": duplicate image_id '" + rec.image_id + "'");
    }
    manifest.records.push_back(std::move(rec));
  }
  for (const ManifestRecord& r : manifest.records) {
    if (!fs::is_regular_file(manifest.resolve(r))) {
      throw DataError("manifest '" + path.string() + "': feature file for '" + r.image_id +
                      "' not found at " + manifest.resolve(r).string());
    }
  }
  return manifest;
}

std::string format_manifest(const Manifest& manifest) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const ManifestRecord& r : manifest.records) {
    if (r.image_id.find_first_of(",\n") != std::string::npos) {
      throw DataError("manifest: image_id '" + r.image_id + "' contains a delimiter");
    }
    out += r.image_id + ',' + r.feature_path.generic_string() + ',' +
           format_double(r.geo.latitude, "%.10f") + ',' + format_double(r.geo.longitude, "%.10f") + ',' +
           (r.geo.yaw ? format_double(*r.geo.yaw, "%.6g") : std::string()) + ',' +
           (r.split == Split::kDatabase ? "database" : "query") + '\n';
  }
  return out;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  io::write_text_atomic(path, format_manifest(manifest));
}

ManifestValidation validate_manifest(const fs::path& path, std::optional<std::size_t> expected_dim) {
  const Manifest manifest = load_manifest(path);
  ManifestValidation v;
  std::optional<std::size_t> dim = expected_dim;
  for (const ManifestRecord& r : manifest.records) {
    const LocalFeatureMap map = load_feature_map(manifest.resolve(r), dim);
    if (!map.features.empty() && !dim) dim = map.dim();
    v.features += map.features.size();
    (r.split == Split::kDatabase ? v.database : v.queries) += 1;
  }
  v.dim = dim.value_or(0);
  return v;
}

}  // namespace spvp
