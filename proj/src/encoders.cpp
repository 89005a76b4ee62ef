#include "spvp/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "spvp/binary_io.hpp"

namespace spvp {

namespace {

void check_dim(const LocalFeature& f, const Codebook& codebook) {
  if (f.descriptor.size() != codebook.d()) {
    throw DimensionError("feature dimension " + std::to_string(f.descriptor.size()) +
                         " vs codebook dimension " + std::to_string(codebook.d()));
  }
}

void add_residual(const LocalFeature& f, std::size_t word, const Codebook& codebook, double* block) {
  const auto c = codebook.centroid(word);
  for (std::size_t j = 0; j < c.size(); ++j) {
    block[j] += static_cast<double>(f.descriptor[j]) - static_cast<double>(c[j]);
  }
}

// Signed square root and L2 in place; optional per-block L2 first.
void finalize_vlad(std::span<double> v, std::size_t d, const VladOptions& options) {
  for (double& x : v) x = std::copysign(std::sqrt(std::abs(x)), x);
  if (options.intra_normalize) {
    for (std::size_t b = 0; b + d <= v.size(); b += d) l2_normalize_inplace(v.subspan(b, d));
  }
  l2_normalize_inplace(v);
}

bool is_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

std::vector<float> to_float(std::span<const double> v) { return {v.begin(), v.end()}; }

}  // namespace

void PyramidConfig::validate() const {
  if (levels.empty()) throw UsageError("pyramid levels must be non-empty");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] < 1) throw UsageError("pyramid levels must be >= 1");
    if (i > 0 && levels[i] <= levels[i - 1]) {
      throw UsageError("pyramid levels must be strictly increasing");
    }
  }
  if (per_patch_dim && *per_patch_dim == 0) throw UsageError("per-patch dimension must be >= 1");
}

std::size_t PyramidConfig::cell_count() const {
  std::size_t total = 0;
  for (std::size_t g : levels) total += g * g;
  return total;
}

double TfIdfStats::idf(std::size_t word) const {
  const std::uint64_t ni = doc_frequency.at(word);
  if (ni == 0 || ni >= image_count) return 0.0;
  return std::log(static_cast<double>(image_count) / static_cast<double>(ni));
}

std::vector<double> vlad_residuals(std::span<const LocalFeature> features, const Codebook& codebook) {
  const std::size_t d = codebook.d();
  std::vector<double> sums(codebook.k() * d, 0.0);
  for (const LocalFeature& f : features) {
    check_dim(f, codebook);
    const std::size_t word = assign(f.descriptor, codebook);
    add_residual(f, word, codebook, sums.data() + word * d);
  }
  return sums;
}

std::vector<float> vlad_encode(std::span<const LocalFeature> features, const Codebook& codebook,
                               const VladOptions& options) {
  std::vector<double> v = vlad_residuals(features, codebook);
  finalize_vlad(v, codebook.d(), options);
  return to_float(v);
}

std::size_t pyramid_cell(float x, float y, std::size_t grid) {
  const auto clamp = [grid](float t) {
    const auto i = static_cast<std::size_t>(std::max(0.0f, t) * static_cast<float>(grid));
    return std::min(i, grid - 1);
  };
  return clamp(y) * grid + clamp(x);
}

std::size_t spvp_output_dim(const Codebook& codebook, const PyramidConfig& config) {
  const std::size_t block = config.per_patch_dim ? *config.per_patch_dim : codebook.k() * codebook.d();
  return config.cell_count() * block;
}

namespace {

// Cell residual sums for every level, in output order, plus per-cell counts.
struct CellResiduals {
  std::vector<std::vector<double>> sums;
  std::vector<std::size_t> counts;
};

CellResiduals accumulate_cells(const LocalFeatureMap& map, const Codebook& codebook,
                               const PyramidConfig& config) {
  config.validate();
  const std::size_t block = codebook.k() * codebook.d();
  CellResiduals cells;
  cells.sums.assign(config.cell_count(), {});
  cells.counts.assign(config.cell_count(), 0);

  std::vector<std::size_t> words(map.features.size());
  for (std::size_t i = 0; i < map.features.size(); ++i) {
    check_dim(map.features[i], codebook);
    words[i] = assign(map.features[i].descriptor, codebook);
  }

  std::size_t offset = 0;
  for (std::size_t g : config.levels) {
    for (std::size_t i = 0; i < map.features.size(); ++i) {
      const LocalFeature& f = map.features[i];
      const std::size_t cell = offset + pyramid_cell(f.x, f.y, g);
      auto& sums = cells.sums[cell];
      if (sums.empty()) sums.assign(block, 0.0);
      add_residual(f, words[i], codebook, sums.data() + words[i] * codebook.d());
      ++cells.counts[cell];
    }
    offset += g * g;
  }
  return cells;
}

}  // namespace

Descriptor spvp_encode(const LocalFeatureMap& map, const Codebook& codebook,
                       const PyramidConfig& config, const PCAModel* patch_pca) {
  const std::size_t vlad_dim = codebook.k() * codebook.d();
  if (config.per_patch_dim && !patch_pca) {
    throw UsageError("spvp_encode: per-patch dimension configured but no PCA model given");
  }
  if (patch_pca) {
    if (patch_pca->in_dim() != vlad_dim) {
      throw DimensionError("spvp_encode: PCA input dimension " + std::to_string(patch_pca->in_dim()) +
                           " vs VLAD dimension " + std::to_string(vlad_dim));
    }
    if (config.per_patch_dim && *config.per_patch_dim != patch_pca->out_dim()) {
      throw DimensionError("spvp_encode: PCA output dimension " +
                           std::to_string(patch_pca->out_dim()) + " vs configured per-patch " +
                           std::to_string(*config.per_patch_dim));
    }
  }
  const std::size_t block = patch_pca ? patch_pca->out_dim() : vlad_dim;

  CellResiduals cells = accumulate_cells(map, codebook, config);
  std::vector<double> out(config.cell_count() * block, 0.0);
  for (std::size_t c = 0; c < cells.sums.size(); ++c) {
    auto& sums = cells.sums[c];
    if (cells.counts[c] == 0 || is_zero(sums)) continue;  // zero block
    finalize_vlad(sums, codebook.d(), config.vlad);
    if (patch_pca) {
      const std::vector<double> reduced = pca_apply(*patch_pca, std::span<const double>(sums),
                                                    config.normalize_after_pca);
      std::copy(reduced.begin(), reduced.end(), out.begin() + static_cast<std::ptrdiff_t>(c * block));
    } else {
      std::copy(sums.begin(), sums.end(), out.begin() + static_cast<std::ptrdiff_t>(c * block));
    }
  }
  l2_normalize_inplace(std::span<double>(out));
  return Descriptor{map.image_id, Method::kSpvp, to_float(out)};
}

std::vector<std::vector<float>> spvp_cell_vectors(const LocalFeatureMap& map,
                                                  const Codebook& codebook,
                                                  const PyramidConfig& config) {
  CellResiduals cells = accumulate_cells(map, codebook, config);
  std::vector<std::vector<float>> out;
  for (std::size_t c = 0; c < cells.sums.size(); ++c) {
    auto& sums = cells.sums[c];
    if (cells.counts[c] == 0 || is_zero(sums)) continue;
    finalize_vlad(sums, codebook.d(), config.vlad);
    out.push_back(to_float(sums));
  }
  return out;
}

std::vector<std::uint32_t> word_presence(std::span<const LocalFeature> features,
                                         const Codebook& codebook) {
  std::vector<bool> seen(codebook.k(), false);
  for (const LocalFeature& f : features) {
    check_dim(f, codebook);
    seen[assign(f.descriptor, codebook)] = true;
  }
  std::vector<std::uint32_t> words;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) words.push_back(static_cast<std::uint32_t>(i));
  }
  return words;
}

TfIdfAccumulator::TfIdfAccumulator(std::size_t vocabulary_size) {
  if (vocabulary_size == 0) throw UsageError("tf-idf: vocabulary size must be >= 1");
  stats_.doc_frequency.assign(vocabulary_size, 0);
}

void TfIdfAccumulator::add(std::span<const std::uint32_t> present_words) {
  std::vector<std::uint32_t> words(present_words.begin(), present_words.end());
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  for (std::uint32_t w : words) {
    if (w >= stats_.doc_frequency.size()) {
      throw DataError("tf-idf: word index " + std::to_string(w) + " >= vocabulary size " +
                      std::to_string(stats_.doc_frequency.size()));
    }
  }
  for (std::uint32_t w : words) ++stats_.doc_frequency[w];
  ++stats_.image_count;
}

TfIdfStats TfIdfAccumulator::finish() const {
  if (stats_.image_count == 0) throw InsufficientDataError("tf-idf: no images in database stream");
  return stats_;
}

TfIdfStats update_tfidf_stats(std::span<const std::vector<std::uint32_t>> presence_sets,
                              std::size_t vocabulary_size) {
  TfIdfAccumulator acc(vocabulary_size);
  for (const auto& set : presence_sets) acc.add(set);
  return acc.finish();
}

std::vector<double> bovw_weights(std::span<const LocalFeature> features, const Codebook& codebook,
                                 const TfIdfStats& stats) {
  if (stats.vocabulary_size() != codebook.k()) {
    throw DimensionError("bovw: tf-idf vocabulary " + std::to_string(stats.vocabulary_size()) +
                         " vs codebook size " + std::to_string(codebook.k()));
  }
  std::vector<double> counts(codebook.k(), 0.0);
  for (const LocalFeature& f : features) {
    check_dim(f, codebook);
    counts[assign(f.descriptor, codebook)] += 1.0;
  }
  if (features.empty()) return counts;
  const double total = static_cast<double>(features.size());
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = counts[i] / total * stats.idf(i);
  return counts;
}

std::vector<float> bovw_encode(std::span<const LocalFeature> features, const Codebook& codebook,
                               const TfIdfStats& stats) {
  std::vector<double> t = bovw_weights(features, codebook, stats);
  l2_normalize_inplace(std::span<double>(t));
  return to_float(t);
}

std::vector<float> pool_baseline(std::span<const LocalFeature> features, Pooling method, double p,
                                 std::size_t dim) {
  if (features.empty()) {
    if (method == Pooling::kSpoc) return std::vector<float>(dim, 0.0f);
    throw InsufficientDataError("pooling: MAC and GeM need at least one feature");
  }
  const std::size_t d = features.front().descriptor.size();
  for (const LocalFeature& f : features) {
    if (f.descriptor.size() != d) throw DimensionError("pooling: mixed descriptor dimensions");
  }

  std::vector<double> out(d, 0.0);
  switch (method) {
    case Pooling::kMac: {
      std::fill(out.begin(), out.end(), -std::numeric_limits<double>::infinity());
      for (const LocalFeature& f : features) {
        for (std::size_t j = 0; j < d; ++j) out[j] = std::max<double>(out[j], f.descriptor[j]);
      }
      break;
    }
    case Pooling::kSpoc: {
      for (const LocalFeature& f : features) {
        for (std::size_t j = 0; j < d; ++j) out[j] += f.descriptor[j];
      }
      for (double& x : out) x /= static_cast<double>(features.size());
      break;
    }
    case Pooling::kGem: {
      if (!(p >= 1.0)) throw UsageError("pooling: GeM requires p >= 1");
      double shift = 0.0;
      for (const LocalFeature& f : features) {
        for (float x : f.descriptor) shift = std::min<double>(shift, x);
      }
      for (const LocalFeature& f : features) {
        for (std::size_t j = 0; j < d; ++j) out[j] += std::pow(f.descriptor[j] - shift, p);
      }
      for (double& x : out) x = std::pow(x / static_cast<double>(features.size()), 1.0 / p);
      break;
    }
  }
  l2_normalize_inplace(std::span<double>(out));
  return to_float(out);
}

void save_tfidf(const TfIdfStats& stats, const std::filesystem::path& path) {
  nlohmann::json j;
  j["image_count"] = stats.image_count;
  j["doc_frequency"] = stats.doc_frequency;
  io::write_text_atomic(path, j.dump() + "\n");
}

TfIdfStats load_tfidf(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tf-idf stats '" + path.string() + "'");
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    TfIdfStats stats;
    stats.image_count = j.at("image_count").get<std::uint64_t>();
    stats.doc_frequency = j.at("doc_frequency").get<std::vector<std::uint64_t>>();
    if (stats.image_count == 0) throw DataError("tf-idf stats: zero images");
    for (std::uint64_t n : stats.doc_frequency) {
      if (n > stats.image_count) throw DataError("tf-idf stats: N_i exceeds N");
    }
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("tf-idf stats '" + path.string() + "': " + e.what());
  }
}

}  // namespace spvp
