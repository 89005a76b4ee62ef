#include "spvp/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "spvp/binary_io.hpp"

namespace spvp {

namespace {

constexpr char kCodebookMagic[] = "PVCB";
constexpr std::uint16_t kCodebookVersion = 1;
constexpr std::size_t kAssignChunk = 2048;

double squared_distance_mixed(std::span<const float> x, const double* c, std::size_t d) {
  double sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = static_cast<double>(x[j]) - c[j];
    sum += diff * diff;
  }
  return sum;
}

// Nearest centroid against double-precision centroids used during training.
std::pair<std::size_t, double> nearest(std::span<const float> x, const std::vector<double>& centroids,
                                       std::size_t k, std::size_t d) {
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double dist = squared_distance_mixed(x, centroids.data() + c * d, d);
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return {best, best_dist};
}

std::vector<double> seed_plus_plus(const Matrix& features, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  std::vector<double> centroids(k * d);
  auto set_centroid = [&](std::size_t c, std::size_t row) {
    const auto src = features.row(row);
    std::copy(src.begin(), src.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
  };

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  set_centroid(0, pick(rng));

  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    const double* prev = centroids.data() + (c - 1) * d;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance_mixed(features.row(i), prev, d));
      total += closest[i];
    }
    if (!(total > 0.0)) {
      throw InsufficientDataError("k-means: only " + std::to_string(c) +
                                  " distinct features available for k=" + std::to_string(k));
    }
    std::uniform_real_distribution<double> u(0.0, total);
    const double target = u(rng);
    double acc = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (closest[i] <= 0.0) continue;
      acc += closest[i];
      chosen = i;
      if (acc > target) break;
    }
    set_centroid(c, chosen);
  }
  return centroids;
}

struct ChunkStats {
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  double inertia = 0.0;
  std::size_t changed = 0;
};

}  // namespace

Codebook::Codebook(std::size_t k, std::size_t d, std::vector<float> centroids, TrainingMeta meta)
    : k_(k), d_(d), centroids_(std::move(centroids)), meta_(std::move(meta)) {
  if (k_ == 0 || d_ == 0) throw DataError("codebook requires k >= 1 and d >= 1");
  if (centroids_.size() != k_ * d_) {
    throw DimensionError("codebook payload has " + std::to_string(centroids_.size()) +
                         " values, expected k*d = " + std::to_string(k_ * d_));
  }
  if (!all_finite(centroids_)) throw DataError("codebook contains non-finite centroid values");
  for (std::size_t a = 0; a < k_; ++a) {
    for (std::size_t b = a + 1; b < k_; ++b) {
      if (squared_distance(centroid(a), centroid(b)) == 0.0) {
        throw DataError("codebook centroids " + std::to_string(a) + " and " + std::to_string(b) +
                        " coincide");
      }
    }
  }
}

Codebook train_codebook(const Matrix& features, const KMeansOptions& options) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  const std::size_t k = options.k;
  if (k == 0) throw UsageError("k-means: k must be >= 1");
  if (n < k) {
    throw InsufficientDataError("k-means: " + std::to_string(n) + " features for k=" +
                                std::to_string(k));
  }
  if (d == 0) throw DimensionError("k-means: zero-dimensional features");
  if (!all_finite(features.data())) throw DataError("k-means: non-finite training feature");

  std::mt19937_64 rng(options.seed);
  std::vector<double> centroids = seed_plus_plus(features, k, rng);

  constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> labels(n, kUnassigned);
  std::vector<double> dists(n, 0.0);
  TrainingMeta meta;

  const std::size_t chunks = chunk_count(n, kAssignChunk);
  std::vector<ChunkStats> partial(chunks);

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    parallel_chunks(n, kAssignChunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
      ChunkStats& st = partial[c];
      st.sums.assign(k * d, 0.0);
      st.counts.assign(k, 0);
      st.inertia = 0.0;
      st.changed = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto x = features.row(i);
        const auto [best, dist] = nearest(x, centroids, k, d);
        if (labels[i] != best) ++st.changed;
        labels[i] = best;
        dists[i] = dist;
        st.inertia += dist;
        st.counts[best] += 1;
        double* sum = st.sums.data() + best * d;
        for (std::size_t j = 0; j < d; ++j) sum[j] += x[j];
      }
    });

    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    double inertia = 0.0;
    std::size_t changed = 0;
    for (const ChunkStats& st : partial) {
      for (std::size_t j = 0; j < k * d; ++j) sums[j] += st.sums[j];
      for (std::size_t c = 0; c < k; ++c) counts[c] += st.counts[c];
      inertia += st.inertia;
      changed += st.changed;
    }
    meta.inertia_trace.push_back(inertia);
    meta.iterations = iter + 1;
    if (iter > 0 && changed == 0) {
      meta.converged = true;
      break;
    }

    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      double* centroid = centroids.data() + c * d;
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) centroid[j] = sums[c * d + j] / counts[c];
        continue;
      }
      // Empty cluster: move it onto the feature worst served by its centroid.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && (far == n || dists[i] > dists[far])) far = i;
      }
      taken[far] = true;
      const auto x = features.row(far);
      for (std::size_t j = 0; j < d; ++j) centroid[j] = x[j];
    }
  }

  std::vector<float> out(k * d);
  for (std::size_t j = 0; j < k * d; ++j) out[j] = static_cast<float>(centroids[j]);

  Codebook provisional(k, d, out);
  double final_inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    final_inertia += squared_distance(features.row(i), provisional.centroid(assign(features.row(i), provisional)));
  }
  meta.final_inertia = final_inertia;
  return Codebook(k, d, std::move(out), std::move(meta));
}

std::size_t assign(std::span<const float> feature, const Codebook& codebook) {
  if (feature.size() != codebook.d()) {
    throw DimensionError("assign: feature dimension " + std::to_string(feature.size()) +
                         " vs codebook dimension " + std::to_string(codebook.d()));
  }
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < codebook.k(); ++c) {
    const auto centroid = codebook.centroid(c);
    double dist = 0.0;
    for (std::size_t j = 0; j < feature.size(); ++j) {
      const double diff = static_cast<double>(feature[j]) - centroid[j];
      dist += diff * diff;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = c;
    }
  }
  return best;
}

FeatureReservoir::FeatureReservoir(std::size_t target, std::uint64_t seed)
    : target_(target), rng_(seed) {
  if (target_ == 0) throw UsageError("sample target must be >= 1");
}

void FeatureReservoir::add(const LocalFeatureMap& map) {
  ++maps_;
  for (const LocalFeature& f : map.features) {
    if (!sample_.empty() && f.descriptor.size() != sample_.cols()) {
      throw DimensionError("sample: descriptor dimension " + std::to_string(f.descriptor.size()) +
                           " vs " + std::to_string(sample_.cols()));
    }
    if (sample_.rows() < target_) {
      sample_.push_row(f.descriptor);
    } else {
      // Algorithm R: keep the (seen+1)-th item with probability target/(seen+1).
      std::uniform_int_distribution<std::uint64_t> slot(0, seen_);
      const std::uint64_t j = slot(rng_);
      if (j < target_) {
        auto row = sample_.row(static_cast<std::size_t>(j));
        std::copy(f.descriptor.begin(), f.descriptor.end(), row.begin());
      }
    }
    ++seen_;
  }
}

Matrix FeatureReservoir::take() && {
  if (maps_ == 0 || seen_ == 0) throw InsufficientDataError("sample: empty feature stream");
  return std::move(sample_);
}

Matrix sample_features(std::span<const LocalFeatureMap> maps, std::size_t target,
                       std::uint64_t seed) {
  FeatureReservoir reservoir(target, seed);
  for (const LocalFeatureMap& m : maps) reservoir.add(m);
  return std::move(reservoir).take();
}

std::vector<std::uint8_t> encode_codebook(const Codebook& codebook) {
  io::ByteWriter w(kCodebookMagic, kCodebookVersion);
  w.u32(static_cast<std::uint32_t>(codebook.k()));
  w.u32(static_cast<std::uint32_t>(codebook.d()));
  w.f32s(codebook.centroids());
  return std::move(w).finish();
}

Codebook decode_codebook(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes), kCodebookMagic, "codebook");
  if (r.version() != kCodebookVersion) {
    throw DataError("codebook: unsupported version " + std::to_string(r.version()));
  }
  const std::uint64_t k = r.u32();
  const std::uint64_t d = r.u32();
  if (k == 0 || d == 0 || k * d * 4 != r.remaining()) {
    throw DataError("codebook: header k=" + std::to_string(k) + " d=" + std::to_string(d) +
                    " disagrees with payload size");
  }
  std::vector<float> centroids(k * d);
  r.f32s(centroids);
  r.expect_end();
  return Codebook(k, d, std::move(centroids));
}

void save_codebook(const Codebook& codebook, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_codebook(codebook));
}

Codebook load_codebook(const std::filesystem::path& path) {
  return decode_codebook(io::read_file(path));
}

}  // namespace spvp
