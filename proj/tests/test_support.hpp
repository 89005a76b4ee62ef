#pragma once

// Random fixtures and brute-force oracles shared by the unit tests and the
// acceptance runner. Oracles deliberately avoid library helpers so that
// they check the implementation rather than repeat it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "spvp/codebook.hpp"
#include "spvp/core.hpp"
#include "spvp/evaluation.hpp"
#include "spvp/index.hpp"

namespace spvp::test {

inline std::vector<float> random_vector(std::size_t dim, std::mt19937_64& rng, bool unit = true) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<float> v(dim);
  for (float& x : v) x = static_cast<float>(n(rng));
  if (unit) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    const double norm = std::sqrt(s);
    for (float& x : v) x = static_cast<float>(x / norm);
  }
  return v;
}

inline LocalFeature random_feature(std::size_t dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  LocalFeature f;
  f.x = u(rng);
  f.y = u(rng);
  f.descriptor = random_vector(dim, rng);
  return f;
}

inline LocalFeatureMap random_map(const std::string& id, std::size_t count, std::size_t dim,
                                  std::mt19937_64& rng) {
  LocalFeatureMap m;
  m.image_id = id;
  m.source_width = 640;
  m.source_height = 480;
  for (std::size_t i = 0; i < count; ++i) m.features.push_back(random_feature(dim, rng));
  return m;
}

inline Codebook random_codebook(std::size_t k, std::size_t d, std::mt19937_64& rng) {
  std::vector<float> c;
  for (std::size_t i = 0; i < k; ++i) {
    const auto v = random_vector(d, rng);
    c.insert(c.end(), v.begin(), v.end());
  }
  return Codebook(k, d, std::move(c));
}

// Clustered training data: `clusters` Gaussian blobs in d dimensions.
inline Matrix blob_matrix(std::size_t n, std::size_t d, std::size_t clusters, std::mt19937_64& rng) {
  std::vector<std::vector<float>> centers;
  for (std::size_t c = 0; c < clusters; ++c) centers.push_back(random_vector(d, rng, false));
  std::normal_distribution<double> noise(0.0, 0.3);
  Matrix m;
  std::vector<float> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centers[i % clusters];
    for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(c[j] + noise(rng));
    m.push_row(row);
  }
  return m;
}

inline double oracle_sq_dist(const std::vector<float>& a, const float* b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += t * t;
  }
  return s;
}

inline std::size_t oracle_assign(const std::vector<float>& f, const Codebook& cb) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cb.k(); ++c) {
    const double d = oracle_sq_dist(f, cb.centroids().data() + c * cb.d());
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// Assign, accumulate residuals, signed square root, L2.
inline std::vector<double> oracle_vlad(const std::vector<LocalFeature>& features, const Codebook& cb) {
  const std::size_t d = cb.d();
  std::vector<double> v(cb.k() * d, 0.0);
  for (const LocalFeature& f : features) {
    const std::size_t c = oracle_assign(f.descriptor, cb);
    for (std::size_t j = 0; j < d; ++j) {
      v[c * d + j] += static_cast<double>(f.descriptor[j]) - static_cast<double>(cb.centroids()[c * d + j]);
    }
  }
  for (double& x : v) x = (x < 0 ? -1.0 : 1.0) * std::sqrt(std::abs(x));
  double s = 0.0;
  for (double x : v) s += x * x;
  if (s > 0.0) {
    const double norm = std::sqrt(s);
    for (double& x : v) x /= norm;
  }
  return v;
}

struct OracleHit {
  double dist2;
  std::string id;
};

// Sort-everything ranking by (squared distance, id).
inline std::vector<OracleHit> oracle_rank(const std::vector<Descriptor>& db, const std::vector<float>& q,
                                          std::size_t top_n) {
  std::vector<OracleHit> all;
  for (const Descriptor& d : db) all.push_back({oracle_sq_dist(q, d.values.data()), d.image_id});
  std::sort(all.begin(), all.end(), [](const OracleHit& a, const OracleHit& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.id < b.id;
  });
  if (all.size() > top_n) all.resize(top_n);
  return all;
}

// Spherical law of haversines written out independently.
inline double oracle_haversine(double lat1, double lon1, double lat2, double lon2) {
  const double r = 3.14159265358979323846 / 180.0;
  const double a = std::pow(std::sin((lat2 - lat1) * r / 2), 2) +
                   std::cos(lat1 * r) * std::cos(lat2 * r) * std::pow(std::sin((lon2 - lon1) * r / 2), 2);
  return 2.0 * 6371000.0 * std::asin(std::min(1.0, std::sqrt(a)));
}

inline std::vector<GeoRecord> random_geo(const std::string& prefix, std::size_t n, double lat0, double lon0,
                                         double spread_deg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-spread_deg, spread_deg);
  std::vector<GeoRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({prefix + std::to_string(i), lat0 + u(rng), lon0 + u(rng), std::nullopt});
  }
  return out;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("spvp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace spvp::test
