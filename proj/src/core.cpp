#include "spvp/core.hpp"

#include <algorithm>
#include <atomic>
#include <cfloat>
#include <cmath>
#include <string>
#include <thread>

namespace spvp {

namespace {

std::atomic<std::size_t> g_workers{0};

// A float vector whose norm is this close to 1 is already unit length at
// float precision; rescaling would only flip low-order bits.
constexpr double kUnitTolerance = 4.0 * FLT_EPSILON;

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kSpvp: return "spvp";
    case Method::kVlad: return "vlad";
    case Method::kBovw: return "bovw";
    case Method::kMac: return "mac";
    case Method::kSpoc: return "spoc";
    case Method::kGem: return "gem";
  }
  throw DataError("unknown method tag " + std::to_string(static_cast<int>(m)));
}

Method parse_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Method m : {Method::kSpvp, Method::kVlad, Method::kBovw, Method::kMac, Method::kSpoc,
                   Method::kGem}) {
    if (method_name(m) == lower) return m;
  }
  throw UsageError("unknown method '" + std::string(name) + "'");
}

void Matrix::push_row(std::span<const float> values) {
  if (rows_ == 0 && cols_ == 0) {
    cols_ = values.size();
  } else if (values.size() != cols_) {
    throw DimensionError("matrix row has " + std::to_string(values.size()) +
                         " columns, expected " + std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

double l2_norm(std::span<const float> v) {
  double sum = 0.0;
  for (float x : v) sum += static_cast<double>(x) * x;
  return std::sqrt(sum);
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

void l2_normalize_inplace(std::span<float> v) {
  const double norm = l2_norm(v);
  if (norm <= kNormEpsilon || std::abs(norm - 1.0) <= kUnitTolerance) return;
  for (float& x : v) x = static_cast<float>(x / norm);
}

void l2_normalize_inplace(std::span<double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  const double norm = std::sqrt(sum);
  if (norm <= kNormEpsilon) return;
  for (double& x : v) x /= norm;
}

std::vector<float> l2_normalize(std::span<const float> v) {
  std::vector<float> out(v.begin(), v.end());
  l2_normalize_inplace(std::span<float>(out));
  return out;
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw DimensionError("distance: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sum += d * d;
  }
  return sum;
}

double euclidean_distance(std::span<const float> a, std::span<const float> b) {
  return std::sqrt(squared_distance(a, b));
}

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

void validate_feature(const LocalFeature& f, std::size_t dim) {
  if (!(f.x >= 0.0f && f.x <= 1.0f && f.y >= 0.0f && f.y <= 1.0f)) {
    throw DataError("feature coordinate outside [0,1]: (" + std::to_string(f.x) + ", " +
                    std::to_string(f.y) + ")");
  }
  if (f.descriptor.size() != dim) {
    throw DimensionError("feature descriptor has dimension " +
                         std::to_string(f.descriptor.size()) + ", expected " +
                         std::to_string(dim));
  }
  if (!all_finite(f.descriptor)) throw DataError("feature descriptor contains non-finite values");
}

void validate_geo(const GeoRecord& g) {
  if (!(g.latitude >= -90.0 && g.latitude <= 90.0)) {
    throw DataError("latitude out of range for '" + g.image_id + "'");
  }
  if (!(g.longitude >= -180.0 && g.longitude <= 180.0)) {
    throw DataError("longitude out of range for '" + g.image_id + "'");
  }
  if (g.yaw && !(*g.yaw >= 0.0 && *g.yaw < 360.0)) {
    throw DataError("yaw out of range [0,360) for '" + g.image_id + "'");
  }
}

void set_worker_count(std::size_t workers) { g_workers.store(workers); }

std::size_t worker_count() {
  const std::size_t configured = g_workers.load();
  if (configured > 0) return configured;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  chunk_size = std::max<std::size_t>(1, chunk_size);
  const std::size_t chunks = chunk_count(n, chunk_size);
  const std::size_t workers = std::min(worker_count(), chunks);
  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * chunk_size;
    fn(c, begin, std::min(n, begin + chunk_size));
  };
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t c = next++; c < chunks && !failed; c = next++) {
        try {
          run_chunk(c);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace spvp
