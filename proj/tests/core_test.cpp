#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "spvp/core.hpp"
#include "test_support.hpp"

using namespace spvp;

TEST(L2Normalize, Examples) {
  const std::vector<float> a{3, 4};
  EXPECT_EQ(l2_normalize(a), (std::vector<float>{0.6f, 0.8f}));
  const std::vector<float> z{0, 0, 0};
  EXPECT_EQ(l2_normalize(z), z);
  const std::vector<float> ones{1, 1, 1, 1};
  EXPECT_EQ(l2_normalize(ones), (std::vector<float>{0.5f, 0.5f, 0.5f, 0.5f}));
}

TEST(L2Normalize, BelowEpsilonUnchanged) {
  const std::vector<float> tiny{1e-14f, 0.0f};
  EXPECT_EQ(l2_normalize(tiny), tiny);
}

TEST(L2Normalize, IdempotentAndUnit) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<float> v = test::random_vector(1 + t % 64, rng, false);
    for (float& x : v) x *= static_cast<float>(1 + t);
    const auto once = l2_normalize(v);
    const auto twice = l2_normalize(once);
    EXPECT_NEAR(l2_norm(once), 1.0, 1e-6);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-9);
  }
}

TEST(Distance, Examples) {
  const std::vector<float> a{1, 2, 3};
  EXPECT_EQ(euclidean_distance(a, a), 0.0);
  const std::vector<float> o{0, 0}, p{3, 4};
  EXPECT_DOUBLE_EQ(euclidean_distance(o, p), 5.0);
  const std::vector<float> q{1, 2};
  EXPECT_THROW(euclidean_distance(a, q), DimensionError);
}

TEST(Distance, MatchesScalarLoop) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto a = test::random_vector(40, rng, false);
    const auto b = test::random_vector(40, rng, false);
    const double oracle = std::sqrt(test::oracle_sq_dist(a, b.data()));
    EXPECT_NEAR(euclidean_distance(a, b), oracle, 1e-9);
    EXPECT_EQ(euclidean_distance(a, b), euclidean_distance(b, a));
  }
}

TEST(Distance, UnitVectorCosineIdentity) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto a = test::random_vector(40, rng);
    const auto b = test::random_vector(40, rng);
    const double lhs = squared_distance(a, b);
    const double rhs = 2.0 - 2.0 * dot(a, b);
    // Inputs are float unit vectors; their norms deviate from 1 at float precision.
    const double na = dot(a, a), nb = dot(b, b);
    EXPECT_NEAR(lhs, na + nb - 2.0 * dot(a, b), 1e-9);
    EXPECT_NEAR(lhs, rhs, 1e-6);
  }
}

TEST(Validation, Feature) {
  LocalFeature f{0.5f, 0.5f, {1.0f, 0.0f}};
  EXPECT_NO_THROW(validate_feature(f, 2));
  EXPECT_THROW(validate_feature(f, 3), DimensionError);
  f.x = 1.5f;
  EXPECT_THROW(validate_feature(f, 2), DataError);
  f.x = 0.5f;
  f.descriptor[0] = std::nanf("");
  EXPECT_THROW(validate_feature(f, 2), DataError);
}

TEST(Validation, Geo) {
  EXPECT_NO_THROW(validate_geo({"a", 36.0, 127.0, 45.0}));
  EXPECT_THROW(validate_geo({"a", 91.0, 0.0, std::nullopt}), DataError);
  EXPECT_THROW(validate_geo({"a", 0.0, -181.0, std::nullopt}), DataError);
  EXPECT_THROW(validate_geo({"a", 0.0, 0.0, 360.0}), DataError);
}

TEST(Methods, NamesRoundTrip) {
  for (Method m : {Method::kSpvp, Method::kVlad, Method::kBovw, Method::kMac, Method::kSpoc, Method::kGem}) {
    EXPECT_EQ(parse_method(method_name(m)), m);
  }
  EXPECT_EQ(parse_method("SPoC"), Method::kSpoc);
  EXPECT_THROW(parse_method("netvlad"), UsageError);
}

TEST(Parallel, CoversRangeAndPropagatesErrors) {
  set_worker_count(4);
  std::vector<std::atomic<int>> seen(1000);
  parallel_chunks(seen.size(), 7, [&](std::size_t c, std::size_t b, std::size_t e) {
    EXPECT_EQ(b, c * 7);
    for (std::size_t i = b; i < e; ++i) seen[i]++;
  });
  for (auto& s : seen) EXPECT_EQ(s.load(), 1);
  EXPECT_THROW(parallel_chunks(100, 10,
                               [](std::size_t c, std::size_t, std::size_t) {
                                 if (c == 3) throw DataError("boom");
                               }),
               DataError);
  set_worker_count(0);
}
