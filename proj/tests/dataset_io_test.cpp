#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "spvp/binary_io.hpp"
#include "spvp/dataset_io.hpp"
#include "test_support.hpp"

using namespace spvp;
namespace fs = std::filesystem;

namespace {

// Reference PVFM reader written against the byte layout alone.
struct RefFeature {
  float x, y;
  std::vector<float> d;
};

template <typename T>
T le(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  T v{};
  std::uint8_t tmp[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) tmp[i] = b.at(pos + i);
  std::memcpy(&v, tmp, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::vector<RefFeature> reference_parse(const std::vector<std::uint8_t>& b) {
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "PVFM");
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < b.size() - 8; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  std::size_t end = b.size() - 8;
  EXPECT_EQ(le<std::uint64_t>(b, end), h);
  std::size_t pos = 4;
  EXPECT_EQ(le<std::uint16_t>(b, pos), 1);
  pos += 1;  // normalized flag
  const auto count = le<std::uint32_t>(b, pos);
  const auto dim = le<std::uint16_t>(b, pos);
  pos += 4;  // width, height
  std::vector<RefFeature> out(count);
  for (auto& f : out) {
    f.x = le<float>(b, pos);
    f.y = le<float>(b, pos);
    f.d.resize(dim);
    for (float& v : f.d) v = le<float>(b, pos);
  }
  EXPECT_EQ(pos, b.size() - 8);
  return out;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST(FeatureFile, RoundTripNormalized) {
  std::mt19937_64 rng(1);
  const auto map = test::random_map("img", 50, 40, rng);
  const auto dir = test::scratch_dir("pvfm_rt");
  save_feature_map(map, dir / "img.pvfm", true);
  FeatureFileHeader h;
  const auto back = load_feature_map(dir / "img.pvfm", 40, &h);
  EXPECT_TRUE(h.normalized);
  EXPECT_EQ(h.count, 50u);
  EXPECT_EQ(h.dim, 40u);
  EXPECT_EQ(back.image_id, "img");
  EXPECT_EQ(back.source_width, 640);
  EXPECT_EQ(back.source_height, 480);
  ASSERT_EQ(back.features.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(back.features[i].x, map.features[i].x);
    EXPECT_EQ(back.features[i].y, map.features[i].y);
    EXPECT_EQ(back.features[i].descriptor, map.features[i].descriptor);
  }
  EXPECT_EQ(encode_feature_map(back, true), io::read_file(dir / "img.pvfm"));
}

TEST(FeatureFile, UnnormalizedIsRenormalizedOnLoad) {
  LocalFeatureMap map;
  map.features = {{0.1f, 0.2f, {3, 4}}, {1.0f, 0.0f, {0, 0}}};
  const auto back = decode_feature_map(encode_feature_map(map, false), "x");
  EXPECT_EQ(back.features[0].descriptor, (std::vector<float>{0.6f, 0.8f}));
  EXPECT_EQ(back.features[1].descriptor, (std::vector<float>{0, 0}));
  EXPECT_THROW(decode_feature_map(encode_feature_map(map, true), "x"), DataError);
}

TEST(FeatureFile, EmptyMap) {
  LocalFeatureMap map;
  const auto back = decode_feature_map(encode_feature_map(map, true), "e", 40);
  EXPECT_TRUE(back.features.empty());
}

TEST(FeatureFile, ErrorsAreChecked) {
  std::mt19937_64 rng(2);
  const auto map = test::random_map("img", 10, 8, rng);
  const auto good = encode_feature_map(map, true);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, good.size() / 2, good.size() - 1}) {
    auto b = good;
    b.resize(cut);
    EXPECT_THROW(decode_feature_map(b, "t"), DataError) << "cut " << cut;
  }
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_feature_map(bad_magic, "t"), DataError);
  EXPECT_THROW(decode_feature_map(good, "t", 40), DimensionError);

  LocalFeatureMap outside = map;
  outside.features[0].x = 1.5f;
  EXPECT_THROW(encode_feature_map(outside, true), DataError);

  const auto dir = test::scratch_dir("pvfm_err");
  EXPECT_THROW(load_feature_map(dir / "missing.pvfm"), DataError);
  auto flipped = good;
  flipped[30] ^= 0xFF;
  io::write_file_atomic(dir / "bad.pvfm", flipped);
  try {
    load_feature_map(dir / "bad.pvfm");
    FAIL() << "corrupt file accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.pvfm"), std::string::npos);
  }
}

TEST(FeatureFile, MatchesReferenceParser) {
  std::mt19937_64 rng(3);
  const auto map = test::random_map("big", 10000, 40, rng);
  const auto bytes = encode_feature_map(map, true);
  const auto ref = reference_parse(bytes);
  const auto got = decode_feature_map(bytes, "big");
  ASSERT_EQ(ref.size(), got.features.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_EQ(ref[i].x, got.features[i].x);
    EXPECT_EQ(ref[i].y, got.features[i].y);
    ASSERT_EQ(ref[i].d, got.features[i].descriptor);
  }
}

TEST(Manifest, LoadResolvesAndSelects) {
  const auto dir = test::scratch_dir("manifest_ok");
  fs::create_directories(dir / "f");
  std::mt19937_64 rng(4);
  save_feature_map(test::random_map("a", 3, 4, rng), dir / "f" / "a.pvfm", true);
  save_feature_map(test::random_map("b", 5, 4, rng), dir / "f" / "b.pvfm", true);
  write_text(dir / "m.csv",
             "\xEF\xBB\xBFimage_id,path,latitude,longitude,yaw,split\r\n"
             "a,f/a.pvfm,36.35,127.38,45,database\r\n"
             "b,f/b.pvfm,36.3501,127.38,,query\r\n");
  const Manifest m = load_manifest(dir / "m.csv");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].geo.yaw, 45.0);
  EXPECT_FALSE(m.records[1].geo.yaw.has_value());
  EXPECT_EQ(m.resolve(m.records[1]), dir / "f" / "b.pvfm");
  EXPECT_EQ(m.select(Split::kQuery).size(), 1u);
  EXPECT_EQ(m.geo(Split::kDatabase)[0].image_id, "a");

  const auto v = validate_manifest(dir / "m.csv");
  EXPECT_EQ(v.database, 1u);
  EXPECT_EQ(v.queries, 1u);
  EXPECT_EQ(v.features, 8u);
  EXPECT_EQ(v.dim, 4u);
  EXPECT_THROW(validate_manifest(dir / "m.csv", 40), DimensionError);

  // format -> load round trip
  save_manifest(m, dir / "m2.csv");
  const Manifest again = load_manifest(dir / "m2.csv");
  EXPECT_EQ(again.records[1].geo.latitude, m.records[1].geo.latitude);
  EXPECT_EQ(again.records[1].split, Split::kQuery);
}

TEST(Manifest, RejectsBadInput) {
  const auto dir = test::scratch_dir("manifest_bad");
  std::mt19937_64 rng(5);
  save_feature_map(test::random_map("a", 3, 4, rng), dir / "a.pvfm", true);
  const std::string header = "image_id,path,latitude,longitude,yaw,split\n";
  const std::vector<std::string> bad{
      "",
      "id,path,lat,lon,yaw,split\na,a.pvfm,0,0,,database\n",
      header + "a,a.pvfm,0,0,database\n",
      header + "a,a.pvfm,0,0,,train\n",
      header + "a,a.pvfm,95,0,,database\n",
      header + "a,a.pvfm,x,0,,database\n",
      header + "a,a.pvfm,0,0,400,database\n",
      header + "a,a.pvfm,0,0,,database\na,a.pvfm,0,0,,query\n",
      header + "a,a.pvfm,0,0,,database\nb,missing.pvfm,0,0,,query\n",
      header + ",a.pvfm,0,0,,database\n",
  };
  for (std::size_t i = 0; i < bad.size(); ++i) {
    write_text(dir / "m.csv", bad[i]);
    EXPECT_THROW(load_manifest(dir / "m.csv"), DataError) << "case " << i;
  }
  EXPECT_THROW(load_manifest(dir / "nope.csv"), DataError);
}
