#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "spvp/evaluation.hpp"
#include "test_support.hpp"

using namespace spvp;

namespace {

GeoRecord geo(const std::string& id, double lat, double lon) { return {id, lat, lon, std::nullopt}; }

// Ground truth straight from explicit sets.
GroundTruth truth(std::map<std::string, std::unordered_set<std::string>> sets) {
  GroundTruth gt;
  gt.threshold_m = 25;
  gt.correct = std::move(sets);
  return gt;
}

RankedResult ranked(const std::string& q, std::vector<std::string> ids) {
  RankedResult r{q, {}};
  double d = 0.0;
  for (auto& id : ids) r.hits.push_back({std::move(id), d += 0.1});
  return r;
}

}  // namespace

TEST(Haversine, Examples) {
  const GeoRecord a = geo("a", 36.35, 127.38);
  EXPECT_EQ(haversine_m(a, a), 0.0);
  EXPECT_NEAR(haversine_m(geo("o", 0, 0), geo("e", 0, 0.001)), 111.195, 0.1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-179, 179);
  for (int i = 0; i < 100; ++i) {
    const GeoRecord p = geo("p", lat(rng), lon(rng)), q = geo("q", lat(rng), lon(rng));
    EXPECT_NEAR(haversine_m(p, q), haversine_m(q, p), 1e-9);
    EXPECT_NEAR(haversine_m(p, q), test::oracle_haversine(p.latitude, p.longitude, q.latitude, q.longitude),
                1e-6);
  }
}

TEST(GroundTruth, StrictThresholdAndEmptySets) {
  const std::vector<GeoRecord> db{geo("near", 0, 0.0001), geo("far", 0, 0.01)};
  const std::vector<GeoRecord> qs{geo("q", 0, 0)};
  const double d_near = haversine_m(qs[0], db[0]);
  auto gt = build_ground_truth(qs, db, d_near);
  EXPECT_TRUE(gt.correct_for("q").empty());  // exactly at D is excluded
  gt = build_ground_truth(qs, db, std::nextafter(d_near, 1e9));
  EXPECT_EQ(gt.correct_for("q"), (std::unordered_set<std::string>{"near"}));
  gt = build_ground_truth(qs, db, 1.0);
  EXPECT_TRUE(gt.correct_for("q").empty());
  EXPECT_THROW(build_ground_truth(qs, db, 0.0), UsageError);
  EXPECT_THROW(build_ground_truth(std::vector<GeoRecord>{qs[0], qs[0]}, db, 5.0), DataError);
  EXPECT_THROW(gt.correct_for("other"), DataError);
}

TEST(GroundTruth, MatchesAllPairsOracle) {
  std::mt19937_64 rng(2);
  const auto qs = test::random_geo("q", 100, 36.35, 127.38, 0.0015, rng);
  const auto db = test::random_geo("d", 10000, 36.35, 127.38, 0.0015, rng);
  const GroundTruth gt = build_ground_truth(qs, db, 25.0);
  std::size_t nonempty = 0;
  for (const auto& q : qs) {
    std::unordered_set<std::string> want;
    for (const auto& d : db) {
      if (test::oracle_haversine(q.latitude, q.longitude, d.latitude, d.longitude) < 25.0) want.insert(d.image_id);
    }
    EXPECT_EQ(gt.correct_for(q.image_id), want);
    nonempty += !want.empty();
  }
  EXPECT_GT(nonempty, 50u);
}

TEST(Metrics, RecallExamples) {
  const auto gt = truth({{"q1", {"a"}}, {"q2", {"b"}}});
  const std::vector<RankedResult> all_first{ranked("q1", {"a", "x"}), ranked("q2", {"b", "y"})};
  EXPECT_EQ(recall_at_n(all_first, gt, 1), 1.0);
  const std::vector<RankedResult> none{ranked("q1", {"x", "y"}), ranked("q2", {"x", "y"})};
  EXPECT_EQ(recall_at_n(none, gt, 2), 0.0);
  const std::vector<RankedResult> mixed{ranked("q1", {"x", "a"}), ranked("q2", {"b", "y"})};
  EXPECT_EQ(recall_at_n(mixed, gt, 1), 0.5);
  EXPECT_EQ(recall_at_n(mixed, gt, 2), 1.0);
  EXPECT_THROW(recall_at_n(mixed, gt, 3), UsageError);
  EXPECT_THROW(recall_at_n(mixed, gt, 0), UsageError);
}

TEST(Metrics, PrecisionExamples) {
  const auto gt = truth({{"q1", {"a", "b", "c"}}, {"q2", {"z"}}});
  std::vector<RankedResult> rs;
  for (const char* q : {"q1", "q2"}) {
    std::vector<std::string> ids(10, "");
    for (int i = 0; i < 10; ++i) ids[i] = "n" + std::to_string(i);
    ids[4] = std::string(q) == "q1" ? "a" : "z";
    rs.push_back(ranked(q, ids));
  }
  EXPECT_DOUBLE_EQ(precision_at_n(rs, gt, 10), 0.1);
  EXPECT_DOUBLE_EQ(mean_correct_at_n(rs, gt, 10), 1.0);

  // Hand count: q1 ranks a,x,b,c,y -> top3 has 2 correct; q2 ranks z,w,v,u,t -> 1; q3 nothing.
  const auto gt2 = truth({{"q1", {"a", "b", "c"}}, {"q2", {"z"}}, {"q3", {}}});
  const std::vector<RankedResult> rs2{ranked("q1", {"a", "x", "b", "c", "y"}),
                                      ranked("q2", {"z", "w", "v", "u", "t"}),
                                      ranked("q3", {"a", "b", "c", "d", "e"})};
  EXPECT_DOUBLE_EQ(precision_at_n(rs2, gt2, 3), (2.0 + 1.0 + 0.0) / (3 * 3));
  EXPECT_DOUBLE_EQ(precision_at_n(rs2, gt2, 5), (3.0 + 1.0 + 0.0) / (3 * 5));
  EXPECT_DOUBLE_EQ(precision_at_n(rs2, gt2, 1), recall_at_n(rs2, gt2, 1));
  EXPECT_DOUBLE_EQ(recall_at_n(rs2, gt2, 5), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(recall_at_n(rs2, gt2, 5, {true}), 1.0);
}

TEST(Metrics, ReportAndSweep) {
  std::mt19937_64 rng(3);
  const auto qs = test::random_geo("q", 40, 36.35, 127.38, 0.0004, rng);
  const auto db = test::random_geo("d", 300, 36.35, 127.38, 0.0004, rng);
  std::vector<RankedResult> rs;
  std::uniform_int_distribution<std::size_t> pick(0, db.size() - 1);
  for (const auto& q : qs) {
    std::vector<std::string> ids;
    for (int k = 0; k < 20; ++k) ids.push_back(db[pick(rng)].image_id);
    rs.push_back(ranked(q.image_id, ids));
  }
  const std::vector<double> ds{10, 20, 30, 40, 50};
  const std::vector<std::size_t> ns{1, 2, 5, 10, 15, 20};
  const auto reports = threshold_sweep(rs, qs, db, ds, ns);
  ASSERT_EQ(reports.size(), 5u);
  for (std::size_t r = 0; r < reports.size(); ++r) {
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const auto& row = reports[r].rows[i];
      EXPECT_EQ(row.n, ns[i]);
      if (i > 0) EXPECT_LE(reports[r].rows[i - 1].recall, row.recall);
      if (r > 0) EXPECT_LE(reports[r - 1].rows[i].recall, row.recall);
      EXPECT_GE(row.precision, 0.0);
      EXPECT_LE(row.precision, 1.0);
    }
    EXPECT_EQ(reports[r].at(1).recall, reports[r].at(1).precision);
    std::size_t firsts = 0;
    for (const auto& [q, rank] : reports[r].first_hit_rank) firsts += rank == 1u;
    EXPECT_DOUBLE_EQ(reports[r].at(1).recall, static_cast<double>(firsts) / qs.size());
  }
  const std::vector<double> d25{25};
  const auto single = threshold_sweep(rs, qs, db, d25, ns);
  EXPECT_EQ(single[0].at(5).recall, recall_at_n(rs, build_ground_truth(qs, db, 25), 5));
  EXPECT_THROW(threshold_sweep(rs, qs, db, std::vector<double>{}, ns), UsageError);

  const std::string jsonl = format_report(reports);
  EXPECT_EQ(std::count(jsonl.begin(), jsonl.end(), '\n'), 30);
  EXPECT_NE(jsonl.find("\"mean_correct_at_n\""), std::string::npos);
  const std::string ranks = format_first_hits(reports);
  EXPECT_EQ(ranks.rfind("query_id\tD\tfirst_hit_rank\n", 0), 0u);
}

TEST(Metrics, PlantedCopiesGiveFullRecall) {
  std::mt19937_64 rng(4);
  const auto db = test::random_geo("d", 200, 36.35, 127.38, 0.01, rng);
  std::vector<GeoRecord> qs;
  std::vector<RankedResult> rs;
  for (std::size_t i = 0; i < 20; ++i) {
    qs.push_back(geo("q" + std::to_string(i), db[i * 7].latitude, db[i * 7].longitude));
    rs.push_back(ranked(qs.back().image_id, {db[i * 7].image_id, "x"}));
  }
  const std::vector<double> ds{1, 10, 50};
  const std::vector<std::size_t> ns{1};
  for (const auto& rep : threshold_sweep(rs, qs, db, ds, ns)) EXPECT_EQ(rep.at(1).recall, 1.0);
}
