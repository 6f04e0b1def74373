#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "fixtures.hpp"
#include "rtfe/bench.hpp"
#include "rtfe/error.hpp"
#include "rtfe/exec.hpp"
#include "rtfe/formats.hpp"

namespace rtfe::exec {
namespace {

using plan::OptimizationFlags;
using testing::compile;

constexpr const char* kAvg3 =
    "SELECT AVG(amount) OVER w FROM tx WINDOW w AS (PARTITION BY user ORDER BY ts ROWS BETWEEN 3 "
    "PRECEDING AND 1 PRECEDING)";

class ExecTest : public ::testing::Test {
 protected:
  void SetUp() override {
    catalog_ = testing::make_catalog(std::uint64_t{1} << 32, 8);
    catalog_->create_table(testing::tx_schema());
    models_ = testing::default_models();
  }

  auto plan(std::string_view sql, OptimizationFlags flags = OptimizationFlags::all_on(),
            bool strict_w = false) {
    return compile(sql, *catalog_, *models_, flags, strict_w);
  }

  void load_random(std::uint64_t seed, std::size_t keys, std::size_t max_events) {
    std::mt19937_64 rng(seed);
    records_ = testing::random_events(rng, keys, max_events);
    testing::ingest_all(*catalog_, "tx", records_);
  }

  std::shared_ptr<Catalog> catalog_;
  std::shared_ptr<MlRegistry> models_;
  std::vector<Record> records_;
};

TEST_F(ExecTest, AverageOfThreePrecedingEvents) {
  for (int t = 1; t <= 5; ++t) catalog_->ingest("tx", testing::tx(1, t, static_cast<double>(t)));
  for (const auto& flags : {OptimizationFlags::all_on(), OptimizationFlags::all_off()}) {
    LatencyBreakdown lat;
    const auto row = execute_request(*plan(kAvg3, flags), Key{std::int64_t{1}}, 5, &lat);
    ASSERT_EQ(row.values.size(), 1u);
    EXPECT_EQ(row.values[0], Value{3.0});
    EXPECT_EQ(row.ts, 5);
    EXPECT_EQ((*row.names)[0], "avg_amount_w");
    EXPECT_LE(lat.parts_ns(), lat.total_ns);
  }
}

TEST_F(ExecTest, AverageDividesByWindowInStrictMode) {
  for (int t = 1; t <= 2; ++t) catalog_->ingest("tx", testing::tx(1, t, 6.0));
  const Key k{std::int64_t{1}};
  EXPECT_EQ(execute_request(*plan(kAvg3), k, 3).values[0], Value{6.0});
  EXPECT_EQ(execute_request(*plan(kAvg3, OptimizationFlags::all_on(), true), k, 3).values[0],
            Value{4.0});
  EXPECT_EQ(execute_request(*plan(kAvg3, OptimizationFlags::all_off(), true), k, 3).values[0],
            Value{4.0});
}

TEST_F(ExecTest, AnchorAfterLastEvent) {
  for (int t = 1; t <= 5; ++t) catalog_->ingest("tx", testing::tx(1, t, static_cast<double>(t)));
  EXPECT_EQ(execute_request(*plan(kAvg3), Key{std::int64_t{1}}, 100).values[0], Value{4.0});
}

TEST_F(ExecTest, UnknownKeyGivesIdentities) {
  catalog_->ingest("tx", testing::tx(1, 1, 1.0));
  const auto p = plan(
      "SELECT SUM(amount) OVER w, COUNT(amount) OVER w, AVG(amount) OVER w, MIN(qty) OVER w, "
      "MAX(qty) OVER w, SPEND_SCORE(avg_amount_w) FROM tx WINDOW w AS (PARTITION BY user ORDER BY "
      "ts ROWS BETWEEN 3 PRECEDING AND 1 PRECEDING)");
  const auto row = execute_request(*p, Key{std::int64_t{99}}, 5);
  ASSERT_EQ(row.values.size(), 6u);
  EXPECT_EQ(row.values[0], Value{0.0});
  EXPECT_EQ(row.values[1], Value{std::int64_t{0}});
  EXPECT_TRUE(is_null(row.values[2]));
  EXPECT_TRUE(is_null(row.values[3]));
  EXPECT_TRUE(is_null(row.values[4]));
  EXPECT_TRUE(is_null(row.values[5]));  // null input, null score
}

TEST(MlFunction, ExampleScores) {
  MlFunction half{"HALF", {0.0}, 0.0, Link::kLogistic};
  const double zero[] = {0.0};
  EXPECT_EQ(half.evaluate(zero), 0.5);
  MlFunction lin{"LIN", {2.0, 3.0}, 1.0, Link::kIdentity};
  const double ones[] = {1.0, 1.0};
  EXPECT_EQ(lin.evaluate(ones), 6.0);
  MlFunction sat{"SAT", {10.0}, 0.0, Link::kLogistic};
  const double big[] = {100.0};
  EXPECT_NEAR(sat.evaluate(big), 1.0, 1e-9);
  EXPECT_LT(sat.evaluate(big), 1.0 + 1e-15);
}

TEST(MlRegistry, RegistrationErrors) {
  MlRegistry r;
  r.register_function({"F", {1.0}, 0.0, Link::kIdentity});
  try {
    r.register_function({"F", {2.0}, 0.0, Link::kIdentity});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateName);
  }
  try {
    r.register_function({"G", {std::numeric_limits<double>::infinity()}, 0.0, Link::kIdentity});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteWeight);
  }
  try {
    r.register_function({"H", {1.0}, std::nan(""), Link::kIdentity});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteWeight);
  }
  EXPECT_EQ(r.names(), std::vector<std::string>{"F"});
  EXPECT_NE(r.find("F"), nullptr);
  EXPECT_EQ(r.find("G"), nullptr);
}

TEST_F(ExecTest, ZeroWeightLogisticScoresHalfRegardlessOfData) {
  models_->register_function({"FLAT_CHURN", {0.0}, 0.0, Link::kLogistic});
  load_random(3, 4, 50);
  const auto p = plan(
      "SELECT AVG(amount) OVER w, FLAT_CHURN(avg_amount_w) FROM tx WINDOW w AS (PARTITION BY "
      "user ORDER BY ts ROWS BETWEEN 5 PRECEDING AND CURRENT ROW)");
  const auto batch = execute_batch(*p, 1);
  ASSERT_FALSE(batch.rows.empty());
  for (const auto& row : batch.rows) {
    if (is_null(row.values[0])) {
      EXPECT_TRUE(is_null(row.values[1]));
    } else {
      EXPECT_EQ(row.values[1], Value{0.5});
    }
  }
}

TEST_F(ExecTest, MlOverFeatureAndColumn) {
  catalog_->ingest("tx", testing::tx(1, 1, 10.0, std::int64_t{3}));
  catalog_->ingest("tx", testing::tx(1, 2, 20.0, std::int64_t{4}));
  const auto p = plan(
      "SELECT SUM(amount) OVER w, PREDICT_CHURN(sum_amount_w, qty) FROM tx WINDOW w AS "
      "(PARTITION BY user ORDER BY ts ROWS BETWEEN 5 PRECEDING AND 1 PRECEDING)");
  const auto row = execute_request(*p, Key{std::int64_t{1}}, 2);
  const auto fn = models_->find("PREDICT_CHURN");
  const double x[] = {10.0, 4.0};
  EXPECT_EQ(row.values[1], Value{fn->evaluate(x)});
}

// Request rows against the brute-force window loop.
TEST_F(ExecTest, StrategiesMatchOracle) {
  load_random(11, 6, 400);
  std::vector<std::vector<Record>> by_key(6);
  for (const auto& r : records_) by_key[std::get<std::int64_t>(r.values[0])].push_back(r);
  std::mt19937_64 rng(12);
  const char* fns[] = {"SUM", "AVG", "COUNT", "MIN", "MAX"};
  for (int c = 0; c < 300; ++c) {
    const auto kind = static_cast<AggregateKind>(rng() % 5);
    const std::size_t col = 2 + rng() % 2;
    Frame frame;
    std::string frame_sql;
    if (rng() % 2) {
      const auto w = 1 + static_cast<std::int64_t>(rng() % 200);
      const bool cur = rng() % 2;
      frame = RowsFrame{w, cur};
      frame_sql = "ROWS BETWEEN " + std::to_string(w) + " PRECEDING AND " +
                  (cur ? "CURRENT ROW" : "1 PRECEDING");
    } else {
      const auto d = 1 + static_cast<std::int64_t>(rng() % 300);
      frame = RangeFrame{d};
      frame_sql = "RANGE BETWEEN " + std::to_string(d) + "ms PRECEDING AND CURRENT ROW";
    }
    const std::string sql = std::string("SELECT ") + fns[static_cast<int>(kind)] + "(" +
                            (col == 2 ? "amount" : "qty") +
                            ") OVER w FROM tx WINDOW w AS (PARTITION BY user ORDER BY ts " +
                            frame_sql + ")";
    const auto fast = plan(sql);
    const auto slow = plan(sql, OptimizationFlags::all_off());
    ASSERT_EQ(fast->passes[0].strategy, plan::Strategy::kPreAgg);
    ASSERT_EQ(slow->passes[0].strategy, plan::Strategy::kNaiveScan);
    const std::int64_t key = static_cast<std::int64_t>(rng() % 7);
    std::int64_t t = 1000 + static_cast<std::int64_t>(rng() % 1200);
    if (key < 6 && !by_key[key].empty() && rng() % 2) {
      t = std::get<std::int64_t>(by_key[key][rng() % by_key[key].size()].values[1]);
    }
    const Value want = key < 6 ? bench::oracle_aggregate(by_key[key], 1, col, kind, frame, t)
                               : bench::oracle_aggregate({}, 1, col, kind, frame, t);
    const auto a = execute_request(*fast, Key{key}, t).values[0];
    const auto b = execute_request(*slow, Key{key}, t).values[0];
    ASSERT_TRUE(testing::values_match(a, want)) << sql << " t=" << t << ": " << testing::show(a)
                                                << " vs " << testing::show(want);
    ASSERT_TRUE(testing::values_match(b, want)) << sql << " t=" << t << ": " << testing::show(b)
                                                << " vs " << testing::show(want);
  }
}

TEST_F(ExecTest, BatchIsInvariantInLaneCount) {
  std::mt19937_64 rng(21);
  for (std::int64_t k = 0; k < 10; ++k) {
    for (int i = 0; i < 100; ++i) {
      catalog_->ingest("tx", testing::tx(k, 1000 + i * 3 + static_cast<int>(rng() % 3),
                                         static_cast<double>(rng() % 1000) / 7.0,
                                         static_cast<std::int64_t>(rng() % 50)));
    }
  }
  const auto p = plan(
      "SELECT SUM(amount) OVER w, AVG(amount) OVER w, MAX(qty) OVER r, SPEND_SCORE(sum_amount_w) "
      "FROM tx WINDOW w AS (PARTITION BY user ORDER BY ts ROWS BETWEEN 20 PRECEDING AND 1 "
      "PRECEDING), r AS (PARTITION BY user ORDER BY ts RANGE BETWEEN 30ms PRECEDING AND CURRENT "
      "ROW)");
  const std::string reference = to_json_lines(execute_batch(*p, 1));
  EXPECT_EQ(std::count(reference.begin(), reference.end(), '\n'), 1000);
  for (std::size_t lanes : {2u, 4u, 8u}) {
    LanePool pool(lanes);
    EXPECT_EQ(to_json_lines(execute_batch(*p, pool)), reference) << lanes;
    EXPECT_LE(pool.high_water(), lanes);
  }
}

TEST_F(ExecTest, SingleKeyAcrossLanes) {
  for (int t = 1; t <= 5; ++t) catalog_->ingest("tx", testing::tx(1, t, static_cast<double>(t)));
  const auto p = plan(kAvg3);
  EXPECT_EQ(to_csv(execute_batch(*p, 1)), to_csv(execute_batch(*p, 4)));
  EXPECT_EQ(to_csv(execute_batch(*p, 1)),
            "key,ts,avg_amount_w\n1,1,\n1,2,1\n1,3,1.5\n1,4,2\n1,5,3\n");
}

TEST_F(ExecTest, EmptyTableGivesEmptyResult) {
  const auto r = execute_batch(*plan(kAvg3), 4);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(to_csv(r), "key,ts,avg_amount_w\n");
}

TEST_F(ExecTest, BatchRowsOrderedByKeyThenTime) {
  load_random(5, 7, 80);
  const auto r = execute_batch(*plan(kAvg3), 3);
  EXPECT_EQ(r.rows.size(), records_.size());
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& a = r.rows[i - 1];
    const auto& b = r.rows[i];
    ASSERT_TRUE(a.key < b.key || (a.key == b.key && a.ts <= b.ts));
  }
}

TEST_F(ExecTest, LanePoolBoundsInFlightUnits) {
  LanePool pool(3);
  std::atomic<int> running{0};
  std::atomic<int> peak{0};
  pool.parallel_for(200, [&](std::size_t) {
    const int now = running.fetch_add(1) + 1;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {}
    std::this_thread::yield();
    running.fetch_sub(1);
  });
  EXPECT_LE(peak.load(), 3);
  EXPECT_LE(pool.high_water(), 3u);
  std::size_t total = 0;
  for (auto c : pool.last_lane_counts()) total += c;
  EXPECT_EQ(total, 200u);
}

TEST_F(ExecTest, LanePoolPropagatesExceptions) {
  LanePool pool(2);
  EXPECT_THROW(pool.parallel_for(10,
                                 [](std::size_t i) {
                                   if (i == 7) throw Error(ErrorCode::kInternal, "boom");
                                 }),
               Error);
  EXPECT_EQ(pool.in_flight(), 0u);
}

TEST_F(ExecTest, RequestAndBatchAgreeOnRandomAnchors) {
  load_random(31, 10, 300);
  std::mt19937_64 rng(32);
  for (int q = 0; q < 40; ++q) {
    const std::string sql = testing::random_query(rng);
    const auto p = plan(sql);
    std::vector<Anchor> sample;
    for (int i = 0; i < 100; ++i) {
      const auto& r = records_[rng() % records_.size()];
      sample.emplace_back(Key{std::get<std::int64_t>(r.values[0])},
                          std::get<std::int64_t>(r.values[1]));
    }
    const auto report = check_consistency(*p, sample);
    ASSERT_TRUE(report.consistent())
        << sql << "\n" << report.mismatches[0].request_row << "\n" << report.mismatches[0].batch_row;
    EXPECT_EQ(report.checked + report.excluded, sample.size());
  }
}

TEST_F(ExecTest, OptimizedPlansAgreeWithBaseline) {
  load_random(41, 8, 200);
  std::mt19937_64 rng(42);
  for (int q = 0; q < 100; ++q) {
    const std::string sql = testing::random_query(rng);
    const auto fast = plan(sql);
    const auto slow = plan(sql, OptimizationFlags::all_off());
    const auto a = execute_batch(*fast, 2);
    const auto b = execute_batch(*slow, 1);
    ASSERT_EQ(a.rows.size(), b.rows.size()) << sql;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      ASSERT_EQ(a.rows[i].key, b.rows[i].key) << sql;
      ASSERT_EQ(a.rows[i].ts, b.rows[i].ts) << sql;
      ASSERT_TRUE(testing::rows_match(a.rows[i].values, b.rows[i].values))
          << sql << "\n" << a.rows[i].normalized() << "\n" << b.rows[i].normalized();
    }
    for (int i = 0; i < 20; ++i) {
      const Key key{static_cast<std::int64_t>(rng() % 9)};
      const std::int64_t t = 1000 + static_cast<std::int64_t>(rng() % 600);
      ASSERT_TRUE(testing::rows_match(execute_request(*fast, key, t).values,
                                      execute_request(*slow, key, t).values))
          << sql << " t=" << t;
    }
  }
}

TEST_F(ExecTest, EmptySampleIsConsistent) {
  load_random(1, 2, 10);
  const auto report = check_consistency(*plan(kAvg3), {});
  EXPECT_TRUE(report.consistent());
  EXPECT_EQ(report.checked, 0u);
}

TEST_F(ExecTest, CorruptedBatchRowIsReported) {
  load_random(2, 3, 50);
  const auto p = plan(kAvg3);
  auto batch = execute_batch(*p, 2);
  ASSERT_GT(batch.rows.size(), 5u);
  auto& victim = batch.rows[3];
  victim.values[0] = Value{12345.678};
  std::vector<Anchor> sample;
  for (const auto& row : batch.rows) sample.emplace_back(row.key, row.ts);
  // Tied timestamps map to the first batch row with that anchor; sample the
  // distinct anchors only.
  std::sort(sample.begin(), sample.end());
  sample.erase(std::unique(sample.begin(), sample.end()), sample.end());
  const auto report = check_consistency(*p, sample, &batch);
  const bool victim_is_first = std::find_if(batch.rows.begin(), batch.rows.end(), [&](const auto& r) {
                                 return r.key == victim.key && r.ts == victim.ts;
                               }) == batch.rows.begin() + 3;
  ASSERT_EQ(report.mismatches.size(), victim_is_first ? 1u : 0u);
  if (victim_is_first) {
    EXPECT_EQ(report.mismatches[0].batch_row, victim.normalized());
  }
}

TEST_F(ExecTest, FileBatchMatchesTableBatch) {
  load_random(41, 5, 120);
  const auto dir = std::filesystem::temp_directory_path() /
                   ("rtfe_exec_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto p = plan(
      "SELECT SUM(qty) OVER w, MIN(amount) OVER w FROM tx WINDOW w AS (PARTITION BY user ORDER BY "
      "ts ROWS BETWEEN 7 PRECEDING AND CURRENT ROW)");
  const auto expected = to_csv(execute_batch(*p, 2));
  for (const char* ext : {"in.csv", "in.jsonl"}) {
    formats::write_records(testing::tx_schema(), records_, dir / ext);
    LanePool pool(3);
    EXPECT_EQ(to_csv(execute_batch_file(*p, dir / ext, pool)), expected) << ext;
  }
  LanePool pool(1);
  try {
    execute_batch_file(*p, dir / "missing.csv", pool);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
  write_batch(execute_batch(*p, 1), dir / "out.csv");
  EXPECT_TRUE(std::filesystem::exists(dir / "out.csv"));
  std::filesystem::remove_all(dir);
}

TEST_F(ExecTest, StalePlanRejected) {
  catalog_->ingest("tx", testing::tx(1, 1, 1.0));
  auto stale = std::make_shared<plan::PhysicalPlan>(*plan(kAvg3));
  stale->schema_hash ^= 1;
  try {
    execute_request(*stale, Key{std::int64_t{1}}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStalePlan);
  }
  EXPECT_THROW(execute_batch(*stale, 1), Error);
}

TEST_F(ExecTest, OutputFormats) {
  catalog_->ingest("tx", testing::tx(1, 1, 1.0, std::int64_t{1}, std::string("x,y")));
  catalog_->ingest("tx", testing::tx(1, 2, std::monostate{}, std::int64_t{2}, std::string("z")));
  const auto p = plan(
      "SELECT MAX(amount) OVER w, category FROM tx WINDOW w AS (PARTITION BY user ORDER BY ts ROWS "
      "BETWEEN 1 PRECEDING AND CURRENT ROW)");
  const auto r = execute_batch(*p, 1);
  EXPECT_EQ(to_csv(r), "key,ts,max_amount_w,category\n1,1,1,\"x,y\"\n1,2,1,z\n");
  EXPECT_EQ(to_json_lines(r),
            "{\"key\":1,\"ts\":1,\"max_amount_w\":1,\"category\":\"x,y\"}\n"
            "{\"key\":1,\"ts\":2,\"max_amount_w\":1,\"category\":\"z\"}\n");
}

TEST_F(ExecTest, WhereFiltersAnchorsAndWindowRows) {
  catalog_->ingest("tx", testing::tx(1, 1, 1.0, std::int64_t{1}, std::string("a")));
  catalog_->ingest("tx", testing::tx(1, 2, 2.0, std::int64_t{1}, std::string("b")));
  catalog_->ingest("tx", testing::tx(1, 3, 4.0, std::int64_t{1}, std::string("a")));
  catalog_->ingest("tx", testing::tx(1, 4, 8.0, std::int64_t{1}, std::string("a")));
  const auto p = plan(
      "SELECT SUM(amount) OVER w FROM tx WHERE category = 'a' WINDOW w AS (PARTITION BY user "
      "ORDER BY ts ROWS BETWEEN 2 PRECEDING AND 1 PRECEDING)");
  EXPECT_EQ(to_csv(execute_batch(*p, 1)), "key,ts,sum_amount_w\n1,1,0\n1,3,1\n1,4,5\n");
  EXPECT_EQ(execute_request(*p, Key{std::int64_t{1}}, 4).values[0], Value{5.0});
}

}  // namespace
}  // namespace rtfe::exec
