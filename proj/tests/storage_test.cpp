#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "rtfe/error.hpp"
#include "rtfe/storage.hpp"

namespace rtfe {
namespace {

using testing::make_catalog;
using testing::tx;
using testing::tx_schema;

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInternal;
}

TableSchema event_schema() {
  TableSchema s;
  s.name = "tx";
  s.columns = {{"user", ColumnType::kInt64},
               {"event_ts", ColumnType::kTimestamp},
               {"amount", ColumnType::kFloat64}};
  s.key_column = "user";
  s.ts_column = "event_ts";
  return s;
}

Record ev(std::int64_t user, std::int64_t ts, double amount = 1.0) {
  return Record{{user, ts, amount}};
}

std::vector<std::int64_t> times(const std::vector<Record>& rs, std::size_t ts_col = 1) {
  std::vector<std::int64_t> out;
  for (const auto& r : rs) out.push_back(std::get<std::int64_t>(r.values[ts_col]));
  return out;
}

TEST(CreateTable, RegistersUnderItsName) {
  auto cat = make_catalog();
  EXPECT_EQ(cat->create_table(event_schema()), "tx");
  EXPECT_NE(cat->find("tx"), nullptr);
  EXPECT_EQ(cat->table_names(), std::vector<std::string>{"tx"});
}

TEST(CreateTable, DuplicateRejected) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  EXPECT_EQ(code_of([&] { cat->create_table(event_schema()); }), ErrorCode::kDuplicateTable);
}

TEST(CreateTable, InvalidSchemas) {
  auto cat = make_catalog();
  auto no_ts = event_schema();
  no_ts.columns.erase(no_ts.columns.begin() + 1);
  EXPECT_EQ(code_of([&] { cat->create_table(no_ts); }), ErrorCode::kInvalidSchema);

  auto bad_ts_type = event_schema();
  bad_ts_type.columns[1].type = ColumnType::kInt64;
  EXPECT_EQ(code_of([&] { cat->create_table(bad_ts_type); }), ErrorCode::kInvalidSchema);

  auto float_key = event_schema();
  float_key.key_column = "amount";
  EXPECT_EQ(code_of([&] { cat->create_table(float_key); }), ErrorCode::kInvalidSchema);

  auto dup = event_schema();
  dup.columns.push_back({"amount", ColumnType::kInt64});
  EXPECT_EQ(code_of([&] { cat->create_table(dup); }), ErrorCode::kInvalidSchema);
  EXPECT_TRUE(cat->table_names().empty());
}

TEST(CreateTable, MetadataIsAccounted) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  const auto st = cat->snapshot_stats("tx");
  EXPECT_EQ(st.row_count, 0u);
  EXPECT_EQ(st.key_count, 0u);
  EXPECT_EQ(st.bytes_used, metadata_size(event_schema()));
  EXPECT_EQ(cat->memory().used(), metadata_size(event_schema()));
}

TEST(Ingest, FirstRecordGetsSeqZero) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  EXPECT_EQ(cat->ingest("tx", ev(1, 100, 5.0)).seq, 0u);
  EXPECT_EQ(cat->ingest("tx", ev(1, 100, 6.0)).seq, 1u);
  EXPECT_EQ(cat->ingest("tx", ev(2, 50)).seq, 0u);
}

TEST(Ingest, OutOfOrderRejected) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  cat->ingest("tx", ev(1, 100));
  EXPECT_EQ(code_of([&] { cat->ingest("tx", ev(1, 90)); }), ErrorCode::kOutOfOrder);
  // Other keys are independent.
  EXPECT_NO_THROW(cat->ingest("tx", ev(2, 90)));
  EXPECT_EQ(cat->snapshot_stats("tx").row_count, 2u);
}

TEST(Ingest, SchemaMismatch) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  EXPECT_EQ(code_of([&] { cat->ingest("tx", Record{{std::int64_t{1}, std::int64_t{2}}}); }),
            ErrorCode::kSchemaMismatch);
  EXPECT_EQ(code_of([&] {
              cat->ingest("tx", Record{{std::int64_t{1}, std::int64_t{2}, std::string("x")}});
            }),
            ErrorCode::kSchemaMismatch);
  EXPECT_EQ(code_of([&] {
              cat->ingest("tx", Record{{std::monostate{}, std::int64_t{2}, 1.0}});
            }),
            ErrorCode::kSchemaMismatch);
  EXPECT_EQ(code_of([&] { cat->ingest("nope", ev(1, 1)); }), ErrorCode::kUnknownTable);
  // Null non-key values are accepted.
  EXPECT_NO_THROW(cat->ingest("tx", Record{{std::int64_t{1}, std::int64_t{2}, std::monostate{}}}));
}

TEST(Ingest, MemoryLimitRejectsAtomically) {
  const auto schema = event_schema();
  const std::uint64_t rec = accounted_size(schema, ev(1, 1));
  auto cat = make_catalog(metadata_size(schema) + 3 * rec);
  cat->create_table(schema);
  for (int i = 0; i < 3; ++i) cat->ingest("tx", ev(1, i));
  const auto before = cat->snapshot_stats("tx");
  const auto tbl = cat->table("tx");
  const auto index_before = tbl->serialize_index(Key{std::int64_t{1}});
  EXPECT_EQ(code_of([&] { cat->ingest("tx", ev(1, 10)); }), ErrorCode::kResourceExhausted);
  EXPECT_EQ(code_of([&] { cat->ingest("tx", ev(7, 10)); }), ErrorCode::kResourceExhausted);
  EXPECT_EQ(cat->snapshot_stats("tx"), before);
  EXPECT_EQ(tbl->serialize_index(Key{std::int64_t{1}}), index_before);
  EXPECT_LE(cat->memory().used(), cat->memory().limit());
  EXPECT_EQ(before.row_count, 3u);
  EXPECT_EQ(before.key_count, 1u);
}

TEST(Stats, CountsSuccessfulIngestsOnly) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  cat->ingest("tx", ev(1, 10));
  cat->ingest("tx", ev(1, 20));
  EXPECT_THROW(cat->ingest("tx", ev(1, 5)), Error);
  cat->ingest("tx", ev(2, 20));
  EXPECT_EQ(cat->snapshot_stats("tx").row_count, 3u);
}

TEST(Stats, KeyCountAcrossTenKeys) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  std::set<std::int64_t> keys;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const std::int64_t k = i < 10 ? i : static_cast<std::int64_t>(rng() % 10);
    keys.insert(k);
    cat->ingest("tx", ev(k, i));
  }
  const auto st = cat->snapshot_stats("tx");
  EXPECT_EQ(st.row_count, 100u);
  EXPECT_EQ(st.key_count, keys.size());
  EXPECT_EQ(st.key_count, 10u);
  EXPECT_EQ(st.bytes_used, metadata_size(event_schema()) + 100 * accounted_size(event_schema(), ev(0, 0)));
}

TEST(Stats, UnknownTable) {
  auto cat = make_catalog();
  EXPECT_EQ(code_of([&] { cat->snapshot_stats("tx"); }), ErrorCode::kUnknownTable);
}

TEST(ScanWindow, RowsExcludesAnchor) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  for (int t = 1; t <= 5; ++t) cat->ingest("tx", ev(1, t));
  const auto rs = cat->table("tx")->scan_window(Key{std::int64_t{1}}, 5, RowsFrame{3, false});
  EXPECT_EQ(times(rs), (std::vector<std::int64_t>{2, 3, 4}));
  const auto cur = cat->table("tx")->scan_window(Key{std::int64_t{1}}, 5, RowsFrame{3, true});
  EXPECT_EQ(times(cur), (std::vector<std::int64_t>{2, 3, 4, 5}));
}

TEST(ScanWindow, UnknownKeyIsEmpty) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  cat->ingest("tx", ev(1, 1));
  EXPECT_TRUE(cat->table("tx")->scan_window(Key{std::int64_t{9}}, 5, RowsFrame{3}).empty());
}

TEST(ScanWindow, RangeIsHalfOpenOnTheLeft) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  for (std::int64_t t : {89'000, 90'000, 95'000, 100'000}) cat->ingest("tx", ev(1, t));
  const auto rs = cat->table("tx")->scan_window(Key{std::int64_t{1}}, 100'000, RangeFrame{10'000});
  EXPECT_EQ(times(rs), (std::vector<std::int64_t>{95'000, 100'000}));
}

TEST(ScanWindow, StringKeys) {
  auto s = event_schema();
  s.columns[0].type = ColumnType::kString;
  auto cat = make_catalog();
  cat->create_table(s);
  cat->ingest("tx", Record{{std::string("alice"), std::int64_t{1}, 1.0}});
  cat->ingest("tx", Record{{std::string("alice"), std::int64_t{2}, 2.0}});
  cat->ingest("tx", Record{{std::string("bob"), std::int64_t{1}, 3.0}});
  const auto rs = cat->table("tx")->scan_window(Key{std::string("alice")}, 3, RowsFrame{5});
  EXPECT_EQ(rs.size(), 2u);
  EXPECT_EQ(cat->table("tx")->keys(), (std::vector<Key>{std::string("alice"), std::string("bob")}));
}

// Brute-force frame filter over a key's full history.
std::vector<Record> brute_scan(const std::vector<Record>& history, std::int64_t t,
                               const Frame& frame) {
  std::vector<Record> out;
  if (const auto* rows = std::get_if<RowsFrame>(&frame)) {
    std::vector<Record> before;
    const Record* current = nullptr;
    for (const auto& r : history) {
      const auto ts = std::get<std::int64_t>(r.values[1]);
      if (ts < t) before.push_back(r);
      else if (ts == t && !current) current = &r;
    }
    const std::size_t w = static_cast<std::size_t>(rows->rows);
    const std::size_t from = before.size() > w ? before.size() - w : 0;
    out.assign(before.begin() + static_cast<std::ptrdiff_t>(from), before.end());
    if (rows->include_current && current) out.push_back(*current);
    return out;
  }
  const auto d = std::get<RangeFrame>(frame).duration_ms;
  for (const auto& r : history) {
    const auto ts = std::get<std::int64_t>(r.values[1]);
    if (ts > t - d && ts <= t) out.push_back(r);
  }
  return out;
}

TEST(ScanWindowProperty, MatchesBruteForceFilter) {
  std::mt19937_64 rng(2024);
  for (int c = 0; c < 1000; ++c) {
    auto cat = make_catalog(std::uint64_t{1} << 32, 1 + rng() % 8);
    cat->create_table(tx_schema());
    auto rs = testing::random_events(rng, 1 + rng() % 3, 60);
    testing::ingest_all(*cat, "tx", rs);
    const std::int64_t key = static_cast<std::int64_t>(rng() % 4);
    std::vector<Record> history;
    for (const auto& r : rs) {
      if (std::get<std::int64_t>(r.values[0]) == key) history.push_back(r);
    }
    Frame frame;
    if (rng() % 2) {
      frame = RowsFrame{static_cast<std::int64_t>(1 + rng() % 20), rng() % 3 == 0};
    } else {
      frame = RangeFrame{static_cast<std::int64_t>(1 + rng() % 40)};
    }
    std::int64_t t = 990 + static_cast<std::int64_t>(rng() % 200);
    if (!history.empty() && rng() % 2) {
      t = std::get<std::int64_t>(history[rng() % history.size()].values[1]);
    }
    const auto got = cat->table("tx")->scan_window(Key{key}, t, frame);
    ASSERT_EQ(got, brute_scan(history, t, frame)) << "case " << c << " frame " << describe(frame);
  }
}

TEST(KeySegmentProperty, TimestampsAndSeqsOrdered) {
  std::mt19937_64 rng(99);
  auto cat = make_catalog();
  cat->create_table(tx_schema());
  testing::ingest_all(*cat, "tx", testing::random_events(rng, 8, 500));
  const auto tbl = cat->table("tx");
  for (const auto& k : tbl->keys()) {
    auto seg = tbl->read(k);
    ASSERT_TRUE(seg);
    const auto ts = (*seg)->timestamps();
    const auto seq = (*seg)->seqs();
    for (std::size_t i = 1; i < ts.size(); ++i) {
      ASSERT_LE(ts[i - 1], ts[i]);
      ASSERT_LT(seq[i - 1], seq[i]);
      ASSERT_TRUE(ts[i - 1] < ts[i] || seq[i - 1] < seq[i]);
    }
  }
}

TEST(MemoryProperty, CeilingHoldsAndRejectsLeaveStateIntact) {
  std::mt19937_64 rng(5);
  const auto schema = tx_schema();
  auto cat = make_catalog(metadata_size(schema) + 20'000);
  cat->create_table(schema);
  auto rs = testing::random_events(rng, 5, 200);
  std::size_t accepted = 0;
  for (const auto& r : rs) {
    const auto before = cat->snapshot_stats("tx");
    try {
      cat->ingest("tx", r);
      ++accepted;
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::kResourceExhausted);
      ASSERT_EQ(cat->snapshot_stats("tx"), before);
    }
    ASSERT_LE(cat->memory().used(), cat->memory().limit());
  }
  EXPECT_EQ(cat->snapshot_stats("tx").row_count, accepted);
  EXPECT_LT(accepted, rs.size());
}

TEST(Concurrency, WritersOnDistinctKeysAndReaders) {
  auto cat = make_catalog();
  cat->create_table(event_schema());
  constexpr int kWriters = 4;
  constexpr int kPerKey = 2000;
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    const auto tbl = cat->table("tx");
    while (!done.load()) {
      for (std::int64_t k = 0; k < kWriters; ++k) {
        const auto rs = tbl->scan_window(Key{k}, kPerKey + 1, RowsFrame{50});
        for (std::size_t i = 1; i < rs.size(); ++i) {
          if (std::get<std::int64_t>(rs[i].values[1]) != std::get<std::int64_t>(rs[i - 1].values[1]) + 1) {
            bad.fetch_add(1);
          }
        }
      }
    }
  });
  std::vector<std::thread> writers;
  for (int w = 0; w < kWriters; ++w) {
    writers.emplace_back([&, w] {
      for (int i = 0; i < kPerKey; ++i) cat->ingest("tx", ev(w, i, i * 0.5));
    });
  }
  for (auto& t : writers) t.join();
  done = true;
  reader.join();
  EXPECT_EQ(bad.load(), 0);
  const auto st = cat->snapshot_stats("tx");
  EXPECT_EQ(st.row_count, static_cast<std::uint64_t>(kWriters * kPerKey));
  EXPECT_EQ(st.key_count, static_cast<std::uint64_t>(kWriters));
}

}  // namespace
}  // namespace rtfe
