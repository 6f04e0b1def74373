#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <algorithm>
#include <cctype>
#include <string_view>
#include <cstdio>
#include <string>
#include <vector>

#include "rtfe/ml.hpp"
#include "rtfe/planner.hpp"
#include "rtfe/sql.hpp"
#include "rtfe/storage.hpp"

namespace rtfe::testing {

// tx(user int64, ts timestamp, amount float64, qty int64, category string)
inline TableSchema tx_schema(std::string name = "tx") {
  TableSchema s;
  s.name = std::move(name);
  s.columns = {{"user", ColumnType::kInt64},
               {"ts", ColumnType::kTimestamp},
               {"amount", ColumnType::kFloat64},
               {"qty", ColumnType::kInt64},
               {"category", ColumnType::kString}};
  s.key_column = "user";
  s.ts_column = "ts";
  return s;
}

inline Record tx(std::int64_t user, std::int64_t ts, Value amount, Value qty = std::int64_t{1},
                 Value category = std::string("a")) {
  return Record{{user, ts, std::move(amount), std::move(qty), std::move(category)}};
}

inline std::shared_ptr<Catalog> make_catalog(std::uint64_t mmax = std::uint64_t{1} << 32,
                                             std::size_t bucket = 256) {
  return std::make_shared<Catalog>(mmax, bucket);
}

inline std::shared_ptr<MlRegistry> default_models() {
  auto r = std::make_shared<MlRegistry>();
  r->load_file(RTFE_MODELS_FILE);
  return r;
}

// Random events for `keys` keys: timestamps with small gaps (ties included),
// amounts with occasional nulls and negatives, int quantities.
inline std::vector<Record> random_events(std::mt19937_64& rng, std::size_t keys,
                                         std::size_t max_events, bool nulls = true) {
  std::vector<Record> out;
  std::uniform_int_distribution<int> gap(0, 5);
  std::uniform_real_distribution<double> amount(-100.0, 1000.0);
  std::uniform_int_distribution<std::int64_t> qty(-50, 500);
  std::uniform_int_distribution<std::size_t> count(0, max_events);
  const char* cats[] = {"a", "b", "c"};
  for (std::size_t k = 0; k < keys; ++k) {
    std::int64_t ts = 1000;
    const std::size_t n = count(rng);
    for (std::size_t i = 0; i < n; ++i) {
      ts += gap(rng);
      Value a = amount(rng);
      Value q = qty(rng);
      Value c = std::string(cats[rng() % 3]);
      if (nulls && rng() % 13 == 0) a = std::monostate{};
      if (nulls && rng() % 17 == 0) q = std::monostate{};
      if (nulls && rng() % 19 == 0) c = std::monostate{};
      out.push_back(Record{{static_cast<std::int64_t>(k), ts, a, q, c}});
    }
  }
  return out;
}

// Exact for int64, strings and nulls; 1e-9 relative for doubles.
inline bool values_match(const Value& a, const Value& b, double rel = 1e-9) {
  const auto* x = std::get_if<double>(&a);
  const auto* y = std::get_if<double>(&b);
  if (x && y) {
    if (*x == *y) return true;
    return std::fabs(*x - *y) <= rel * std::max(std::fabs(*x), std::fabs(*y));
  }
  return a == b;
}

inline std::string show(const Value& v) {
  if (is_null(v)) return "null";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i) + "i";
  if (const auto* d = std::get_if<double>(&v)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *d);
    return buf;
  }
  return "'" + std::get<std::string>(v) + "'";
}

inline void ingest_all(Catalog& catalog, const std::string& table, const std::vector<Record>& rs) {
  for (const auto& r : rs) catalog.ingest(table, r);
}

inline std::shared_ptr<const plan::PhysicalPlan> compile(
    std::string_view sql, const Catalog& catalog, const MlRegistry& models,
    const plan::OptimizationFlags& flags = plan::OptimizationFlags::all_on(), bool strict_w = false) {
  auto logical = plan::build_logical(sql::parse(sql).ast, catalog, models, sql::normalize(sql));
  return plan::optimize(logical, flags, strict_w).plan;
}

// A random feature query over tx_schema(): window aggregates over one or two
// frames, optionally an ML call, a bare column and a WHERE clause.
inline std::string random_query(std::mt19937_64& rng, const std::string& table = "tx") {
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  auto frame = [&]() -> std::string {
    switch (pick(3)) {
      case 0:
        return "ROWS BETWEEN " + std::to_string(1 + pick(40)) + " PRECEDING AND 1 PRECEDING";
      case 1:
        return "ROWS BETWEEN " + std::to_string(1 + pick(40)) + " PRECEDING AND CURRENT ROW";
      default:
        return "RANGE BETWEEN " + std::to_string(1 + pick(60)) + "ms PRECEDING AND CURRENT ROW";
    }
  };
  const char* fns[] = {"SUM", "AVG", "COUNT", "MIN", "MAX"};
  const char* numeric[] = {"amount", "qty"};
  const std::size_t windows = 1 + pick(2);
  std::vector<std::string> items;
  std::vector<std::string> features;
  const std::size_t naggs = 1 + pick(4);
  for (std::size_t i = 0; i < naggs; ++i) {
    const std::string fn = fns[pick(5)];
    std::string col = numeric[pick(2)];
    if (fn == "COUNT" && pick(3) == 0) col = "category";
    const std::string w = "w" + std::to_string(pick(windows));
    std::string lower = fn;
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const std::string name = lower + "_" + col + "_" + w;
    if (std::find(features.begin(), features.end(), name) != features.end()) continue;
    features.push_back(name);
    items.push_back(fn + "(" + col + ") OVER " + w);
  }
  if (pick(2) == 0) {
    const std::string f = features[pick(features.size())];
    if (f.find("category") == std::string::npos || f.rfind("count", 0) == 0) {
      if (pick(2)) {
        items.push_back("SPEND_SCORE(" + f + ")");
      } else {
        items.push_back("PREDICT_CHURN(" + f + ", qty)");
      }
    }
  }
  if (pick(3) == 0) items.push_back(pick(2) ? "amount" : "category");
  std::string sql = "SELECT ";
  for (std::size_t i = 0; i < items.size(); ++i) sql += (i ? ", " : "") + items[i];
  sql += " FROM " + table;
  switch (pick(6)) {
    case 0: sql += " WHERE user <= " + std::to_string(pick(6)); break;
    case 1: sql += " WHERE ts >= " + std::to_string(1000 + pick(200)); break;
    case 2: sql += " WHERE amount > " + std::to_string(static_cast<int>(pick(600))) + ".5"; break;
    case 3: sql += " WHERE category = '" + std::string(1, static_cast<char>('a' + pick(3))) + "'"; break;
    case 4: sql += " WHERE qty < " + std::to_string(pick(400)); break;
    default: break;
  }
  sql += " WINDOW ";
  for (std::size_t w = 0; w < windows; ++w) {
    if (w) sql += ", ";
    sql += "w" + std::to_string(w) + " AS (PARTITION BY user ORDER BY ts " + frame() + ")";
  }
  return sql;
}

// Rows of two feature computations agree: same anchors, same values within
// the float tolerance.
inline bool rows_match(const std::vector<Value>& a, const std::vector<Value>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!values_match(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace rtfe::testing
