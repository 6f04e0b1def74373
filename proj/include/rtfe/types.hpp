#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace rtfe {

enum class ColumnType : std::uint8_t { kInt64, kFloat64, kString, kTimestamp };

std::string_view to_string(ColumnType type);
std::optional<ColumnType> parse_column_type(std::string_view name);

inline bool is_numeric(ColumnType t) {
  return t == ColumnType::kInt64 || t == ColumnType::kFloat64;
}

// Timestamps are carried as int64 milliseconds since epoch.
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;

inline bool is_null(const Value& v) { return std::holds_alternative<std::monostate>(v); }

// Partition key: the value of a table's key column.
using Key = std::variant<std::int64_t, std::string>;

std::string to_string(const Key& key);
Value to_value(const Key& key);

enum class AggregateKind : std::uint8_t { kSum, kAvg, kCount, kMin, kMax };

std::string_view to_string(AggregateKind kind);
std::optional<AggregateKind> parse_aggregate(std::string_view name);

/// The last `rows` events strictly before the anchor, plus the anchor event
/// itself when `include_current` is set.
struct RowsFrame {
  std::int64_t rows = 1;
  bool include_current = false;
  friend bool operator==(const RowsFrame&, const RowsFrame&) = default;
};

/// Events with timestamp in (t - duration_ms, t].
struct RangeFrame {
  std::int64_t duration_ms = 1;
  friend bool operator==(const RangeFrame&, const RangeFrame&) = default;
};

using Frame = std::variant<RowsFrame, RangeFrame>;

std::string describe(const Frame& frame);

}  // namespace rtfe
