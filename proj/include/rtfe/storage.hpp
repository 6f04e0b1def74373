#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "rtfe/preagg.hpp"
#include "rtfe/types.hpp"

namespace rtfe {

struct ColumnDef {
  std::string name;
  ColumnType type = ColumnType::kInt64;
  friend bool operator==(const ColumnDef&, const ColumnDef&) = default;
};

struct TableSchema {
  std::string name;
  std::vector<ColumnDef> columns;
  std::string key_column;  // int64 or string
  std::string ts_column;   // timestamp

  std::optional<std::size_t> find(std::string_view column) const;

  /// Throws Error(kInvalidSchema) when names collide or key/ts columns are
  /// missing or mistyped.
  void validate() const;

  std::size_t key_index() const { return *find(key_column); }
  std::size_t ts_index() const { return *find(ts_column); }

  std::uint64_t hash() const;

  friend bool operator==(const TableSchema&, const TableSchema&) = default;
};

/// One event row: one value per schema column, in schema order.
struct Record {
  std::vector<Value> values;
  friend bool operator==(const Record&, const Record&) = default;
};

// Accounted sizes. A record costs the overhead plus 8 bytes per fixed-width
// column and 8 + length bytes per string column (nulls cost their fixed part).
inline constexpr std::uint64_t kRecordOverheadBytes = 32;
inline constexpr std::uint64_t kFixedValueBytes = 8;
inline constexpr std::uint64_t kTableOverheadBytes = 256;

std::uint64_t accounted_size(const TableSchema& schema, const Record& record);
std::uint64_t metadata_size(const TableSchema& schema);

/// Engine-wide byte budget (M <= M_max).
class MemoryAccount {
 public:
  explicit MemoryAccount(std::uint64_t limit) : limit_(limit) {}

  bool try_reserve(std::uint64_t bytes);
  void release(std::uint64_t bytes) { used_.fetch_sub(bytes, std::memory_order_relaxed); }
  std::uint64_t used() const { return used_.load(std::memory_order_relaxed); }
  std::uint64_t limit() const { return limit_; }

 private:
  std::atomic<std::uint64_t> used_{0};
  const std::uint64_t limit_;
};

struct TableStats {
  std::uint64_t row_count = 0;
  std::uint64_t key_count = 0;
  std::uint64_t bytes_used = 0;
  friend bool operator==(const TableStats&, const TableStats&) = default;
};

using ColumnData = std::variant<std::monostate,  // key and ts columns live elsewhere
                                preagg::ColumnIndex<std::int64_t>,
                                preagg::ColumnIndex<double>,
                                preagg::StringColumn>;

/// Event index range covered by `frame` anchored at time t.
/// ROWS: the W events before the first event with timestamp >= t, plus that
/// event if it is stamped exactly t and the frame includes the current row.
/// RANGE: events with timestamp in (t - duration, t].
preagg::IndexRange resolve_frame(std::span<const std::int64_t> ts, std::int64_t t,
                                 const Frame& frame);

/// Index of the anchor event for time t: first event with timestamp >= t
/// (== size() when t is later than every event).
std::size_t anchor_index(std::span<const std::int64_t> ts, std::int64_t t);

class Table;

/// All events of one partition key, time ordered by (timestamp, seq).
class KeySegment {
 public:
  KeySegment(Key key, const TableSchema& schema, std::size_t bucket_size);

  const Key& key() const { return key_; }
  std::size_t size() const { return ts_.size(); }
  std::span<const std::int64_t> timestamps() const { return ts_; }
  std::span<const std::uint64_t> seqs() const { return seq_; }
  const ColumnData& column(std::size_t schema_index) const { return columns_[schema_index]; }

  /// Value of column `schema_index` at event i (the key/ts columns included).
  Value value(std::size_t schema_index, std::size_t i) const;
  Record record(std::size_t i) const;

  void serialize_index(std::string& out) const;

 private:
  friend class Table;
  friend class SegmentReader;
  void append(const Record& record);

  mutable std::shared_mutex mu_;
  Key key_;
  std::size_t key_index_;
  std::size_t ts_index_;
  std::vector<std::int64_t> ts_;
  std::vector<std::uint64_t> seq_;
  std::vector<ColumnData> columns_;
};

/// Shared-locked view of one segment; a reader never observes a partially
/// appended record.
class SegmentReader {
 public:
  explicit SegmentReader(const KeySegment& seg) : lock_(seg.mu_), seg_(&seg) {}
  const KeySegment& operator*() const { return *seg_; }
  const KeySegment* operator->() const { return seg_; }

 private:
  std::shared_lock<std::shared_mutex> lock_;
  const KeySegment* seg_;
};

struct IngestAck {
  std::uint64_t seq = 0;
};

class Table {
 public:
  Table(TableSchema schema, std::shared_ptr<MemoryAccount> memory,
        std::size_t bucket_size = preagg::kDefaultBucketSize);

  const TableSchema& schema() const { return schema_; }
  std::size_t bucket_size() const { return bucket_size_; }

  /// Appends a record. Throws kSchemaMismatch, kOutOfOrder or
  /// kResourceExhausted; a rejected record leaves the table untouched.
  IngestAck ingest(const Record& record);

  std::vector<Record> scan_window(const Key& key, std::int64_t t, const Frame& frame) const;
  TableStats stats() const;

  std::optional<SegmentReader> read(const Key& key) const;
  /// All keys, ascending.
  std::vector<Key> keys() const;

  /// Converts a JSON-ish key value to this table's key type, or nullopt.
  std::optional<Key> make_key(const Value& v) const;

  // Pre-aggregate queries keyed by (key, column). `t_index` is the anchor's
  // event index; events strictly before it are in scope.
  preagg::SumCount rows_window_sum(const Key& key, std::size_t column, std::size_t t_index,
                                   std::int64_t w) const;
  preagg::MinMaxResult rows_window_minmax(const Key& key, std::size_t column, std::size_t t_index,
                                          std::int64_t w) const;
  /// SUM/COUNT return 0 on an empty interval; AVG/MIN/MAX return null.
  Value range_window_agg(const Key& key, std::size_t column, std::int64_t t,
                         std::int64_t duration, AggregateKind kind) const;

  /// Serialized pre-aggregate state of one key (empty string if unknown).
  std::string serialize_index(const Key& key) const;

 private:
  const KeySegment* find_segment(const Key& key) const;
  void check_record(const Record& record) const;

  const TableSchema schema_;
  const std::size_t key_index_;
  const std::size_t ts_index_;
  const std::size_t bucket_size_;
  std::shared_ptr<MemoryAccount> memory_;
  std::atomic<std::uint64_t> row_count_{0};
  std::atomic<std::uint64_t> bytes_used_;

  mutable std::shared_mutex map_mu_;
  std::unordered_map<Key, std::unique_ptr<KeySegment>> segments_;
};

class Catalog {
 public:
  explicit Catalog(std::uint64_t mmax_bytes,
                   std::size_t bucket_size = preagg::kDefaultBucketSize);

  /// Registers an empty table; returns its id (the table name).
  std::string create_table(TableSchema schema);

  /// Throws kUnknownTable.
  std::shared_ptr<Table> table(std::string_view name) const;
  std::shared_ptr<Table> find(std::string_view name) const;

  IngestAck ingest(std::string_view table_name, const Record& record) {
    return table(table_name)->ingest(record);
  }
  TableStats snapshot_stats(std::string_view table_name) const {
    return table(table_name)->stats();
  }

  std::vector<std::string> table_names() const;
  MemoryAccount& memory() { return *memory_; }
  const MemoryAccount& memory() const { return *memory_; }
  std::size_t bucket_size() const { return bucket_size_; }

 private:
  std::shared_ptr<MemoryAccount> memory_;
  std::size_t bucket_size_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Table>, std::less<>> tables_;
};

}  // namespace rtfe
