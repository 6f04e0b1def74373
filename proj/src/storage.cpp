#include "rtfe/storage.hpp"

#include <algorithm>
#include <set>

#include "rtfe/error.hpp"
#include "rtfe/hash.hpp"

namespace rtfe {

std::optional<std::size_t> TableSchema::find(std::string_view column) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == column) return i;
  }
  return std::nullopt;
}

void TableSchema::validate() const {
  if (name.empty()) throw Error(ErrorCode::kInvalidSchema, "table name is empty");
  if (columns.empty()) throw Error(ErrorCode::kInvalidSchema, "table has no columns");
  std::set<std::string_view> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) throw Error(ErrorCode::kInvalidSchema, "empty column name");
    if (!seen.insert(c.name).second) {
      throw Error(ErrorCode::kInvalidSchema, "duplicate column '" + c.name + "'");
    }
  }
  const auto key = find(key_column);
  if (!key) throw Error(ErrorCode::kInvalidSchema, "key column '" + key_column + "' missing");
  const ColumnType kt = columns[*key].type;
  if (kt != ColumnType::kInt64 && kt != ColumnType::kString) {
    throw Error(ErrorCode::kInvalidSchema, "key column must be int64 or string");
  }
  const auto ts = find(ts_column);
  if (!ts) throw Error(ErrorCode::kInvalidSchema, "ts column '" + ts_column + "' missing");
  if (columns[*ts].type != ColumnType::kTimestamp) {
    throw Error(ErrorCode::kInvalidSchema, "ts column must be timestamp");
  }
  if (*ts == *key) throw Error(ErrorCode::kInvalidSchema, "key and ts column coincide");
}

std::uint64_t TableSchema::hash() const {
  std::uint64_t h = fnv1a64(name);
  for (const auto& c : columns) {
    h = fnv1a64(c.name, h);
    h = fnv1a64(to_string(c.type), h);
  }
  h = fnv1a64(key_column, h);
  return fnv1a64(ts_column, h);
}

std::uint64_t accounted_size(const TableSchema& schema, const Record& record) {
  std::uint64_t bytes = kRecordOverheadBytes;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    bytes += kFixedValueBytes;
    if (schema.columns[i].type == ColumnType::kString && i < record.values.size()) {
      if (const auto* s = std::get_if<std::string>(&record.values[i])) bytes += s->size();
    }
  }
  return bytes;
}

std::uint64_t metadata_size(const TableSchema& schema) {
  std::uint64_t bytes = kTableOverheadBytes + schema.name.size();
  for (const auto& c : schema.columns) bytes += 16 + c.name.size();
  return bytes;
}

bool MemoryAccount::try_reserve(std::uint64_t bytes) {
  std::uint64_t cur = used_.load(std::memory_order_relaxed);
  do {
    if (bytes > limit_ || cur > limit_ - bytes) return false;
  } while (!used_.compare_exchange_weak(cur, cur + bytes, std::memory_order_relaxed));
  return true;
}

std::size_t anchor_index(std::span<const std::int64_t> ts, std::int64_t t) {
  return static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), t) - ts.begin());
}

preagg::IndexRange resolve_frame(std::span<const std::int64_t> ts, std::int64_t t,
                                 const Frame& frame) {
  if (const auto* rows = std::get_if<RowsFrame>(&frame)) {
    const std::size_t a = anchor_index(ts, t);
    auto r = preagg::rows_range(a, rows->rows);
    if (rows->include_current && a < ts.size() && ts[a] == t) r.hi = a + 1;
    return r;
  }
  return preagg::time_interval(ts, t, std::get<RangeFrame>(frame).duration_ms);
}

// ---------------------------------------------------------------------------

KeySegment::KeySegment(Key key, const TableSchema& schema, std::size_t bucket_size)
    : key_(std::move(key)), key_index_(schema.key_index()), ts_index_(schema.ts_index()) {
  columns_.reserve(schema.columns.size());
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (i == key_index_ || i == ts_index_) {
      columns_.emplace_back(std::monostate{});
      continue;
    }
    switch (schema.columns[i].type) {
      case ColumnType::kInt64:
      case ColumnType::kTimestamp:
        columns_.emplace_back(preagg::ColumnIndex<std::int64_t>(bucket_size));
        break;
      case ColumnType::kFloat64:
        columns_.emplace_back(preagg::ColumnIndex<double>(bucket_size));
        break;
      case ColumnType::kString:
        columns_.emplace_back(preagg::StringColumn{});
        break;
    }
  }
}

void KeySegment::append(const Record& record) {
  const std::int64_t ts = std::get<std::int64_t>(record.values[ts_index_]);
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const Value& v = record.values[i];
    std::visit(
        [&](auto& col) {
          using C = std::decay_t<decltype(col)>;
          if constexpr (std::is_same_v<C, preagg::ColumnIndex<std::int64_t>>) {
            const auto* x = std::get_if<std::int64_t>(&v);
            col.append(x ? std::optional<std::int64_t>(*x) : std::nullopt, ts);
          } else if constexpr (std::is_same_v<C, preagg::ColumnIndex<double>>) {
            const auto* x = std::get_if<double>(&v);
            col.append(x ? std::optional<double>(*x) : std::nullopt, ts);
          } else if constexpr (std::is_same_v<C, preagg::StringColumn>) {
            const auto* x = std::get_if<std::string>(&v);
            col.append(x ? std::optional<std::string>(*x) : std::nullopt);
          }
        },
        columns_[i]);
  }
  seq_.push_back(ts_.size());
  ts_.push_back(ts);
}

Value KeySegment::value(std::size_t c, std::size_t i) const {
  if (c == key_index_) return to_value(key_);
  if (c == ts_index_) return ts_[i];
  return std::visit(
      [&](const auto& col) -> Value {
        using C = std::decay_t<decltype(col)>;
        if constexpr (std::is_same_v<C, std::monostate>) {
          return {};
        } else {
          if (!col.valid(i)) return {};
          return col.values()[i];
        }
      },
      columns_[c]);
}

Record KeySegment::record(std::size_t i) const {
  Record r;
  r.values.reserve(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) r.values.push_back(value(c, i));
  return r;
}

void KeySegment::serialize_index(std::string& out) const {
  preagg::detail::put_pod<std::uint8_t>(out, preagg::kFormatTag);
  preagg::detail::put_array<std::int64_t>(out, ts_);
  for (const auto& col : columns_) {
    std::visit(
        [&](const auto& c) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(c)>, std::monostate>) {
            c.serialize(out);
          }
        },
        col);
  }
}

// ---------------------------------------------------------------------------

Table::Table(TableSchema schema, std::shared_ptr<MemoryAccount> memory, std::size_t bucket_size)
    : schema_(std::move(schema)),
      key_index_(schema_.key_index()),
      ts_index_(schema_.ts_index()),
      bucket_size_(std::max<std::size_t>(bucket_size, 1)),
      memory_(std::move(memory)),
      bytes_used_(metadata_size(schema_)) {}

void Table::check_record(const Record& record) const {
  if (record.values.size() != schema_.columns.size()) {
    throw Error(ErrorCode::kSchemaMismatch,
                "expected " + std::to_string(schema_.columns.size()) + " values, got " +
                    std::to_string(record.values.size()));
  }
  for (std::size_t i = 0; i < record.values.size(); ++i) {
    const Value& v = record.values[i];
    const auto& col = schema_.columns[i];
    if (is_null(v)) {
      if (i == key_index_ || i == ts_index_) {
        throw Error(ErrorCode::kSchemaMismatch, "column '" + col.name + "' must not be null");
      }
      continue;
    }
    bool ok = false;
    switch (col.type) {
      case ColumnType::kInt64:
      case ColumnType::kTimestamp: ok = std::holds_alternative<std::int64_t>(v); break;
      case ColumnType::kFloat64: ok = std::holds_alternative<double>(v); break;
      case ColumnType::kString: ok = std::holds_alternative<std::string>(v); break;
    }
    if (!ok) {
      throw Error(ErrorCode::kSchemaMismatch, "column '" + col.name + "' expects " +
                                                  std::string(to_string(col.type)));
    }
  }
}

std::optional<Key> Table::make_key(const Value& v) const {
  if (schema_.columns[key_index_].type == ColumnType::kInt64) {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return Key{*i};
    return std::nullopt;
  }
  if (const auto* s = std::get_if<std::string>(&v)) return Key{*s};
  return std::nullopt;
}

IngestAck Table::ingest(const Record& record) {
  check_record(record);
  const Key key = *make_key(record.values[key_index_]);
  const std::int64_t ts = std::get<std::int64_t>(record.values[ts_index_]);
  const std::uint64_t size = accounted_size(schema_, record);

  auto append_locked = [&](KeySegment& seg) {
    std::unique_lock lock(seg.mu_);
    if (!seg.ts_.empty() && ts < seg.ts_.back()) {
      throw Error(ErrorCode::kOutOfOrder, "timestamp " + std::to_string(ts) +
                                              " older than latest " +
                                              std::to_string(seg.ts_.back()) + " for key " +
                                              to_string(key));
    }
    if (!memory_->try_reserve(size)) {
      throw Error(ErrorCode::kResourceExhausted, "memory limit reached");
    }
    const std::uint64_t seq = seg.ts_.size();
    seg.append(record);
    row_count_.fetch_add(1, std::memory_order_relaxed);
    bytes_used_.fetch_add(size, std::memory_order_relaxed);
    return IngestAck{seq};
  };

  {
    std::shared_lock lock(map_mu_);
    if (auto it = segments_.find(key); it != segments_.end()) return append_locked(*it->second);
  }
  std::unique_lock lock(map_mu_);
  if (auto it = segments_.find(key); it != segments_.end()) return append_locked(*it->second);
  // Reserve before creating the segment so a rejection leaves key_count as is.
  if (!memory_->try_reserve(size)) {
    throw Error(ErrorCode::kResourceExhausted, "memory limit reached");
  }
  auto seg = std::make_unique<KeySegment>(key, schema_, bucket_size_);
  seg->append(record);
  segments_.emplace(key, std::move(seg));
  row_count_.fetch_add(1, std::memory_order_relaxed);
  bytes_used_.fetch_add(size, std::memory_order_relaxed);
  return IngestAck{0};
}

const KeySegment* Table::find_segment(const Key& key) const {
  std::shared_lock lock(map_mu_);
  auto it = segments_.find(key);
  return it == segments_.end() ? nullptr : it->second.get();
}

std::optional<SegmentReader> Table::read(const Key& key) const {
  const KeySegment* seg = find_segment(key);
  if (!seg) return std::nullopt;
  return std::optional<SegmentReader>(std::in_place, *seg);
}

std::vector<Key> Table::keys() const {
  std::vector<Key> out;
  {
    std::shared_lock lock(map_mu_);
    out.reserve(segments_.size());
    for (const auto& [k, _] : segments_) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Record> Table::scan_window(const Key& key, std::int64_t t, const Frame& frame) const {
  std::vector<Record> out;
  auto seg = read(key);
  if (!seg) return out;
  const auto r = resolve_frame((*seg)->timestamps(), t, frame);
  out.reserve(r.size());
  for (std::size_t i = r.lo; i < r.hi; ++i) out.push_back((*seg)->record(i));
  return out;
}

TableStats Table::stats() const {
  TableStats s;
  {
    std::shared_lock lock(map_mu_);
    s.key_count = segments_.size();
  }
  s.row_count = row_count_.load(std::memory_order_relaxed);
  s.bytes_used = bytes_used_.load(std::memory_order_relaxed);
  return s;
}

namespace {

template <class F>
auto with_numeric(const ColumnData& data, F&& f) {
  if (const auto* i = std::get_if<preagg::ColumnIndex<std::int64_t>>(&data)) return f(*i);
  if (const auto* d = std::get_if<preagg::ColumnIndex<double>>(&data)) return f(*d);
  throw Error(ErrorCode::kTypeError, "column is not numeric");
}

}  // namespace

preagg::SumCount Table::rows_window_sum(const Key& key, std::size_t column, std::size_t t_index,
                                        std::int64_t w) const {
  auto seg = read(key);
  if (!seg) return {};
  const std::size_t anchor = std::min(t_index, (*seg)->size());
  const auto range = preagg::rows_range(anchor, w);
  if (std::holds_alternative<std::monostate>((*seg)->column(column))) {
    return {0.0, static_cast<std::int64_t>(range.size())};
  }
  if (const auto* s = std::get_if<preagg::StringColumn>(&(*seg)->column(column))) {
    return {0.0, s->count(range)};
  }
  return with_numeric((*seg)->column(column), [&](const auto& c) { return c.sum(range); });
}

preagg::MinMaxResult Table::rows_window_minmax(const Key& key, std::size_t column,
                                               std::size_t t_index, std::int64_t w) const {
  auto seg = read(key);
  if (!seg) return {};
  const std::size_t anchor = std::min(t_index, (*seg)->size());
  const auto range = preagg::rows_range(anchor, w);
  return with_numeric((*seg)->column(column), [&](const auto& c) { return c.minmax(range); });
}

Value Table::range_window_agg(const Key& key, std::size_t column, std::int64_t t,
                              std::int64_t duration, AggregateKind kind) const {
  auto seg = read(key);
  const bool sums = kind == AggregateKind::kSum || kind == AggregateKind::kCount;
  if (!seg) return sums ? (kind == AggregateKind::kSum ? Value{0.0} : Value{std::int64_t{0}})
                        : Value{};
  const auto range = preagg::time_interval((*seg)->timestamps(), t, duration);
  const ColumnData& data = (*seg)->column(column);
  if (kind == AggregateKind::kCount) {
    if (std::holds_alternative<std::monostate>(data)) {
      return static_cast<std::int64_t>(range.size());
    }
    if (const auto* s = std::get_if<preagg::StringColumn>(&data)) return s->count(range);
    return with_numeric(data, [&](const auto& c) { return c.sum(range).count; });
  }
  return with_numeric(data, [&](const auto& c) -> Value {
    switch (kind) {
      case AggregateKind::kSum: return c.sum(range).sum;
      case AggregateKind::kAvg: {
        const auto sc = c.sum(range);
        if (sc.count == 0) return {};
        return sc.sum / static_cast<double>(sc.count);
      }
      case AggregateKind::kMin:
      case AggregateKind::kMax: {
        const auto mm = c.minmax(range);
        const auto& v = kind == AggregateKind::kMin ? mm.min : mm.max;
        return v ? Value{*v} : Value{};
      }
      default: return {};
    }
  });
}

std::string Table::serialize_index(const Key& key) const {
  std::string out;
  if (auto seg = read(key)) (*seg)->serialize_index(out);
  return out;
}

// ---------------------------------------------------------------------------

Catalog::Catalog(std::uint64_t mmax_bytes, std::size_t bucket_size)
    : memory_(std::make_shared<MemoryAccount>(mmax_bytes)), bucket_size_(bucket_size) {}

std::string Catalog::create_table(TableSchema schema) {
  schema.validate();
  std::unique_lock lock(mu_);
  if (tables_.count(schema.name)) {
    throw Error(ErrorCode::kDuplicateTable, "table '" + schema.name + "' already exists");
  }
  const std::uint64_t meta = metadata_size(schema);
  if (!memory_->try_reserve(meta)) {
    throw Error(ErrorCode::kResourceExhausted, "memory limit reached");
  }
  std::string id = schema.name;
  tables_.emplace(id, std::make_shared<Table>(std::move(schema), memory_, bucket_size_));
  return id;
}

std::shared_ptr<Table> Catalog::find(std::string_view name) const {
  std::shared_lock lock(mu_);
  auto it = tables_.find(name);
  return it == tables_.end() ? nullptr : it->second;
}

std::shared_ptr<Table> Catalog::table(std::string_view name) const {
  auto t = find(name);
  if (!t) throw Error(ErrorCode::kUnknownTable, "unknown table '" + std::string(name) + "'");
  return t;
}

std::vector<std::string> Catalog::table_names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, _] : tables_) out.push_back(name);
  return out;
}

}  // namespace rtfe
