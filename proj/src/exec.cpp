#include "rtfe/exec.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <thread>

#include "json.hpp"
#include "rtfe/clock.hpp"
#include "rtfe/error.hpp"
#include "rtfe/formats.hpp"

namespace rtfe::exec {

using plan::PhysicalPlan;
using plan::Predicate;
using plan::SlotRef;
using plan::Strategy;
using plan::WindowPass;
using plan::WindowSpec;
using preagg::IndexRange;

namespace {

// Where the anchor sits inside one key's events.
struct AnchorCtx {
  const KeySegment* seg = nullptr;  // null: unknown key or key predicate failed
  Key key;
  std::int64_t t = 0;
  std::size_t a = 0;             // first event with timestamp >= t
  bool exists = false;           // event a is stamped t
  bool passes = false;           // ... and survives every filter
  std::size_t p = 0, q = 0;      // events allowed by the pushed ts predicate
};

IndexRange ts_bounds(std::span<const std::int64_t> ts, const std::optional<Predicate>& pred) {
  if (!pred) return {0, ts.size()};
  auto less_than = [&](sql::CompareOp op) {
    Predicate probe = *pred;
    probe.op = op;
    return [probe](std::int64_t x) { return probe.test(Value{x}); };
  };
  const auto lb = static_cast<std::size_t>(
      std::partition_point(ts.begin(), ts.end(), less_than(sql::CompareOp::kLt)) - ts.begin());
  const auto ub = static_cast<std::size_t>(
      std::partition_point(ts.begin(), ts.end(), less_than(sql::CompareOp::kLe)) - ts.begin());
  switch (pred->op) {
    case sql::CompareOp::kEq: return {lb, ub};
    case sql::CompareOp::kLt: return {0, lb};
    case sql::CompareOp::kLe: return {0, ub};
    case sql::CompareOp::kGt: return {ub, ts.size()};
    case sql::CompareOp::kGe: return {lb, ts.size()};
  }
  return {0, ts.size()};
}

bool key_passes(const PhysicalPlan& plan, const Key& key) {
  return !plan.pushed.key_predicate || plan.pushed.key_predicate->test(to_value(key));
}

bool event_passes(const PhysicalPlan& plan, const KeySegment& seg, std::size_t i) {
  return !plan.residual_filter || plan.residual_filter->test(seg.value(plan.residual_filter->column, i));
}

void set_anchor(const PhysicalPlan& plan, AnchorCtx& ctx, std::size_t a) {
  const auto ts = ctx.seg->timestamps();
  ctx.a = a;
  ctx.exists = a < ts.size() && ts[a] == ctx.t;
  ctx.passes = ctx.exists && a >= ctx.p && a < ctx.q && event_passes(plan, *ctx.seg, a);
}

// Contiguous window for plans without a residual filter.
IndexRange window_range(const AnchorCtx& ctx, const Frame& frame) {
  if (const auto* rows = std::get_if<RowsFrame>(&frame)) {
    const std::size_t hi0 = std::min(ctx.a, ctx.q);
    IndexRange r{hi0, hi0};
    if (hi0 > ctx.p) {
      const auto w = static_cast<std::size_t>(rows->rows);
      r.lo = std::max(ctx.p, hi0 >= w ? hi0 - w : 0);
    }
    if (rows->include_current && ctx.passes) r.hi = ctx.a + 1;
    return r;
  }
  const auto& range = std::get<RangeFrame>(frame);
  IndexRange r = preagg::time_interval(ctx.seg->timestamps(), ctx.t, range.duration_ms);
  r.lo = std::max(r.lo, ctx.p);
  r.hi = std::min(r.hi, ctx.q);
  if (r.hi < r.lo) r.hi = r.lo;
  return r;
}

thread_local std::vector<std::uint32_t> tl_indices;

// Event indices of the window; walks the filter when one remains.
std::span<const std::uint32_t> window_indices(const PhysicalPlan& plan, const AnchorCtx& ctx,
                                              const Frame& frame) {
  auto& out = tl_indices;
  out.clear();
  if (!plan.residual_filter) {
    const IndexRange r = window_range(ctx, frame);
    for (std::size_t i = r.lo; i < r.hi; ++i) out.push_back(static_cast<std::uint32_t>(i));
    return out;
  }
  const KeySegment& seg = *ctx.seg;
  if (const auto* rows = std::get_if<RowsFrame>(&frame)) {
    const auto w = static_cast<std::size_t>(rows->rows);
    for (std::size_t i = std::min(ctx.a, seg.size()); i > 0 && out.size() < w; --i) {
      if (event_passes(plan, seg, i - 1)) out.push_back(static_cast<std::uint32_t>(i - 1));
    }
    std::reverse(out.begin(), out.end());
    if (rows->include_current && ctx.passes) out.push_back(static_cast<std::uint32_t>(ctx.a));
    return out;
  }
  const IndexRange r = window_range(ctx, frame);
  for (std::size_t i = r.lo; i < r.hi; ++i) {
    if (event_passes(plan, seg, i)) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

// Scanned columns of the window copied into typed buffers.
struct ScanBuffer {
  enum class Kind : std::uint8_t { kPresence, kInt, kDouble };
  std::vector<Kind> kinds;
  std::vector<std::vector<std::int64_t>> ints;
  std::vector<std::vector<double>> doubles;
  std::vector<std::vector<std::uint8_t>> valid;
  std::size_t rows = 0;
};

thread_local ScanBuffer tl_scan;

void materialize(const PhysicalPlan& plan, const KeySegment& seg,
                 std::span<const std::uint32_t> idx, ScanBuffer& buf) {
  const std::size_t ncols = plan.scan_columns.size();
  buf.kinds.resize(ncols);
  buf.ints.resize(ncols);
  buf.doubles.resize(ncols);
  buf.valid.resize(ncols);
  buf.rows = idx.size();
  for (std::size_t s = 0; s < ncols; ++s) {
    const std::size_t c = plan.scan_columns[s];
    auto& valid = buf.valid[s];
    valid.resize(idx.size());
    if (c == plan.ts_column) {
      buf.kinds[s] = ScanBuffer::Kind::kInt;
      auto& out = buf.ints[s];
      out.resize(idx.size());
      const auto ts = seg.timestamps();
      for (std::size_t k = 0; k < idx.size(); ++k) {
        out[k] = ts[idx[k]];
        valid[k] = 1;
      }
      continue;
    }
    std::visit(
        [&](const auto& col) {
          using C = std::decay_t<decltype(col)>;
          if constexpr (std::is_same_v<C, std::monostate>) {
            buf.kinds[s] = ScanBuffer::Kind::kPresence;
            std::fill(valid.begin(), valid.end(), std::uint8_t{1});
          } else if constexpr (std::is_same_v<C, preagg::StringColumn>) {
            buf.kinds[s] = ScanBuffer::Kind::kPresence;
            const auto v = col.validity();
            for (std::size_t k = 0; k < idx.size(); ++k) valid[k] = v[idx[k]];
          } else {
            using T = typename std::decay_t<decltype(col.values())>::value_type;
            auto& out = [&]() -> auto& {
              if constexpr (std::is_same_v<T, double>) {
                buf.kinds[s] = ScanBuffer::Kind::kDouble;
                return buf.doubles[s];
              } else {
                buf.kinds[s] = ScanBuffer::Kind::kInt;
                return buf.ints[s];
              }
            }();
            out.resize(idx.size());
            const auto vals = col.values();
            const auto v = col.validity();
            for (std::size_t k = 0; k < idx.size(); ++k) {
              out[k] = vals[idx[k]];
              valid[k] = v[idx[k]];
            }
          }
        },
        seg.column(c));
  }
}

// Intermediate aggregate state shared by both strategies.
struct Partial {
  double sum = 0.0;
  std::int64_t count = 0;
  std::optional<double> min;
  std::optional<double> max;
};

double frame_capacity(const Frame& frame) {
  if (const auto* rows = std::get_if<RowsFrame>(&frame)) {
    return static_cast<double>(rows->rows + (rows->include_current ? 1 : 0));
  }
  return 0.0;
}

Value finish(const WindowSpec& spec, const Partial& p, bool strict_w) {
  switch (spec.aggregate) {
    case AggregateKind::kSum: return p.sum;
    case AggregateKind::kCount: return p.count;
    case AggregateKind::kAvg: {
      if (p.count == 0) return {};
      const double cap = frame_capacity(spec.frame);
      const double denom = strict_w && cap > 0 ? cap : static_cast<double>(p.count);
      return p.sum / denom;
    }
    case AggregateKind::kMin: return p.min ? Value{*p.min} : Value{};
    case AggregateKind::kMax: return p.max ? Value{*p.max} : Value{};
  }
  return {};
}

Partial scan_aggregate(const ScanBuffer& buf, int slot, AggregateKind kind) {
  Partial p;
  const auto s = static_cast<std::size_t>(slot);
  const auto& valid = buf.valid[s];
  const std::size_t n = buf.rows;
  if (kind == AggregateKind::kCount || buf.kinds[s] == ScanBuffer::Kind::kPresence) {
    for (std::size_t k = 0; k < n; ++k) p.count += valid[k];
    return p;
  }
  const bool want_sum = kind == AggregateKind::kSum || kind == AggregateKind::kAvg;
  if (buf.kinds[s] == ScanBuffer::Kind::kInt) {
    const auto& xs = buf.ints[s];
    std::int64_t sum = 0;
    std::int64_t lo = 0, hi = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!valid[k]) continue;
      if (p.count == 0) lo = hi = xs[k];
      ++p.count;
      if (want_sum) {
        sum += xs[k];
      } else {
        lo = std::min(lo, xs[k]);
        hi = std::max(hi, xs[k]);
      }
    }
    p.sum = static_cast<double>(sum);
    if (p.count > 0 && !want_sum) {
      p.min = static_cast<double>(lo);
      p.max = static_cast<double>(hi);
    }
    return p;
  }
  const auto& xs = buf.doubles[s];
  if (want_sum) {
    double sum = 0.0, comp = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!valid[k]) continue;
      ++p.count;
      const double x = xs[k];
      const double t = sum + x;
      comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
      sum = t;
    }
    p.sum = sum + comp;
    return p;
  }
  double lo = 0.0, hi = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!valid[k]) continue;
    if (p.count == 0) lo = hi = xs[k];
    ++p.count;
    lo = std::min(lo, xs[k]);
    hi = std::max(hi, xs[k]);
  }
  if (p.count > 0) {
    p.min = lo;
    p.max = hi;
  }
  return p;
}

Partial index_aggregate(const KeySegment& seg, const WindowSpec& spec, IndexRange r) {
  Partial p;
  if (r.empty()) return p;
  std::visit(
      [&](const auto& col) {
        using C = std::decay_t<decltype(col)>;
        if constexpr (std::is_same_v<C, std::monostate>) {
          p.count = static_cast<std::int64_t>(r.size());
        } else if constexpr (std::is_same_v<C, preagg::StringColumn>) {
          p.count = col.count(r);
        } else {
          if (spec.aggregate == AggregateKind::kMin || spec.aggregate == AggregateKind::kMax) {
            const auto mm = col.minmax(r);
            p.count = mm.count;
            p.min = mm.min;
            p.max = mm.max;
          } else {
            const auto sc = col.sum(r);
            p.sum = sc.sum;
            p.count = sc.count;
          }
        }
      },
      seg.column(spec.target));
  return p;
}

void run_pass(const PhysicalPlan& plan, const AnchorCtx& ctx, const WindowPass& pass,
              std::vector<Value>& agg_values) {
  if (!ctx.seg) {
    for (std::size_t i : pass.aggregates) {
      agg_values[i] = finish(plan.aggregates[i], Partial{}, plan.strict_w);
    }
    return;
  }
  if (pass.strategy == Strategy::kPreAgg) {
    const IndexRange r = window_range(ctx, pass.frame);
    for (std::size_t i : pass.aggregates) {
      const WindowSpec& spec = plan.aggregates[i];
      agg_values[i] = finish(spec, index_aggregate(*ctx.seg, spec, r), plan.strict_w);
    }
    return;
  }
  const auto idx = window_indices(plan, ctx, pass.frame);
  materialize(plan, *ctx.seg, idx, tl_scan);
  for (std::size_t i : pass.aggregates) {
    const WindowSpec& spec = plan.aggregates[i];
    const int slot = plan.scan_slot[spec.target];
    agg_values[i] = finish(spec, scan_aggregate(tl_scan, slot, spec.aggregate), plan.strict_w);
  }
}

Value bare_column(const PhysicalPlan& plan, const AnchorCtx& ctx, std::size_t c) {
  if (c == plan.key_column) return to_value(ctx.key);
  if (c == plan.ts_column) return ctx.t;
  if (!ctx.seg || !ctx.passes) return {};
  return ctx.seg->value(c, ctx.a);
}

std::optional<double> as_double(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

FeatureRow evaluate(const PhysicalPlan& plan, const AnchorCtx& ctx) {
  thread_local std::vector<Value> agg_values;
  agg_values.assign(plan.aggregates.size(), Value{});
  for (const auto& pass : plan.passes) run_pass(plan, ctx, pass, agg_values);

  std::vector<Value> ml_values(plan.ml_calls.size());
  thread_local std::vector<double> inputs;
  for (std::size_t j = 0; j < plan.ml_calls.size(); ++j) {
    const auto& call = plan.ml_calls[j];
    inputs.clear();
    bool null_input = false;
    for (const auto& in : call.inputs) {
      const Value v = in.kind == SlotRef::Kind::kAggregate ? agg_values[in.index]
                                                           : bare_column(plan, ctx, in.index);
      const auto x = as_double(v);
      if (!x) {
        null_input = true;
        break;
      }
      inputs.push_back(*x);
    }
    if (!null_input) ml_values[j] = call.function->evaluate(inputs);
  }

  FeatureRow row;
  row.key = ctx.key;
  row.ts = ctx.t;
  row.names = plan.output_names;
  row.values.reserve(plan.outputs.size());
  for (const auto& out : plan.outputs) {
    switch (out.source.kind) {
      case SlotRef::Kind::kAggregate: row.values.push_back(agg_values[out.source.index]); break;
      case SlotRef::Kind::kMl: row.values.push_back(ml_values[out.source.index]); break;
      case SlotRef::Kind::kColumn:
        row.values.push_back(bare_column(plan, ctx, out.source.index));
        break;
    }
  }
  return row;
}

void check_fresh(const PhysicalPlan& plan) {
  if (!plan.table || plan.table->schema().hash() != plan.schema_hash) {
    throw Error(ErrorCode::kStalePlan, "plan was built against a different table definition");
  }
}

// Events of one key, anchored in turn; appends passing anchors' rows.
void batch_key(const PhysicalPlan& plan, const Key& key, std::vector<FeatureRow>& out) {
  if (!key_passes(plan, key)) return;
  auto reader = plan.table->read(key);
  if (!reader) return;
  AnchorCtx ctx;
  ctx.seg = &**reader;
  ctx.key = key;
  const auto ts = ctx.seg->timestamps();
  const IndexRange bounds = ts_bounds(ts, plan.pushed.ts_predicate);
  ctx.p = bounds.lo;
  ctx.q = bounds.hi;
  for (std::size_t j = bounds.lo; j < bounds.hi; ++j) {
    ctx.t = ts[j];
    set_anchor(plan, ctx, j);
    if (!ctx.passes) continue;
    out.push_back(evaluate(plan, ctx));
  }
}

void append_json_value(std::string& out, const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) {
    out += std::to_string(*i);
  } else if (const auto* d = std::get_if<double>(&v)) {
    out += std::isfinite(*d) ? formats::format_double(*d) : "null";
  } else if (const auto* s = std::get_if<std::string>(&v)) {
    out += nlohmann::json(*s).dump();
  } else {
    out += "null";
  }
}

void append_csv_value(std::string& out, const Value& v) {
  if (const auto* s = std::get_if<std::string>(&v)) {
    out += s->empty() ? "\"\"" : formats::csv_escape(*s);
  } else if (!is_null(v)) {
    append_json_value(out, v);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string FeatureRow::normalized() const {
  std::string out = "{\"key\":";
  append_json_value(out, to_value(key));
  out += ",\"ts\":" + std::to_string(ts);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += ',';
    out += nlohmann::json(names ? (*names)[i] : std::to_string(i)).dump();
    out += ':';
    append_json_value(out, values[i]);
  }
  out += '}';
  return out;
}

LanePool::LanePool(std::size_t lanes) : gate_(std::max<std::size_t>(lanes, 1)) {}

void LanePool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(lanes(), n);
  std::vector<std::size_t> counts(workers, 0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&](std::size_t lane) {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      auto permit = gate_.enter();
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
      ++counts[lane];
    }
  };
  {
    std::vector<std::jthread> threads;
    for (std::size_t lane = 1; lane < workers; ++lane) threads.emplace_back(work, lane);
    if (workers > 0) work(0);
  }
  {
    std::lock_guard lock(mu_);
    lane_counts_ = std::move(counts);
  }
  if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> LanePool::last_lane_counts() const {
  std::lock_guard lock(mu_);
  return lane_counts_;
}

FeatureRow execute_request(const PhysicalPlan& plan, const Key& key, std::int64_t t,
                           LatencyBreakdown* latency) {
  Stopwatch sw;
  check_fresh(plan);
  AnchorCtx ctx;
  ctx.key = key;
  ctx.t = t;
  std::optional<SegmentReader> reader;
  if (key_passes(plan, key)) reader = plan.table->read(key);
  FeatureRow row;
  if (reader) {
    ctx.seg = &**reader;
    const auto ts = ctx.seg->timestamps();
    const IndexRange bounds = ts_bounds(ts, plan.pushed.ts_predicate);
    ctx.p = bounds.lo;
    ctx.q = bounds.hi;
    std::size_t a = anchor_index(ts, t);
    // With a row filter, the anchor is the first event stamped t that survives it.
    if (plan.residual_filter) {
      std::size_t b = a;
      while (b < ts.size() && ts[b] == t && !event_passes(plan, *ctx.seg, b)) ++b;
      if (b < ts.size() && ts[b] == t) a = b;
    }
    set_anchor(plan, ctx, a);
  }
  row = evaluate(plan, ctx);
  if (latency) {
    latency->exec_ns = sw.elapsed_ns();
    latency->total_ns = latency->parse_ns + latency->plan_ns + latency->exec_ns;
  }
  return row;
}

BatchResult execute_batch(const PhysicalPlan& plan, LanePool& pool) {
  Stopwatch sw;
  check_fresh(plan);
  const std::vector<Key> keys = plan.table->keys();
  std::vector<std::vector<FeatureRow>> parts(keys.size());
  pool.parallel_for(keys.size(), [&](std::size_t i) { batch_key(plan, keys[i], parts[i]); });
  BatchResult result;
  result.names = plan.output_names;
  std::size_t total = 0;
  for (const auto& part : parts) total += part.size();
  result.rows.reserve(total);
  for (auto& part : parts) {
    std::move(part.begin(), part.end(), std::back_inserter(result.rows));
  }
  result.latency.exec_ns = sw.elapsed_ns();
  result.latency.total_ns = result.latency.exec_ns;
  return result;
}

BatchResult execute_batch(const PhysicalPlan& plan, std::size_t lanes) {
  LanePool pool(lanes);
  return execute_batch(plan, pool);
}

BatchResult execute_batch_file(const PhysicalPlan& plan, const std::filesystem::path& input,
                               LanePool& pool) {
  check_fresh(plan);
  const TableSchema& schema = plan.table->schema();
  auto scratch = std::make_shared<Table>(
      schema, std::make_shared<MemoryAccount>(std::numeric_limits<std::uint64_t>::max()),
      plan.table->bucket_size());
  for (const Record& r : formats::read_records(schema, input)) scratch->ingest(r);
  PhysicalPlan copy = plan;
  copy.table = scratch;
  return execute_batch(copy, pool);
}

ConsistencyReport check_consistency(const PhysicalPlan& plan, std::span<const Anchor> sample,
                                    const BatchResult* batch) {
  ConsistencyReport report;
  if (sample.empty()) return report;
  BatchResult own;
  if (!batch) {
    own = execute_batch(plan, 1);
    batch = &own;
  }
  std::map<Anchor, std::size_t> first_row;
  for (std::size_t i = 0; i < batch->rows.size(); ++i) {
    first_row.emplace(Anchor{batch->rows[i].key, batch->rows[i].ts}, i);
  }
  const bool filtered =
      plan.residual_filter || plan.pushed.key_predicate || plan.pushed.ts_predicate;
  for (const auto& anchor : sample) {
    const auto it = first_row.find(anchor);
    if (it == first_row.end() && filtered) {
      ++report.excluded;
      continue;
    }
    ++report.checked;
    const std::string req = execute_request(plan, anchor.first, anchor.second).normalized();
    std::string bat = it == first_row.end() ? std::string() : batch->rows[it->second].normalized();
    if (req != bat) {
      report.mismatches.push_back({anchor.first, anchor.second, req, std::move(bat)});
    }
  }
  return report;
}

std::string to_csv(const BatchResult& result) {
  std::string out = "key,ts";
  if (result.names) {
    for (const auto& n : *result.names) out += "," + formats::csv_escape(n);
  }
  out += '\n';
  for (const auto& row : result.rows) {
    append_csv_value(out, to_value(row.key));
    out += ',' + std::to_string(row.ts);
    for (const auto& v : row.values) {
      out += ',';
      append_csv_value(out, v);
    }
    out += '\n';
  }
  return out;
}

std::string to_json_lines(const BatchResult& result) {
  std::string out;
  for (const auto& row : result.rows) {
    out += row.normalized();
    out += '\n';
  }
  return out;
}

void write_batch(const BatchResult& result, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  f << (formats::format_for(path) == formats::FileFormat::kCsv ? to_csv(result)
                                                               : to_json_lines(result));
  if (!f) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

}  // namespace rtfe::exec
