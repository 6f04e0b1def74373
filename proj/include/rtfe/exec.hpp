#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtfe/admission.hpp"
#include "rtfe/planner.hpp"

namespace rtfe::exec {

/// Latency terms in nanoseconds on the monotonic clock. The *_us accessors
/// floor to whole microseconds for reporting. total covers the request from
/// admission to a built response; time spent queued for admission is kept
/// apart in queue_ns.
struct LatencyBreakdown {
  std::int64_t parse_ns = 0;
  std::int64_t plan_ns = 0;
  std::int64_t exec_ns = 0;
  std::int64_t total_ns = 0;
  std::int64_t queue_ns = 0;

  std::int64_t parse_us() const { return parse_ns / 1000; }
  std::int64_t plan_us() const { return plan_ns / 1000; }
  std::int64_t exec_us() const { return exec_ns / 1000; }
  std::int64_t total_us() const { return total_ns / 1000; }
  std::int64_t parts_ns() const { return parse_ns + plan_ns + exec_ns; }
};

struct FeatureRow {
  Key key;
  std::int64_t ts = 0;
  std::vector<Value> values;  // one per projected item
  std::shared_ptr<const std::vector<std::string>> names;

  /// Canonical JSON object text with `key` and `ts` first; two rows are
  /// equal iff their normalized forms are byte-identical.
  std::string normalized() const;
};

/// P execution lanes. Every work unit, whether a batch partition or a single
/// request, holds one lane while it runs, so at most P are in flight.
class LanePool {
 public:
  explicit LanePool(std::size_t lanes);

  std::size_t lanes() const { return gate_.limit(); }

  /// Runs fn(i) for i in [0, n) on up to P threads; the caller's thread is
  /// one of them. Exceptions from fn are rethrown after all units finish.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

  /// Holds a lane for the duration of one request.
  AdmissionGate::Permit enter() { return gate_.enter(); }

  std::size_t in_flight() const { return gate_.in_flight(); }
  std::size_t high_water() const { return gate_.high_water(); }
  /// Units completed per worker slot of the most recent parallel_for.
  std::vector<std::size_t> last_lane_counts() const;

 private:
  AdmissionGate gate_;
  mutable std::mutex mu_;
  std::vector<std::size_t> lane_counts_;
};

/// Evaluates `plan` for the anchor (key, t). The anchor event is the first
/// event of `key` stamped t that passes the WHERE clause, if any; bare
/// columns read it and are null without one. Unknown keys yield empty-window
/// values.
/// Throws kStalePlan if the table schema no longer matches the plan.
FeatureRow execute_request(const plan::PhysicalPlan& plan, const Key& key, std::int64_t t,
                           LatencyBreakdown* latency = nullptr);

struct BatchResult {
  std::shared_ptr<const std::vector<std::string>> names;
  std::vector<FeatureRow> rows;  // ordered by (key, ts, seq)
  LatencyBreakdown latency;
};

/// One row per event (anchored at that event) of every key, partitioned by
/// key across the pool's lanes. With a WHERE clause, only events passing it
/// are anchors.
BatchResult execute_batch(const plan::PhysicalPlan& plan, LanePool& pool);
BatchResult execute_batch(const plan::PhysicalPlan& plan, std::size_t lanes);

/// Loads `input` (CSV or JSON-lines) into a scratch table with the plan's
/// schema and runs the batch over it. Throws kIoError, kSchemaMismatch,
/// kOutOfOrder.
BatchResult execute_batch_file(const plan::PhysicalPlan& plan, const std::filesystem::path& input,
                               LanePool& pool);

struct Mismatch {
  Key key;
  std::int64_t t = 0;
  std::string request_row;  // normalized
  std::string batch_row;    // normalized, empty if the batch has no row
};

struct ConsistencyReport {
  std::size_t checked = 0;
  std::size_t excluded = 0;  // anchors the WHERE clause drops from the batch
  std::vector<Mismatch> mismatches;
  bool consistent() const { return mismatches.empty(); }
};

using Anchor = std::pair<Key, std::int64_t>;

/// Compares the request path with the batch path on each sampled anchor.
/// `batch` defaults to a fresh single-lane batch run.
ConsistencyReport check_consistency(const plan::PhysicalPlan& plan, std::span<const Anchor> sample,
                                    const BatchResult* batch = nullptr);

/// Batch output: `key,ts` then one column per projected item.
std::string to_csv(const BatchResult& result);
std::string to_json_lines(const BatchResult& result);
void write_batch(const BatchResult& result, const std::filesystem::path& path);

}  // namespace rtfe::exec
