#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rtfe/ml.hpp"
#include "rtfe/sql.hpp"
#include "rtfe/storage.hpp"

namespace rtfe::plan {

struct OptimizationFlags {
  bool query_rewrite = true;
  bool operator_fusion = true;
  bool plan_cache = true;
  bool preagg = true;
  bool parallel_exec = true;

  static OptimizationFlags all_on() { return {}; }
  static OptimizationFlags all_off() { return {false, false, false, false, false}; }

  /// Comma-separated list of enabled flags, e.g. "query_rewrite,preagg";
  /// "none" for all off. parse() accepts the same form and throws
  /// kInvalidConfig on unknown names.
  std::string to_string() const;
  static OptimizationFlags parse(std::string_view list);

  static constexpr const char* kNames[5] = {"query_rewrite", "operator_fusion", "plan_cache",
                                            "preagg", "parallel_exec"};
  bool& operator[](std::size_t i);
  bool operator[](std::size_t i) const;

  friend bool operator==(const OptimizationFlags&, const OptimizationFlags&) = default;
};

enum class Strategy : std::uint8_t { kNaiveScan, kPreAgg };
std::string_view to_string(Strategy s);

/// One window aggregate over a partition/order pair and a frame.
struct WindowSpec {
  std::size_t partition_column = 0;
  std::size_t order_column = 0;
  Frame frame;
  AggregateKind aggregate = AggregateKind::kSum;
  std::size_t target = 0;
  std::string window_name;
  std::string output_name;
};

/// column <op> literal, with the literal already typed to the column.
struct Predicate {
  std::size_t column = 0;
  sql::CompareOp op = sql::CompareOp::kEq;
  Value literal;

  bool test(const Value& v) const;  // null never passes
};

struct SlotRef {
  enum class Kind : std::uint8_t { kColumn, kAggregate, kMl };
  Kind kind = Kind::kColumn;
  std::size_t index = 0;
};

struct MlCall {
  std::shared_ptr<const MlFunction> function;
  std::vector<SlotRef> inputs;
  std::string output_name;
};

struct OutputItem {
  std::string name;
  SlotRef source;
};

struct ScanOp {
  std::vector<std::size_t> columns;
};
struct FilterOp {
  Predicate predicate;
};
struct WindowAggOp {
  std::vector<WindowSpec> specs;
};
struct MlApplyOp {
  std::vector<MlCall> calls;
};
struct ProjectOp {
  std::vector<OutputItem> items;
};
using LogicalOp = std::variant<ScanOp, FilterOp, WindowAggOp, MlApplyOp, ProjectOp>;

/// Canonical pipeline, bottom-up: Scan -> Filter? -> WindowAgg? -> MlApply? -> Project.
struct LogicalPlan {
  std::shared_ptr<const Table> table;
  std::string source;  // normalized statement text
  std::vector<LogicalOp> ops;

  template <class Op>
  const Op* find() const {
    for (const auto& op : ops) {
      if (const auto* p = std::get_if<Op>(&op)) return p;
    }
    return nullptr;
  }
};

/// Predicates evaluated at the scan: a key predicate selects whole
/// partitions, a timestamp predicate a contiguous event range per key.
struct ScanBounds {
  std::optional<Predicate> key_predicate;
  std::optional<Predicate> ts_predicate;
};

/// One windowed pass over the data producing one or more aggregates.
struct WindowPass {
  Frame frame;
  Strategy strategy = Strategy::kNaiveScan;
  std::vector<std::size_t> aggregates;  // indices into PhysicalPlan::aggregates
};

struct PhysicalPlan {
  std::shared_ptr<const Table> table;
  std::uint64_t schema_hash = 0;
  std::size_t key_column = 0;
  std::size_t ts_column = 0;

  std::vector<std::size_t> scan_columns;
  std::vector<int> scan_slot;  // schema index -> position in scan_columns, -1 if not scanned
  ScanBounds pushed;
  std::optional<Predicate> residual_filter;

  std::vector<WindowSpec> aggregates;
  std::vector<WindowPass> passes;
  std::vector<MlCall> ml_calls;
  std::vector<OutputItem> outputs;
  std::shared_ptr<const std::vector<std::string>> output_names;

  OptimizationFlags flags;
  bool strict_w = false;  // AVG divides by the frame size W even for partial windows
  std::uint64_t fingerprint = 0;
  std::string source;

  /// Operator kinds bottom-up, one entry per physical operator
  /// ("Scan", "Filter", "WindowAgg" per pass, "MlApply", "Project").
  std::vector<std::string> operators() const;
};

std::uint64_t fingerprint_of(std::string_view normalized_source);

/// Resolves names and types. Throws kUnknownTable, kUnknownColumn,
/// kUnknownFunction or kTypeError (with source offsets where known).
LogicalPlan build_logical(const sql::Ast& ast, const Catalog& catalog, const MlRegistry& registry,
                          std::string normalized_source);

struct OptimizeResult {
  std::shared_ptr<const PhysicalPlan> plan;
  std::int64_t plan_ns = 0;
};

/// Applies, when enabled and in order: query_rewrite (column pruning and
/// pushdown of key/timestamp predicates into the scan), operator_fusion (one
/// pass per distinct frame) and preagg (eligible passes answered from the
/// pre-aggregate index). All flags off yields a one-to-one translation.
OptimizeResult optimize(const LogicalPlan& plan, const OptimizationFlags& flags,
                        bool strict_w = false);

std::string explain(const LogicalPlan& plan);
std::string explain(const PhysicalPlan& plan);

}  // namespace rtfe::plan
