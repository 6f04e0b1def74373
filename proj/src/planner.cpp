#include "rtfe/planner.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "rtfe/clock.hpp"
#include "rtfe/error.hpp"
#include "rtfe/formats.hpp"
#include "rtfe/hash.hpp"

namespace rtfe::plan {

// ---------------------------------------------------------------------------
// Flags

bool& OptimizationFlags::operator[](std::size_t i) {
  switch (i) {
    case 0: return query_rewrite;
    case 1: return operator_fusion;
    case 2: return plan_cache;
    case 3: return preagg;
    default: return parallel_exec;
  }
}

bool OptimizationFlags::operator[](std::size_t i) const {
  return const_cast<OptimizationFlags&>(*this)[i];
}

std::string OptimizationFlags::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < 5; ++i) {
    if (!(*this)[i]) continue;
    if (!out.empty()) out += ',';
    out += kNames[i];
  }
  return out.empty() ? "none" : out;
}

OptimizationFlags OptimizationFlags::parse(std::string_view list) {
  OptimizationFlags f = all_off();
  if (list == "all") return all_on();
  if (list.empty() || list == "none") return f;
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    std::string_view name = list.substr(start, end - start);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.front()))) name.remove_prefix(1);
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.remove_suffix(1);
    bool found = false;
    for (std::size_t i = 0; i < 5; ++i) {
      if (name == kNames[i]) {
        f[i] = true;
        found = true;
      }
    }
    if (!found) {
      throw Error(ErrorCode::kInvalidConfig, "unknown optimization flag '" + std::string(name) + "'");
    }
    start = end + 1;
  }
  return f;
}

std::string_view to_string(Strategy s) {
  return s == Strategy::kPreAgg ? "preagg" : "naive_scan";
}

// ---------------------------------------------------------------------------
// Predicates

bool Predicate::test(const Value& v) const {
  if (is_null(v)) return false;
  int cmp = 0;
  if (const auto* lit = std::get_if<std::string>(&literal)) {
    const auto* s = std::get_if<std::string>(&v);
    if (!s) return false;
    cmp = s->compare(*lit);
  } else if (std::holds_alternative<std::int64_t>(literal) &&
             std::holds_alternative<std::int64_t>(v)) {
    const auto a = std::get<std::int64_t>(v);
    const auto b = std::get<std::int64_t>(literal);
    cmp = a < b ? -1 : (a > b ? 1 : 0);
  } else {
    auto as_double = [](const Value& x) -> std::optional<double> {
      if (const auto* i = std::get_if<std::int64_t>(&x)) return static_cast<double>(*i);
      if (const auto* d = std::get_if<double>(&x)) return *d;
      return std::nullopt;
    };
    const auto a = as_double(v);
    const auto b = as_double(literal);
    if (!a || !b) return false;
    cmp = *a < *b ? -1 : (*a > *b ? 1 : 0);
  }
  switch (op) {
    case sql::CompareOp::kEq: return cmp == 0;
    case sql::CompareOp::kLt: return cmp < 0;
    case sql::CompareOp::kGt: return cmp > 0;
    case sql::CompareOp::kLe: return cmp <= 0;
    case sql::CompareOp::kGe: return cmp >= 0;
  }
  return false;
}

std::uint64_t fingerprint_of(std::string_view normalized_source) {
  return fnv1a64(normalized_source);
}

// ---------------------------------------------------------------------------
// build_logical

namespace {

[[noreturn]] void plan_error(ErrorCode code, const std::string& msg, std::size_t offset) {
  throw Error(code, msg, offset);
}

std::size_t resolve_column(const TableSchema& schema, const sql::Ident& id) {
  const auto idx = schema.find(id.name);
  if (!idx) {
    plan_error(ErrorCode::kUnknownColumn,
               "unknown column '" + id.name + "' in table '" + schema.name + "'", id.pos.offset);
  }
  return *idx;
}

Value typed_literal(const ColumnDef& col, const sql::Literal& lit, std::size_t offset) {
  const bool numeric_lit = !std::holds_alternative<std::string>(lit);
  const bool numeric_col = col.type != ColumnType::kString;
  if (numeric_lit != numeric_col) {
    plan_error(ErrorCode::kTypeError,
               "literal type does not match column '" + col.name + "' (" +
                   std::string(to_string(col.type)) + ")",
               offset);
  }
  return std::visit([](const auto& x) -> Value { return x; }, lit);
}

}  // namespace

LogicalPlan build_logical(const sql::Ast& ast, const Catalog& catalog, const MlRegistry& registry,
                          std::string normalized_source) {
  const sql::SelectStmt& s = ast.select;
  auto table = catalog.find(s.table.name);
  if (!table) {
    plan_error(ErrorCode::kUnknownTable, "unknown table '" + s.table.name + "'",
               s.table.pos.offset);
  }
  const TableSchema& schema = table->schema();
  const std::size_t key_col = schema.key_index();
  const std::size_t ts_col = schema.ts_index();

  LogicalPlan plan;
  plan.table = table;
  plan.source = std::move(normalized_source);

  ScanOp scan;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) scan.columns.push_back(i);
  plan.ops.emplace_back(std::move(scan));

  if (s.where) {
    const std::size_t col = resolve_column(schema, s.where->column);
    FilterOp f;
    f.predicate.column = col;
    f.predicate.op = s.where->op;
    f.predicate.literal = typed_literal(schema.columns[col], s.where->value,
                                        s.where->column.pos.offset);
    plan.ops.emplace_back(std::move(f));
  }

  WindowAggOp windows;
  MlApplyOp ml;
  ProjectOp project;

  // Aggregates first so ML arguments can refer to them regardless of order.
  for (const auto& item : s.items) {
    const auto* a = std::get_if<sql::WindowAggItem>(&item);
    if (!a) continue;
    const sql::WindowDef* w = s.find_window(a->window.name);
    WindowSpec spec;
    spec.partition_column = resolve_column(schema, w->partition);
    spec.order_column = resolve_column(schema, w->order);
    if (spec.partition_column != key_col) {
      plan_error(ErrorCode::kTypeError,
                 "window must be partitioned by key column '" + schema.key_column + "'",
                 w->partition.pos.offset);
    }
    if (spec.order_column != ts_col) {
      plan_error(ErrorCode::kTypeError,
                 "window must be ordered by timestamp column '" + schema.ts_column + "'",
                 w->order.pos.offset);
    }
    spec.frame = w->frame;
    spec.aggregate = a->fn;
    spec.target = resolve_column(schema, a->target);
    const ColumnType tt = schema.columns[spec.target].type;
    if (a->fn != AggregateKind::kCount && !is_numeric(tt)) {
      plan_error(ErrorCode::kTypeError,
                 std::string(to_string(a->fn)) + " needs a numeric column; '" + a->target.name +
                     "' is " + std::string(to_string(tt)),
                 a->target.pos.offset);
    }
    if (a->fn != AggregateKind::kCount && spec.target == key_col) {
      plan_error(ErrorCode::kTypeError, "cannot aggregate the partition key column '" +
                                            a->target.name + "'",
                 a->target.pos.offset);
    }
    spec.window_name = w->name.name;
    spec.output_name = sql::feature_name(*a);
    windows.specs.push_back(std::move(spec));
  }

  std::size_t agg_i = 0;
  for (const auto& item : s.items) {
    if (std::holds_alternative<sql::WindowAggItem>(item)) {
      const auto& spec = windows.specs[agg_i];
      project.items.push_back({spec.output_name, {SlotRef::Kind::kAggregate, agg_i}});
      ++agg_i;
    } else if (const auto* c = std::get_if<sql::ColumnItem>(&item)) {
      const std::size_t col = resolve_column(schema, c->column);
      project.items.push_back({c->column.name, {SlotRef::Kind::kColumn, col}});
    } else {
      const auto& call = std::get<sql::CallItem>(item);
      auto fn = registry.find(call.function.name);
      if (!fn) {
        plan_error(ErrorCode::kUnknownFunction, "unknown function '" + call.function.name + "'",
                   call.function.pos.offset);
      }
      if (fn->arity() != call.args.size()) {
        plan_error(ErrorCode::kTypeError,
                   call.function.name + " takes " + std::to_string(fn->arity()) +
                       " argument(s), got " + std::to_string(call.args.size()),
                   call.function.pos.offset);
      }
      MlCall mc;
      mc.function = fn;
      mc.output_name = call.function.name;
      std::transform(mc.output_name.begin(), mc.output_name.end(), mc.output_name.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      for (const auto& arg : call.args) {
        std::optional<std::size_t> feature;
        for (std::size_t k = 0; k < windows.specs.size(); ++k) {
          if (windows.specs[k].output_name == arg.name) {
            feature = k;
            break;
          }
        }
        if (feature) {
          mc.inputs.push_back({SlotRef::Kind::kAggregate, *feature});
          continue;
        }
        const auto col = schema.find(arg.name);
        if (!col) {
          plan_error(ErrorCode::kUnknownColumn,
                     "'" + arg.name + "' is neither a column nor a feature of this query",
                     arg.pos.offset);
        }
        if (!is_numeric(schema.columns[*col].type)) {
          plan_error(ErrorCode::kTypeError, "ML input '" + arg.name + "' must be numeric",
                     arg.pos.offset);
        }
        mc.inputs.push_back({SlotRef::Kind::kColumn, *col});
      }
      project.items.push_back({mc.output_name, {SlotRef::Kind::kMl, ml.calls.size()}});
      ml.calls.push_back(std::move(mc));
    }
  }

  if (!windows.specs.empty()) plan.ops.emplace_back(std::move(windows));
  if (!ml.calls.empty()) plan.ops.emplace_back(std::move(ml));
  plan.ops.emplace_back(std::move(project));
  return plan;
}

// ---------------------------------------------------------------------------
// optimize

OptimizeResult optimize(const LogicalPlan& logical, const OptimizationFlags& flags, bool strict_w) {
  Stopwatch sw;
  auto p = std::make_shared<PhysicalPlan>();
  const TableSchema& schema = logical.table->schema();
  p->table = logical.table;
  p->schema_hash = schema.hash();
  p->key_column = schema.key_index();
  p->ts_column = schema.ts_index();
  p->flags = flags;
  p->strict_w = strict_w;
  p->source = logical.source;
  p->fingerprint = fingerprint_of(logical.source);

  const auto* filter = logical.find<FilterOp>();
  if (const auto* w = logical.find<WindowAggOp>()) p->aggregates = w->specs;
  if (const auto* m = logical.find<MlApplyOp>()) p->ml_calls = m->calls;
  p->outputs = logical.find<ProjectOp>()->items;

  // (1) query rewrite
  if (flags.query_rewrite) {
    std::set<std::size_t> used;
    for (const auto& spec : p->aggregates) {
      used.insert(spec.order_column);
      used.insert(spec.target);
    }
    for (const auto& call : p->ml_calls) {
      for (const auto& in : call.inputs) {
        if (in.kind == SlotRef::Kind::kColumn) used.insert(in.index);
      }
    }
    for (const auto& out : p->outputs) {
      if (out.source.kind == SlotRef::Kind::kColumn) used.insert(out.source.index);
    }
    // A key predicate selects partitions, so the key column itself is not read.
    if (filter && filter->predicate.column != p->key_column) used.insert(filter->predicate.column);
    p->scan_columns.assign(used.begin(), used.end());
    if (filter) {
      if (filter->predicate.column == p->key_column) {
        p->pushed.key_predicate = filter->predicate;
      } else if (filter->predicate.column == p->ts_column) {
        p->pushed.ts_predicate = filter->predicate;
      } else {
        p->residual_filter = filter->predicate;
      }
    }
  } else {
    p->scan_columns = logical.find<ScanOp>()->columns;
    if (filter) p->residual_filter = filter->predicate;
  }
  p->scan_slot.assign(schema.columns.size(), -1);
  for (std::size_t i = 0; i < p->scan_columns.size(); ++i) {
    p->scan_slot[p->scan_columns[i]] = static_cast<int>(i);
  }

  // (2) operator fusion: partition and order are fixed per table, so specs
  // sharing a frame share a pass.
  for (std::size_t i = 0; i < p->aggregates.size(); ++i) {
    const Frame& frame = p->aggregates[i].frame;
    WindowPass* target = nullptr;
    if (flags.operator_fusion) {
      for (auto& pass : p->passes) {
        if (pass.frame == frame) target = &pass;
      }
    }
    if (!target) {
      p->passes.push_back({frame, Strategy::kNaiveScan, {}});
      target = &p->passes.back();
    }
    target->aggregates.push_back(i);
  }

  // (3) pre-aggregation: every (aggregate, frame) pair has an index route;
  // a residual filter changes window membership, which the index cannot see.
  if (flags.preagg && !p->residual_filter) {
    for (auto& pass : p->passes) pass.strategy = Strategy::kPreAgg;
  }

  auto names = std::make_shared<std::vector<std::string>>();
  for (const auto& o : p->outputs) names->push_back(o.name);
  p->output_names = std::move(names);

  OptimizeResult r;
  r.plan = std::move(p);
  r.plan_ns = sw.elapsed_ns();
  return r;
}

std::vector<std::string> PhysicalPlan::operators() const {
  std::vector<std::string> ops = {"Scan"};
  if (residual_filter) ops.emplace_back("Filter");
  for (std::size_t i = 0; i < passes.size(); ++i) ops.emplace_back("WindowAgg");
  if (!ml_calls.empty()) ops.emplace_back("MlApply");
  ops.emplace_back("Project");
  return ops;
}

// ---------------------------------------------------------------------------
// explain

namespace {

std::string literal_text(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return formats::format_double(*d);
  if (const auto* s = std::get_if<std::string>(&v)) return "'" + *s + "'";
  return "NULL";
}

std::string predicate_text(const TableSchema& schema, const Predicate& p) {
  return schema.columns[p.column].name + " " + std::string(sql::to_string(p.op)) + " " +
         literal_text(p.literal);
}

std::string agg_text(const TableSchema& schema, const WindowSpec& spec) {
  return std::string(to_string(spec.aggregate)) + "(" + schema.columns[spec.target].name + ")";
}

std::string ml_text(const TableSchema& schema, const std::vector<WindowSpec>& aggs,
                    const std::vector<MlCall>& calls) {
  std::string out;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    if (i) out += "; ";
    out += calls[i].output_name + "=" + calls[i].function->name + "(";
    for (std::size_t k = 0; k < calls[i].inputs.size(); ++k) {
      if (k) out += ",";
      const auto& in = calls[i].inputs[k];
      out += in.kind == SlotRef::Kind::kAggregate ? aggs[in.index].output_name
                                                  : schema.columns[in.index].name;
    }
    out += ")";
  }
  return out;
}

std::string column_list(const TableSchema& schema, const std::vector<std::size_t>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ",";
    out += schema.columns[cols[i]].name;
  }
  return out;
}

std::string project_text(const std::vector<OutputItem>& items) {
  std::string out = "Project[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i].name;
  }
  return out + "]";
}

// Lines are collected bottom-up and printed top-down, one indent per level.
std::string render(const std::vector<std::string>& bottom_up) {
  std::string out;
  const std::size_t n = bottom_up.size();
  for (std::size_t level = 0; level < n; ++level) {
    out += std::string(level * 2, ' ') + bottom_up[n - 1 - level] + "\n";
  }
  return out;
}

}  // namespace

std::string explain(const LogicalPlan& plan) {
  const TableSchema& schema = plan.table->schema();
  std::vector<std::string> lines;
  for (const auto& op : plan.ops) {
    std::visit(
        [&](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, ScanOp>) {
            lines.push_back("Scan[" + schema.name + ", columns=" + column_list(schema, o.columns) +
                            "]");
          } else if constexpr (std::is_same_v<T, FilterOp>) {
            lines.push_back("Filter[" + predicate_text(schema, o.predicate) + "]");
          } else if constexpr (std::is_same_v<T, WindowAggOp>) {
            std::string s = "WindowAgg[";
            for (std::size_t i = 0; i < o.specs.size(); ++i) {
              if (i) s += ", ";
              s += agg_text(schema, o.specs[i]) + " OVER " + describe(o.specs[i].frame);
            }
            lines.push_back(s + "]");
          } else if constexpr (std::is_same_v<T, MlApplyOp>) {
            const auto* w = plan.find<WindowAggOp>();
            lines.push_back("MlApply[" +
                            ml_text(schema, w ? w->specs : std::vector<WindowSpec>{}, o.calls) +
                            "]");
          } else {
            lines.push_back(project_text(o.items));
          }
        },
        op);
  }
  return render(lines);
}

std::string explain(const PhysicalPlan& plan) {
  const TableSchema& schema = plan.table->schema();
  std::vector<std::string> lines;
  std::string scan = "Scan[" + schema.name + ", columns=" + column_list(schema, plan.scan_columns);
  if (plan.pushed.key_predicate) scan += ", key: " + predicate_text(schema, *plan.pushed.key_predicate);
  if (plan.pushed.ts_predicate) scan += ", ts: " + predicate_text(schema, *plan.pushed.ts_predicate);
  lines.push_back(scan + "]");
  if (plan.residual_filter) {
    lines.push_back("Filter[" + predicate_text(schema, *plan.residual_filter) + "]");
  }
  for (const auto& pass : plan.passes) {
    std::string s = "WindowAgg[" + describe(pass.frame) +
                    ", strategy=" + std::string(to_string(pass.strategy)) + ", aggs=";
    for (std::size_t i = 0; i < pass.aggregates.size(); ++i) {
      if (i) s += ",";
      s += agg_text(schema, plan.aggregates[pass.aggregates[i]]);
    }
    lines.push_back(s + "]");
  }
  if (!plan.ml_calls.empty()) {
    lines.push_back("MlApply[" + ml_text(schema, plan.aggregates, plan.ml_calls) + "]");
  }
  lines.push_back(project_text(plan.outputs));
  return render(lines);
}

}  // namespace rtfe::plan
