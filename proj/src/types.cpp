#include "rtfe/types.hpp"

#include <algorithm>
#include <cctype>

#include "rtfe/error.hpp"

namespace rtfe {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

}  // namespace

std::string_view to_string(ColumnType type) {
  switch (type) {
    case ColumnType::kInt64: return "int64";
    case ColumnType::kFloat64: return "float64";
    case ColumnType::kString: return "string";
    case ColumnType::kTimestamp: return "timestamp";
  }
  return "?";
}

std::optional<ColumnType> parse_column_type(std::string_view name) {
  if (name == "int64") return ColumnType::kInt64;
  if (name == "float64") return ColumnType::kFloat64;
  if (name == "string") return ColumnType::kString;
  if (name == "timestamp") return ColumnType::kTimestamp;
  return std::nullopt;
}

std::string to_string(const Key& key) {
  if (const auto* i = std::get_if<std::int64_t>(&key)) return std::to_string(*i);
  return std::get<std::string>(key);
}

Value to_value(const Key& key) {
  if (const auto* i = std::get_if<std::int64_t>(&key)) return *i;
  return std::get<std::string>(key);
}

std::string_view to_string(AggregateKind kind) {
  switch (kind) {
    case AggregateKind::kSum: return "SUM";
    case AggregateKind::kAvg: return "AVG";
    case AggregateKind::kCount: return "COUNT";
    case AggregateKind::kMin: return "MIN";
    case AggregateKind::kMax: return "MAX";
  }
  return "?";
}

std::optional<AggregateKind> parse_aggregate(std::string_view name) {
  const std::string u = upper(name);
  if (u == "SUM") return AggregateKind::kSum;
  if (u == "AVG") return AggregateKind::kAvg;
  if (u == "COUNT") return AggregateKind::kCount;
  if (u == "MIN") return AggregateKind::kMin;
  if (u == "MAX") return AggregateKind::kMax;
  return std::nullopt;
}

std::string describe(const Frame& frame) {
  if (const auto* rows = std::get_if<RowsFrame>(&frame)) {
    std::string s = "w=" + std::to_string(rows->rows) + " ROWS";
    if (rows->include_current) s += "+CURRENT";
    return s;
  }
  return "range=" + std::to_string(std::get<RangeFrame>(frame).duration_ms) + "ms RANGE";
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDuplicateTable: return "duplicate_table";
    case ErrorCode::kInvalidSchema: return "invalid_schema";
    case ErrorCode::kUnknownTable: return "unknown_table";
    case ErrorCode::kSchemaMismatch: return "schema_mismatch";
    case ErrorCode::kOutOfOrder: return "out_of_order";
    case ErrorCode::kResourceExhausted: return "resource_exhausted";
    case ErrorCode::kLexError: return "lex_error";
    case ErrorCode::kSyntaxError: return "syntax_error";
    case ErrorCode::kUnsupportedFeature: return "unsupported_feature";
    case ErrorCode::kUnknownColumn: return "unknown_column";
    case ErrorCode::kUnknownFunction: return "unknown_function";
    case ErrorCode::kTypeError: return "type_error";
    case ErrorCode::kFingerprintMismatch: return "fingerprint_mismatch";
    case ErrorCode::kStalePlan: return "stale_plan";
    case ErrorCode::kDuplicateName: return "duplicate_name";
    case ErrorCode::kNonFiniteWeight: return "non_finite_weight";
    case ErrorCode::kIoError: return "io_error";
    case ErrorCode::kDuplicateDeployment: return "duplicate_deployment";
    case ErrorCode::kUnknownDeployment: return "unknown_deployment";
    case ErrorCode::kAdmissionTimeout: return "admission_timeout";
    case ErrorCode::kMalformed: return "malformed";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kBindFailure: return "bind_failure";
    case ErrorCode::kInsufficientData: return "insufficient_data";
    case ErrorCode::kInternal: return "internal";
  }
  return "internal";
}

std::string_view wire_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kLexError:
    case ErrorCode::kSyntaxError:
    case ErrorCode::kUnsupportedFeature:
      return "parse_error";
    case ErrorCode::kUnknownColumn:
    case ErrorCode::kUnknownFunction:
    case ErrorCode::kTypeError:
    case ErrorCode::kFingerprintMismatch:
    case ErrorCode::kStalePlan:
      return "plan_error";
    default:
      return to_string(code);
  }
}

}  // namespace rtfe
