#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rtfe/types.hpp"

namespace rtfe::sql {

enum class TokenKind : std::uint8_t { kKeyword, kIdentifier, kNumber, kString, kSymbol };

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;  // exact source slice (keywords keep their original case)
  std::size_t offset = 0;

  /// Upper-cased text for keyword comparisons.
  std::string upper() const;
  friend bool operator==(const Token&, const Token&) = default;
};

/// Throws Error(kLexError) at the offset of the first illegal character.
std::vector<Token> tokenize(std::string_view text);

bool is_keyword(std::string_view word);

/// Source position. Positions are deliberately not part of structural
/// equality: two ASTs compare equal when they differ only in offsets.
struct SourcePos {
  std::size_t offset = 0;
  friend bool operator==(SourcePos, SourcePos) { return true; }
};

struct Ident {
  std::string name;
  SourcePos pos;
  friend bool operator==(const Ident&, const Ident&) = default;
};

struct WindowAggItem {
  AggregateKind fn = AggregateKind::kSum;
  Ident target;
  Ident window;
  SourcePos pos;
  friend bool operator==(const WindowAggItem&, const WindowAggItem&) = default;
};

/// ML scalar function call, e.g. PREDICT_CHURN(avg_amount_w).
struct CallItem {
  Ident function;
  std::vector<Ident> args;
  friend bool operator==(const CallItem&, const CallItem&) = default;
};

struct ColumnItem {
  Ident column;
  friend bool operator==(const ColumnItem&, const ColumnItem&) = default;
};

using SelectItem = std::variant<WindowAggItem, CallItem, ColumnItem>;

enum class CompareOp : std::uint8_t { kEq, kLt, kGt, kLe, kGe };
std::string_view to_string(CompareOp op);

using Literal = std::variant<std::int64_t, double, std::string>;

struct Comparison {
  Ident column;
  CompareOp op = CompareOp::kEq;
  Literal value;
  friend bool operator==(const Comparison&, const Comparison&) = default;
};

struct WindowDef {
  Ident name;
  Ident partition;
  Ident order;
  Frame frame;
  friend bool operator==(const WindowDef&, const WindowDef&) = default;
};

struct SelectStmt {
  std::vector<SelectItem> items;
  Ident table;
  std::optional<Comparison> where;
  std::vector<WindowDef> windows;

  const WindowDef* find_window(std::string_view name) const;
  friend bool operator==(const SelectStmt&, const SelectStmt&) = default;
};

enum class StatementKind : std::uint8_t { kSelect, kDeploy };

struct Ast {
  StatementKind kind = StatementKind::kSelect;
  std::optional<Ident> deploy_name;
  SelectStmt select;
  friend bool operator==(const Ast&, const Ast&) = default;
};

struct ParseResult {
  Ast ast;
  std::int64_t parse_ns = 0;
  std::int64_t parse_us() const { return parse_ns / 1000; }
};

/// Parses one statement of the supported subset. Throws Error with code
/// kLexError, kSyntaxError (with offset and expected set) or
/// kUnsupportedFeature (recognized SQL outside the subset).
ParseResult parse(std::string_view text);

/// Canonical SQL text; parse(to_sql(ast)).ast == ast.
std::string to_sql(const Ast& ast);

/// Cache key: keywords upper-cased, whitespace runs collapsed to one space,
/// identifiers and literals untouched. Never fails; idempotent.
std::string normalize(std::string_view text);

/// Output name of a window aggregate, e.g. SUM(amount) OVER w -> "sum_amount_w".
std::string feature_name(const WindowAggItem& item);

}  // namespace rtfe::sql
