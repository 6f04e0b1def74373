#include "rtfe/sql.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>

#include "rtfe/clock.hpp"
#include "rtfe/error.hpp"

namespace rtfe::sql {

namespace {

constexpr std::array kKeywords = {
    "SELECT", "FROM",    "WHERE",     "WINDOW", "AS",    "PARTITION", "BY",    "ORDER",
    "ROWS",   "RANGE",   "BETWEEN",   "PRECEDING", "AND", "CURRENT",  "ROW",   "OVER",
    "DEPLOY", "SUM",     "AVG",       "COUNT",  "MIN",   "MAX",
    // Recognized but outside the supported subset.
    "JOIN",   "INNER",   "LEFT",      "RIGHT",  "OUTER", "FULL",      "CROSS", "ON",
    "USING",  "GROUP",   "HAVING",    "LIMIT",  "OFFSET", "UNION",    "DISTINCT", "INSERT",
    "UPDATE", "DELETE",  "CREATE",    "DROP",   "ALTER", "WITH",      "OR",    "NOT",
    "UNBOUNDED", "FOLLOWING", "IN",   "LIKE",   "IS",    "NULL",      "CASE",
};

constexpr std::array kUnsupported = {
    "JOIN",   "INNER",  "LEFT",   "RIGHT",  "OUTER",  "FULL",      "CROSS",     "ON",
    "USING",  "GROUP",  "HAVING", "LIMIT",  "OFFSET", "UNION",     "DISTINCT",  "INSERT",
    "UPDATE", "DELETE", "CREATE", "DROP",   "ALTER",  "WITH",      "OR",        "NOT",
    "UNBOUNDED", "FOLLOWING", "IN", "LIKE", "IS",     "NULL",      "CASE",
};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return c >= '0' && c <= '9'; }

bool in_set(std::string_view word, const auto& set) {
  const std::string u = upper(word);
  return std::find(set.begin(), set.end(), u) != set.end();
}

bool is_aggregate_keyword(const Token& t) {
  return t.kind == TokenKind::kKeyword && parse_aggregate(t.text).has_value();
}

}  // namespace

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::kKeyword: return "keyword";
    case TokenKind::kIdentifier: return "identifier";
    case TokenKind::kNumber: return "number";
    case TokenKind::kString: return "string";
    case TokenKind::kSymbol: return "symbol";
  }
  return "?";
}

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::kEq: return "=";
    case CompareOp::kLt: return "<";
    case CompareOp::kGt: return ">";
    case CompareOp::kLe: return "<=";
    case CompareOp::kGe: return ">=";
  }
  return "?";
}

std::string Token::upper() const { return sql::upper(text); }

bool is_keyword(std::string_view word) { return in_set(word, kKeywords); }

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (ident_start(c)) {
      while (i < n && ident_char(text[i])) ++i;
      const std::string_view word = text.substr(start, i - start);
      out.push_back({is_keyword(word) ? TokenKind::kKeyword : TokenKind::kIdentifier,
                     std::string(word), start});
    } else if (digit(c)) {
      while (i < n && digit(text[i])) ++i;
      if (i + 1 < n && text[i] == '.' && digit(text[i + 1])) {
        ++i;
        while (i < n && digit(text[i])) ++i;
      }
      if (i < n && (text[i] == 'e' || text[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < n && (text[j] == '+' || text[j] == '-')) ++j;
        if (j < n && digit(text[j])) {
          i = j;
          while (i < n && digit(text[i])) ++i;
        }
      }
      out.push_back({TokenKind::kNumber, std::string(text.substr(start, i - start)), start});
    } else if (c == '\'') {
      ++i;
      bool closed = false;
      while (i < n) {
        if (text[i] == '\'') {
          if (i + 1 < n && text[i + 1] == '\'') {
            i += 2;
            continue;
          }
          ++i;
          closed = true;
          break;
        }
        ++i;
      }
      if (!closed) throw Error(ErrorCode::kLexError, "unterminated string literal", start);
      out.push_back({TokenKind::kString, std::string(text.substr(start, i - start)), start});
    } else {
      std::size_t len = 0;
      const std::string_view two = text.substr(i, 2);
      if (two == "<=" || two == ">=" || two == "<>" || two == "!=") {
        len = 2;
      } else if (std::string_view("(),=<>;*.-+/").find(c) != std::string_view::npos) {
        len = 1;
      }
      if (len == 0) {
        throw Error(ErrorCode::kLexError,
                    "illegal character at offset " + std::to_string(start), start);
      }
      i += len;
      out.push_back({TokenKind::kSymbol, std::string(text.substr(start, len)), start});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

class Parser {
 public:
  Parser(std::string_view text, std::vector<Token> tokens)
      : text_(text), tokens_(std::move(tokens)) {}

  Ast statement() {
    Ast ast;
    if (at_keyword("DEPLOY")) {
      advance();
      ast.kind = StatementKind::kDeploy;
      ast.deploy_name = identifier();
      keyword("AS");
      ast.select = select();
    } else if (at_keyword("SELECT")) {
      ast.select = select();
    } else {
      fail({"SELECT", "DEPLOY"});
    }
    if (at_symbol(";")) advance();
    if (!at_end()) fail({"end of input"});
    check_windows(ast.select);
    return ast;
  }

 private:
  SelectStmt select() {
    SelectStmt s;
    keyword("SELECT");
    s.items.push_back(item());
    while (at_symbol(",")) {
      advance();
      s.items.push_back(item());
    }
    keyword("FROM");
    if (at_symbol("(")) unsupported("subqueries are not supported");
    s.table = identifier();
    if (at_keyword("WHERE")) {
      advance();
      s.where = comparison();
      if (at_keyword("AND") || at_keyword("OR")) {
        unsupported("compound predicates are not supported");
      }
    }
    if (at_keyword("WINDOW")) {
      advance();
      s.windows.push_back(window_def());
      while (at_symbol(",")) {
        advance();
        s.windows.push_back(window_def());
      }
    }
    if (at_keyword("ORDER")) unsupported("ORDER BY of result sets is not supported");
    return s;
  }

  SelectItem item() {
    const Token& t = peek();
    if (is_aggregate_keyword(t)) {
      WindowAggItem a;
      a.pos = {t.offset};
      a.fn = *parse_aggregate(t.text);
      advance();
      symbol("(");
      a.target = identifier();
      symbol(")");
      keyword("OVER");
      a.window = identifier();
      return a;
    }
    if (t.kind == TokenKind::kIdentifier) {
      Ident name = identifier();
      if (!at_symbol("(")) return ColumnItem{std::move(name)};
      advance();
      CallItem call{std::move(name), {}};
      call.args.push_back(identifier());
      while (at_symbol(",")) {
        advance();
        call.args.push_back(identifier());
      }
      symbol(")");
      return call;
    }
    fail({"identifier", "SUM", "AVG", "COUNT", "MIN", "MAX"});
  }

  Comparison comparison() {
    Comparison c;
    c.column = identifier();
    const Token& t = peek();
    static constexpr std::array<std::pair<std::string_view, CompareOp>, 5> kOps = {{
        {"=", CompareOp::kEq},
        {"<", CompareOp::kLt},
        {">", CompareOp::kGt},
        {"<=", CompareOp::kLe},
        {">=", CompareOp::kGe},
    }};
    bool found = false;
    if (t.kind == TokenKind::kSymbol) {
      for (const auto& [text, op] : kOps) {
        if (t.text == text) {
          c.op = op;
          found = true;
        }
      }
    }
    if (!found) fail({"=", "<", ">", "<=", ">="});
    advance();
    c.value = literal();
    return c;
  }

  Literal literal() {
    std::string sign;
    if (at_symbol("-")) {
      sign = "-";
      advance();
      if (peek().kind != TokenKind::kNumber) fail({"number"});
    }
    const Token& t = peek();
    if (t.kind == TokenKind::kString) {
      advance();
      std::string v;
      for (std::size_t i = 1; i + 1 < t.text.size(); ++i) {
        v += t.text[i];
        if (t.text[i] == '\'') ++i;  // '' escape
      }
      return v;
    }
    if (t.kind != TokenKind::kNumber) fail({"literal"});
    const std::string text = sign + t.text;
    const bool is_float = t.text.find_first_of(".eE") != std::string::npos;
    const char* b = text.data();
    const char* e = b + text.size();
    if (is_float) {
      double v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) fail_at(t.offset, {"number"}, "numeric literal out of range");
      advance();
      return v;
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail_at(t.offset, {"integer"}, "integer literal out of range");
    advance();
    return v;
  }

  WindowDef window_def() {
    WindowDef w;
    w.name = identifier();
    keyword("AS");
    symbol("(");
    keyword("PARTITION");
    keyword("BY");
    w.partition = identifier();
    keyword("ORDER");
    keyword("BY");
    w.order = identifier();
    w.frame = frame();
    symbol(")");
    return w;
  }

  Frame frame() {
    if (at_keyword("ROWS")) {
      advance();
      keyword("BETWEEN");
      RowsFrame f;
      f.rows = positive_int();
      keyword("PRECEDING");
      keyword("AND");
      if (at_keyword("CURRENT")) {
        advance();
        keyword("ROW");
        f.include_current = true;
      } else if (peek().kind == TokenKind::kNumber && peek().text == "1") {
        advance();
        keyword("PRECEDING");
      } else {
        if (at_keyword("UNBOUNDED") || at_keyword("FOLLOWING")) {
          unsupported("only '1 PRECEDING' or 'CURRENT ROW' may end a ROWS frame");
        }
        fail({"1", "CURRENT"});
      }
      return f;
    }
    if (at_keyword("RANGE")) {
      advance();
      keyword("BETWEEN");
      const std::size_t at = peek().offset;
      const std::int64_t amount = positive_int();
      const Token& unit = peek();
      std::int64_t scale = 0;
      if (unit.kind == TokenKind::kIdentifier) {
        const std::string u = lower(unit.text);
        if (u == "ms") scale = 1;
        if (u == "s") scale = 1000;
        if (u == "m") scale = 60'000;
        if (u == "h") scale = 3'600'000;
      }
      if (scale == 0) fail({"ms", "s", "m", "h"});
      advance();
      if (amount > INT64_MAX / scale) fail_at(at, {"duration"}, "duration out of range");
      keyword("PRECEDING");
      keyword("AND");
      keyword("CURRENT");
      keyword("ROW");
      return RangeFrame{amount * scale};
    }
    fail({"ROWS", "RANGE"});
  }

  std::int64_t positive_int() {
    const Token& t = peek();
    if (t.kind != TokenKind::kNumber || t.text.find_first_of(".eE") != std::string::npos) {
      fail({"positive integer"});
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || v < 1) fail_at(t.offset, {"positive integer"}, "window bound must be >= 1");
    advance();
    return v;
  }

  void check_windows(const SelectStmt& s) {
    for (std::size_t i = 0; i < s.windows.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (s.windows[i].name.name == s.windows[j].name.name) {
          fail_at(s.windows[i].name.pos.offset, {"distinct window name"},
                  "window '" + s.windows[i].name.name + "' defined twice");
        }
      }
    }
    for (const auto& it : s.items) {
      if (const auto* a = std::get_if<WindowAggItem>(&it)) {
        if (!s.find_window(a->window.name)) {
          fail_at(a->window.pos.offset, {"defined window name"},
                  "window '" + a->window.name + "' is not defined");
        }
      }
    }
  }

  // -- token helpers --------------------------------------------------------

  bool at_end() const { return pos_ >= tokens_.size(); }

  const Token& peek() const {
    static const Token kEnd{TokenKind::kSymbol, "", 0};
    return at_end() ? kEnd : tokens_[pos_];
  }

  std::size_t offset() const { return at_end() ? text_.size() : tokens_[pos_].offset; }
  void advance() { ++pos_; }

  bool at_keyword(std::string_view kw) const {
    return !at_end() && peek().kind == TokenKind::kKeyword && peek().upper() == kw;
  }
  bool at_symbol(std::string_view s) const {
    return !at_end() && peek().kind == TokenKind::kSymbol && peek().text == s;
  }

  void keyword(std::string_view kw) {
    if (!at_keyword(kw)) fail({std::string(kw)});
    advance();
  }
  void symbol(std::string_view s) {
    if (!at_symbol(s)) fail({"'" + std::string(s) + "'"});
    advance();
  }
  Ident identifier() {
    if (at_end() || peek().kind != TokenKind::kIdentifier) fail({"identifier"});
    Ident id{peek().text, {peek().offset}};
    advance();
    return id;
  }

  [[noreturn]] void unsupported(const std::string& what) {
    throw Error(ErrorCode::kUnsupportedFeature, what, offset());
  }

  [[noreturn]] void fail(std::vector<std::string> expected) {
    if (!at_end() && peek().kind == TokenKind::kKeyword && in_set(peek().text, kUnsupported)) {
      unsupported(peek().upper() + " is not supported");
    }
    std::string msg = "expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) msg += i + 1 == expected.size() ? " or " : ", ";
      msg += expected[i];
    }
    msg += at_end() ? " at end of input" : " near '" + peek().text + "'";
    throw Error(ErrorCode::kSyntaxError, msg, offset(), std::move(expected));
  }

  [[noreturn]] void fail_at(std::size_t at, std::vector<std::string> expected,
                            const std::string& msg) {
    throw Error(ErrorCode::kSyntaxError, msg, at, std::move(expected));
  }

  std::string_view text_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

std::string literal_sql(const Literal& lit) {
  if (const auto* i = std::get_if<std::int64_t>(&lit)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&lit)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *d);
    std::string s = buf;
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
  }
  std::string out = "'";
  for (char c : std::get<std::string>(lit)) {
    if (c == '\'') out += '\'';
    out += c;
  }
  return out + "'";
}

std::string frame_sql(const Frame& frame) {
  if (const auto* r = std::get_if<RowsFrame>(&frame)) {
    return "ROWS BETWEEN " + std::to_string(r->rows) + " PRECEDING AND " +
           (r->include_current ? "CURRENT ROW" : "1 PRECEDING");
  }
  const std::int64_t ms = std::get<RangeFrame>(frame).duration_ms;
  std::string amount;
  if (ms % 3'600'000 == 0) {
    amount = std::to_string(ms / 3'600'000) + "h";
  } else if (ms % 60'000 == 0) {
    amount = std::to_string(ms / 60'000) + "m";
  } else if (ms % 1000 == 0) {
    amount = std::to_string(ms / 1000) + "s";
  } else {
    amount = std::to_string(ms) + "ms";
  }
  return "RANGE BETWEEN " + amount + " PRECEDING AND CURRENT ROW";
}

}  // namespace

const WindowDef* SelectStmt::find_window(std::string_view name) const {
  for (const auto& w : windows) {
    if (w.name.name == name) return &w;
  }
  return nullptr;
}

ParseResult parse(std::string_view text) {
  Stopwatch sw;
  Parser parser(text, tokenize(text));
  ParseResult r{parser.statement(), 0};
  r.parse_ns = sw.elapsed_ns();
  return r;
}

std::string to_sql(const Ast& ast) {
  std::string out;
  if (ast.kind == StatementKind::kDeploy) out = "DEPLOY " + ast.deploy_name->name + " AS ";
  const SelectStmt& s = ast.select;
  out += "SELECT ";
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    if (i) out += ", ";
    std::visit(
        [&](const auto& it) {
          using T = std::decay_t<decltype(it)>;
          if constexpr (std::is_same_v<T, WindowAggItem>) {
            out += std::string(rtfe::to_string(it.fn)) + "(" + it.target.name + ") OVER " +
                   it.window.name;
          } else if constexpr (std::is_same_v<T, CallItem>) {
            out += it.function.name + "(";
            for (std::size_t a = 0; a < it.args.size(); ++a) {
              if (a) out += ", ";
              out += it.args[a].name;
            }
            out += ")";
          } else {
            out += it.column.name;
          }
        },
        s.items[i]);
  }
  out += " FROM " + s.table.name;
  if (s.where) {
    out += " WHERE " + s.where->column.name + " " + std::string(to_string(s.where->op)) + " " +
           literal_sql(s.where->value);
  }
  for (std::size_t i = 0; i < s.windows.size(); ++i) {
    const auto& w = s.windows[i];
    out += i ? ", " : " WINDOW ";
    out += w.name.name + " AS (PARTITION BY " + w.partition.name + " ORDER BY " + w.order.name +
           " " + frame_sql(w.frame) + ")";
  }
  return out;
}

std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
      ++i;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    const std::size_t start = i;
    if (c == '\'') {
      ++i;
      while (i < n) {
        if (text[i] == '\'') {
          if (i + 1 < n && text[i + 1] == '\'') {
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        ++i;
      }
      out.append(text.substr(start, i - start));
    } else if (ident_start(c)) {
      while (i < n && ident_char(text[i])) ++i;
      const std::string_view word = text.substr(start, i - start);
      out += is_keyword(word) ? upper(word) : std::string(word);
    } else if (digit(c)) {
      while (i < n && (ident_char(text[i]) || text[i] == '.')) ++i;
      out.append(text.substr(start, i - start));
    } else {
      out += c;
      ++i;
    }
  }
  return out;
}

std::string feature_name(const WindowAggItem& item) {
  return lower(rtfe::to_string(item.fn)) + "_" + item.target.name + "_" + item.window.name;
}

}  // namespace rtfe::sql
