#include "rtfe/formats.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rtfe/error.hpp"

namespace rtfe::formats {

using nlohmann::json;

FileFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::kCsv : FileFormat::kJsonLines;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json value_to_json(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return std::isfinite(*d) ? json(*d) : json();
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return nullptr;
}

namespace {

[[noreturn]] void mismatch(const std::string& field, std::string_view what) {
  throw Error(ErrorCode::kSchemaMismatch, "field '" + field + "': " + std::string(what));
}

Value json_to_value(const ColumnDef& col, const json& j) {
  if (j.is_null()) return {};
  switch (col.type) {
    case ColumnType::kInt64:
    case ColumnType::kTimestamp:
      if (j.is_number_integer()) return j.get<std::int64_t>();
      mismatch(col.name, "expected integer");
    case ColumnType::kFloat64:
      if (j.is_number()) return j.get<double>();
      mismatch(col.name, "expected number");
    case ColumnType::kString:
      if (j.is_string()) return j.get<std::string>();
      mismatch(col.name, "expected string");
  }
  mismatch(col.name, "bad type");
}

Value text_to_value(const ColumnDef& col, const CsvField& f) {
  if (f.text.empty() && !f.quoted) return {};
  const char* b = f.text.data();
  const char* e = b + f.text.size();
  switch (col.type) {
    case ColumnType::kInt64:
    case ColumnType::kTimestamp: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) mismatch(col.name, "expected integer");
      return v;
    }
    case ColumnType::kFloat64: {
      double v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e) mismatch(col.name, "expected number");
      return v;
    }
    case ColumnType::kString:
      return f.text;
  }
  return {};
}

void append_json_value(std::string& out, const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) {
    out += std::to_string(*i);
  } else if (const auto* d = std::get_if<double>(&v)) {
    out += std::isfinite(*d) ? format_double(*d) : "null";
  } else if (const auto* s = std::get_if<std::string>(&v)) {
    out += json(*s).dump();
  } else {
    out += "null";
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Record record_from_json(const TableSchema& schema, const json& obj) {
  if (!obj.is_object()) throw Error(ErrorCode::kSchemaMismatch, "record must be a JSON object");
  Record r;
  r.values.resize(schema.columns.size());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const auto idx = schema.find(it.key());
    if (!idx) mismatch(it.key(), "unknown column");
    r.values[*idx] = json_to_value(schema.columns[*idx], it.value());
  }
  return r;
}

std::string to_json_line(const TableSchema& schema, const Record& record) {
  std::string out = "{";
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (i) out += ',';
    out += json(schema.columns[i].name).dump();
    out += ':';
    append_json_value(out, record.values[i]);
  }
  out += '}';
  return out;
}

Record parse_json_line(const TableSchema& schema, std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kMalformed, "invalid JSON record");
  return record_from_json(schema, j);
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos && !s.empty()) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_header(const TableSchema& schema) {
  std::string out;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(schema.columns[i].name);
  }
  return out;
}

std::string to_csv_line(const TableSchema& schema, const Record& record) {
  std::string out;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (i) out += ',';
    const Value& v = record.values[i];
    if (const auto* n = std::get_if<std::int64_t>(&v)) {
      out += std::to_string(*n);
    } else if (const auto* d = std::get_if<double>(&v)) {
      out += format_double(*d);
    } else if (const auto* s = std::get_if<std::string>(&v)) {
      // Empty strings are quoted so they stay distinct from null.
      out += s->empty() ? std::string("\"\"") : csv_escape(*s);
    }
  }
  return out;
}

std::vector<std::vector<CsvField>> parse_csv(std::string_view text) {
  std::vector<std::vector<CsvField>> rows;
  std::vector<CsvField> row;
  CsvField field;
  bool in_quotes = false;
  bool any = false;  // current row has content
  auto end_field = [&] {
    row.push_back(std::move(field));
    field = {};
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.text += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.text += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field.quoted = true;
        any = true;
        break;
      case ',':
        end_field();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !row.empty() || !field.text.empty()) end_row();
        break;
      default:
        field.text += c;
        any = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::kMalformed, "unterminated quoted CSV field");
  if (any || !row.empty() || !field.text.empty()) end_row();
  return rows;
}

std::vector<Record> read_records(const TableSchema& schema, const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<Record> out;
  if (format_for(path) == FileFormat::kJsonLines) {
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      std::string_view line(text.data() + start, end - start);
      if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
        out.push_back(parse_json_line(schema, line));
      }
      start = end + 1;
    }
    return out;
  }
  auto rows = parse_csv(text);
  if (rows.empty()) return out;
  std::vector<std::size_t> mapping;
  for (const auto& h : rows.front()) {
    const auto idx = schema.find(h.text);
    if (!idx) mismatch(h.text, "unknown column in CSV header");
    mapping.push_back(*idx);
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != mapping.size()) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "CSV row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                      " fields, header has " + std::to_string(mapping.size()));
    }
    Record rec;
    rec.values.resize(schema.columns.size());
    for (std::size_t f = 0; f < mapping.size(); ++f) {
      rec.values[mapping[f]] = text_to_value(schema.columns[mapping[f]], rows[r][f]);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_records(const TableSchema& schema, const std::vector<Record>& records,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  if (format_for(path) == FileFormat::kCsv) {
    out << csv_header(schema) << '\n';
    for (const auto& r : records) out << to_csv_line(schema, r) << '\n';
  } else {
    for (const auto& r : records) out << to_json_line(schema, r) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace rtfe::formats
