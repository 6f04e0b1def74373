#pragma once

// Record file formats: CSV with a header row naming schema columns, and
// JSON-lines with one object per record. Timestamps are integer milliseconds;
// float64 values are written with 17 significant digits so they round-trip.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rtfe/storage.hpp"

namespace rtfe::formats {

enum class FileFormat { kCsv, kJsonLines };

/// By extension: .csv is CSV, anything else JSON-lines.
FileFormat format_for(const std::filesystem::path& path);

std::string format_double(double v);

/// JSON object -> Record. Missing non-key columns become null; unknown fields
/// and type mismatches throw kSchemaMismatch naming the field.
Record record_from_json(const TableSchema& schema, const nlohmann::json& obj);
nlohmann::json value_to_json(const Value& v);

std::string to_json_line(const TableSchema& schema, const Record& record);
Record parse_json_line(const TableSchema& schema, std::string_view line);

std::string csv_header(const TableSchema& schema);
std::string to_csv_line(const TableSchema& schema, const Record& record);
/// Splits one CSV record (RFC 4180 quoting). Returns fields and whether each
/// was quoted (a quoted empty field is an empty string, an unquoted one null).
struct CsvField {
  std::string text;
  bool quoted = false;
};
std::vector<std::vector<CsvField>> parse_csv(std::string_view text);
std::string csv_escape(std::string_view s);

std::vector<Record> read_records(const TableSchema& schema, const std::filesystem::path& path);
void write_records(const TableSchema& schema, const std::vector<Record>& records,
                   const std::filesystem::path& path);

}  // namespace rtfe::formats
