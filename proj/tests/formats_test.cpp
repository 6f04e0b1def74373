#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "rtfe/error.hpp"
#include "rtfe/formats.hpp"

namespace rtfe {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rtfe_formats_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::string random_string(std::mt19937_64& rng) {
  static const char kAlphabet[] = "abcXYZ 019,\"'\n\t;\\{}:_-";
  std::string s;
  const std::size_t n = rng() % 12;
  for (std::size_t i = 0; i < n; ++i) s += kAlphabet[rng() % (sizeof kAlphabet - 1)];
  return s;
}

std::vector<Record> random_records(std::mt19937_64& rng, std::size_t n) {
  std::vector<Record> out;
  std::uniform_real_distribution<double> mag(-300.0, 300.0);
  for (std::size_t i = 0; i < n; ++i) {
    Value amount = std::pow(10.0, mag(rng) / 10.0) * (rng() % 2 ? 1 : -1);
    if (rng() % 10 == 0) amount = std::monostate{};
    Value qty = static_cast<std::int64_t>(rng());
    if (rng() % 10 == 0) qty = std::monostate{};
    Value cat = random_string(rng);
    if (rng() % 10 == 0) cat = std::monostate{};
    out.push_back(Record{{static_cast<std::int64_t>(rng() % 100), static_cast<std::int64_t>(rng() >> 20),
                          amount, qty, cat}});
  }
  return out;
}

bool bit_equal(const std::vector<Record>& a, const std::vector<Record>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t c = 0; c < a[i].values.size(); ++c) {
      const auto& x = a[i].values[c];
      const auto& y = b[i].values[c];
      if (x.index() != y.index()) return false;
      if (const auto* d = std::get_if<double>(&x)) {
        if (std::memcmp(d, &std::get<double>(y), sizeof(double)) != 0) return false;
      } else if (x != y) {
        return false;
      }
    }
  }
  return true;
}

TEST(Formats, FormatByExtension) {
  EXPECT_EQ(formats::format_for("a.csv"), formats::FileFormat::kCsv);
  EXPECT_EQ(formats::format_for("a.jsonl"), formats::FileFormat::kJsonLines);
  EXPECT_EQ(formats::format_for("a"), formats::FileFormat::kJsonLines);
}

TEST(Formats, DoublesUseSeventeenDigits) {
  EXPECT_EQ(formats::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(formats::format_double(2.0), "2");
}

TEST(Formats, JsonLineShape) {
  const auto s = testing::tx_schema();
  const Record r = testing::tx(7, 1000, 2.5, std::monostate{}, std::string("x\"y"));
  EXPECT_EQ(formats::to_json_line(s, r),
            R"({"user":7,"ts":1000,"amount":2.5,"qty":null,"category":"x\"y"})");
  EXPECT_EQ(formats::parse_json_line(s, formats::to_json_line(s, r)), r);
}

TEST(Formats, CsvQuotingAndNulls) {
  const auto s = testing::tx_schema();
  const Record empty_str = testing::tx(1, 2, std::monostate{}, std::int64_t{3}, std::string());
  EXPECT_EQ(formats::to_csv_line(s, empty_str), "1,2,,3,\"\"");
  const auto rows = formats::parse_csv("a,\"b,\"\"c\"\"\",,\"\"\n1,\"x\ny\"\n");
  ASSERT_EQ(rows.size(), 2u);
  ASSERT_EQ(rows[0].size(), 4u);
  EXPECT_EQ(rows[0][1].text, "b,\"c\"");
  EXPECT_FALSE(rows[0][2].quoted);
  EXPECT_TRUE(rows[0][3].quoted);
  EXPECT_EQ(rows[1][1].text, "x\ny");
}

TEST(Formats, RecordFromJsonErrorsNameTheField) {
  const auto s = testing::tx_schema();
  try {
    formats::record_from_json(s, nlohmann::json{{"user", 1}, {"ts", 2}, {"amount", "oops"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
    EXPECT_NE(std::string(e.what()).find("amount"), std::string::npos);
  }
  EXPECT_THROW(formats::record_from_json(s, nlohmann::json{{"nope", 1}}), Error);
  EXPECT_THROW(formats::record_from_json(s, nlohmann::json{{"ts", 1.5}}), Error);
}

class RoundTrip : public ::testing::TestWithParam<const char*> {};

TEST_P(RoundTrip, BitExact) {
  std::mt19937_64 rng(77);
  const auto s = testing::tx_schema();
  const auto records = random_records(rng, 2000);
  const auto path = temp_path(std::string("rt.") + GetParam());
  formats::write_records(s, records, path);
  const auto back = formats::read_records(s, path);
  EXPECT_TRUE(bit_equal(records, back));
  fs::remove(path);
}

INSTANTIATE_TEST_SUITE_P(Formats, RoundTrip, ::testing::Values("csv", "jsonl"));

TEST(Formats, CsvHeaderMayReorderColumns) {
  const auto s = testing::tx_schema();
  const auto path = temp_path("reordered.csv");
  {
    std::ofstream out(path);
    out << "ts,user,category,qty,amount\n5,1,z,2,1.25\n";
  }
  const auto rs = formats::read_records(s, path);
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_EQ(rs[0], testing::tx(1, 5, 1.25, std::int64_t{2}, std::string("z")));
  fs::remove(path);
}

TEST(Formats, MissingFileIsIoError) {
  try {
    formats::read_records(testing::tx_schema(), "/nonexistent/file.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(Formats, CsvBadRowsRejected) {
  const auto s = testing::tx_schema();
  const auto path = temp_path("bad.csv");
  {
    std::ofstream out(path);
    out << "user,ts,amount\n1,2\n";
  }
  EXPECT_THROW(formats::read_records(s, path), Error);
  {
    std::ofstream out(path);
    out << "user,ts,amount\n1,x,2\n";
  }
  EXPECT_THROW(formats::read_records(s, path), Error);
  fs::remove(path);
}

}  // namespace
}  // namespace rtfe
