// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "xids/errors.hpp"
#include "xids/textualize.hpp"

namespace xids {
namespace {

using testing::small_schema;

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  EXPECT_EQ(*end, '\0') << s;
  return v;
}

std::vector<std::vector<std::string>> read_golden(const std::string& name) {
  std::ifstream in(std::string(XIDS_TEST_DATA) + "/" + name);
  EXPECT_TRUE(in) << name;
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(split_on(line, '\t'));
  }
  return rows;
}

TEST(FormatValue, SimpleCases) {
  const ValueFormatPolicy p;
  EXPECT_EQ(format_value(0.0, p), "0");
  EXPECT_EQ(format_value(-0.0, p), "0");
  EXPECT_EQ(format_value(80, p), "80");
  EXPECT_EQ(format_value(0.1 + 0.2, p), "0.3");
  EXPECT_EQ(format_value(1234567.891, p), "1.23457e6");
  EXPECT_EQ(format_value(2.5e-7, p), "2.5e-7");
  EXPECT_EQ(format_value(-1.5, p), "-1.5");
  EXPECT_EQ(format_value(99999999999.0, p), "99999999999");
  EXPECT_EQ(format_value(1e11, p), "1e11");
}

TEST(FormatValue, PassthroughOffRoundsIntegers) {
  const ValueFormatPolicy p{6, false};
  EXPECT_EQ(format_value(1234567, p), "1.23457e6");
  EXPECT_EQ(format_value(80, p), "80");
}

TEST(FormatValue, RejectsNonFinite) {
  const ValueFormatPolicy p;
  EXPECT_THROW(format_value(std::numeric_limits<double>::infinity(), p), DataError);
  EXPECT_THROW(format_value(-std::numeric_limits<double>::infinity(), p), DataError);
  EXPECT_THROW(format_value(std::nan(""), p), DataError);
}

TEST(FormatValue, MatchesDecimalOracleGolden) {
  const auto rows = read_golden("format_value_golden.tsv");
  ASSERT_GT(rows.size(), 1000u);
  for (const auto& r : rows) {
    ASSERT_EQ(r.size(), 4u);
    const ValueFormatPolicy p{std::stoi(r[1]), r[2] == "1"};
    EXPECT_EQ(format_value(parse_hex(r[0]), p), r[3]) << r[0] << " digits " << r[1] << " passthrough " << r[2];
  }
}

TEST(FormatValue, RoundTripsWithinPolicyPrecision) {
  Rng rng(5);
  const ValueFormatPolicy p;
  for (int i = 0; i < 2000; ++i) {
    const double x = (rng.below(2) ? -1.0 : 1.0) * std::exp(rng.uniform(-300, 300) * std::log(10.0) / 10.0);
    const double back = std::strtod(format_value(x, p).c_str(), nullptr);
    EXPECT_LE(std::abs(back - x), 5e-6 * std::abs(x)) << x;
  }
}

TEST(Serialize, SingleFeatureHasOneSpanOverEverything) {
  const FeatureSchema schema({"Flow Duration"});
  const auto t = serialize(FlowRecord{{120.0}, "BENIGN"}, schema, {});
  EXPECT_EQ(t.text, "Flow Duration is 120");
  ASSERT_EQ(t.spans.size(), 1u);
  EXPECT_EQ(t.spans[0], (FeatureSpan{0, 0, t.text.size()}));
}

TEST(Serialize, ClausesJoinWithSeparator) {
  const FeatureSchema schema({"A", "B"});
  const auto t = serialize(FlowRecord{{1.5, 0.0}, "BENIGN"}, schema, {});
  EXPECT_EQ(t.text, "A is 1.5 ; B is 0");
  EXPECT_EQ(t.clause(0), "A is 1.5");
  EXPECT_EQ(t.clause(1), "B is 0");
}

TEST(Serialize, MatchesGoldenCorpus) {
  const auto rows = read_golden("textualize_golden.tsv");
  ASSERT_EQ(rows.size(), 60u);
  const auto schema = compact_schema();
  for (const auto& r : rows) {
    ASSERT_EQ(r.size(), 2u);
    FlowRecord rec;
    for (const auto& h : split_on(r[0], ',')) rec.features.push_back(parse_hex(h));
    ASSERT_EQ(rec.features.size(), schema.size());
    EXPECT_EQ(serialize(rec, schema, {}).text, r[1]);
  }
}

TEST(Serialize, SpansAreOrderedDisjointAndCoverAllButSeparators) {
  Rng rng(9);
  const auto schema = compact_schema();
  for (int trial = 0; trial < 200; ++trial) {
    const auto rec = testing::random_record(rng, schema);
    const auto t = serialize(rec, schema, {});
    ASSERT_EQ(t.spans.size(), schema.size());
    std::size_t covered = 0;
    for (std::size_t i = 0; i < t.spans.size(); ++i) {
      const auto& s = t.spans[i];
      EXPECT_EQ(s.feature_index, i);
      EXPECT_LT(s.begin, s.end);
      if (i > 0) EXPECT_EQ(t.text.substr(t.spans[i - 1].end, s.begin - t.spans[i - 1].end), kClauseSeparator);
      covered += s.end - s.begin;
      EXPECT_EQ(clause_value(t.clause(i), schema.name(i)), format_value(rec.features[i], {}));
    }
    EXPECT_EQ(t.spans.front().begin, 0u);
    EXPECT_EQ(t.spans.back().end, t.text.size());
    EXPECT_EQ(covered + (schema.size() - 1) * kClauseSeparator.size(), t.text.size());
  }
}

TEST(Serialize, EqualAfterFormattingMeansEqualText) {
  const auto schema = small_schema();
  const FlowRecord a{{1.0000001, 2, 3}, "BENIGN"};
  const FlowRecord b{{1.0000002, 2, 3}, "DDoS"};
  const FlowRecord c{{1.00001, 2, 3}, "BENIGN"};
  EXPECT_EQ(serialize(a, schema, {}).text, serialize(b, schema, {}).text);
  EXPECT_NE(serialize(a, schema, {}).text, serialize(c, schema, {}).text);
}

TEST(ClauseValue, RejectsWrongName) {
  EXPECT_EQ(clause_value("A is 7", "A"), "7");
  EXPECT_THROW(clause_value("A is 7", "B"), DataError);
  EXPECT_THROW(clause_value("A 7", "A"), DataError);
}

}  // namespace
}  // namespace xids
