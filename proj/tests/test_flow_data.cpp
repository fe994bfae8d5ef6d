// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "xids/errors.hpp"
#include "xids/flow_data.hpp"
#include "xids/hash.hpp"
#include "xids/textualize.hpp"

namespace xids {
namespace {

using testing::random_record;
using testing::small_schema;

ParsedFlows parse(const std::string& csv, const FeatureSchema& schema, CsvOptions opts = {}) {
  std::istringstream in(csv);
  return parse_flow_csv(in, schema, opts);
}

LabeledDataset make_dataset(std::size_t per_benign, std::size_t per_ddos, std::size_t per_web, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset ds{small_schema(), {}};
  auto add = [&](CoarseLabel c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      auto r = random_record(rng, ds.schema);
      r.raw_label = c == CoarseLabel::Benign ? "BENIGN" : c == CoarseLabel::DDoS ? "DDoS" : "Web Attack \xE2\x80\x93 XSS";
      ds.records.push_back({std::move(r), c});
    }
  };
  add(CoarseLabel::Benign, per_benign);
  add(CoarseLabel::DDoS, per_ddos);
  add(CoarseLabel::WebAttack, per_web);
  return ds;
}

// --- parsing ---------------------------------------------------------------

TEST(ParseFlowCsv, DropsNonFiniteRowsAndTalliesThem) {
  const auto p = parse("A,B,Flow Duration,Label\n1,2,3,BENIGN\n4,Infinity,6,DDoS\n7,8,9,DDoS\n", small_schema());
  EXPECT_EQ(p.dataset.size(), 2u);
  EXPECT_EQ(p.report.rows_read, 3u);
  EXPECT_EQ(p.report.dropped_nonfinite, 1u);
  EXPECT_EQ(p.dataset.records[1].label, CoarseLabel::DDoS);
  EXPECT_EQ(p.dataset.records[1].flow.features, (std::vector<double>{7, 8, 9}));
}

TEST(ParseFlowCsv, NanCellsCountAsNonFinite) {
  const auto p = parse("A,B,Flow Duration,Label\nNaN,2,3,BENIGN\n1,2,inf,BENIGN\n", small_schema());
  EXPECT_EQ(p.dataset.size(), 0u);
  EXPECT_EQ(p.report.dropped_nonfinite, 2u);
}

TEST(ParseFlowCsv, HeaderOnlyGivesEmptyDataset) {
  const auto p = parse("A,B,Flow Duration,Label\n", small_schema());
  EXPECT_TRUE(p.dataset.empty());
  EXPECT_EQ(p.report.rows_read, 0u);
  EXPECT_EQ(p.report.dropped_unparseable + p.report.dropped_nonfinite, 0u);
}

TEST(ParseFlowCsv, MissingColumnNamesIt) {
  try {
    parse("A,Flow Duration,Label\n1,2,BENIGN\n", small_schema());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'B'"), std::string::npos) << e.what();
  }
}

TEST(ParseFlowCsv, MissingLabelColumnIsAnError) {
  EXPECT_THROW(parse("A,B,Flow Duration\n1,2,3\n", small_schema()), DataError);
}

TEST(ParseFlowCsv, ColumnOrderFollowsSchemaNotFile) {
  const auto p = parse(" Label , Flow Duration, B ,A,Extra\nBENIGN,30,20,10,99\n", small_schema());
  ASSERT_EQ(p.dataset.size(), 1u);
  EXPECT_EQ(p.dataset.records[0].flow.features, (std::vector<double>{10, 20, 30}));
}

TEST(ParseFlowCsv, UnparseableCellsAreTalliedNotFatal) {
  const auto p = parse("A,B,Flow Duration,Label\n1,abc,3,BENIGN\n1,2,BENIGN\n1,2,3,BENIGN\n", small_schema());
  EXPECT_EQ(p.dataset.size(), 1u);
  EXPECT_EQ(p.report.dropped_unparseable, 2u);
}

TEST(ParseFlowCsv, QuotedFieldsCrlfAndBom) {
  const auto p = parse("\xEF\xBB\xBF" "A,B,Flow Duration,Label\r\n\"1\",2,3,\"Web Attack \xE2\x80\x93 XSS\"\r\n", small_schema());
  ASSERT_EQ(p.dataset.size(), 1u);
  EXPECT_EQ(p.dataset.records[0].label, CoarseLabel::WebAttack);
  EXPECT_EQ(p.report.raw_label_counts.at("Web Attack \xE2\x80\x93 XSS"), 1u);
}

TEST(ParseFlowCsv, UnknownLabelIsAnErrorWithLineNumber) {
  try {
    parse("A,B,Flow Duration,Label\n1,2,3,BENIGN\n1,2,3,PortScan\n", small_schema());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("PortScan"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3"), std::string::npos) << msg;
  }
}

TEST(ParseFlowCsv, UnknownLabelsCanBeDropped) {
  CsvOptions opts;
  opts.unknown_labels = UnknownLabelPolicy::Drop;
  const auto p = parse("A,B,Flow Duration,Label\n1,2,3,BENIGN\n1,2,3,PortScan\n", small_schema(), opts);
  EXPECT_EQ(p.dataset.size(), 1u);
  EXPECT_EQ(p.report.dropped_unknown_label, 1u);
}

TEST(ParseFlowCsv, DuplicateHeaderGetsSuffix) {
  const FeatureSchema schema({"Fwd Header Length", "Fwd Header Length.1"});
  const auto p = parse("Fwd Header Length,Fwd Header Length,Label\n5,6,BENIGN\n", schema);
  ASSERT_EQ(p.dataset.size(), 1u);
  EXPECT_EQ(p.dataset.records[0].flow.features, (std::vector<double>{5, 6}));
}

TEST(WriteFlowCsv, RoundTripsExactly) {
  auto ds = make_dataset(20, 10, 5, 3);
  ds.records[0].flow.features[0] = 0.1 + 0.2;
  ds.records[1].flow.features[1] = -1e-300;
  std::ostringstream out;
  write_flow_csv(out, ds);
  const auto back = parse(out.str(), ds.schema);
  ASSERT_EQ(back.dataset.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.dataset.records[i].flow.features, ds.records[i].flow.features);
    EXPECT_EQ(back.dataset.records[i].label, ds.records[i].label);
  }
}

// --- schemas and labels ----------------------------------------------------

TEST(Schema, RejectsDuplicatesAndEmpty) {
  EXPECT_THROW(FeatureSchema({"A", "A"}), ConfigError);
  EXPECT_THROW(FeatureSchema(std::vector<std::string>{}), ConfigError);
}

TEST(Schema, BuiltinsHaveExpectedSizes) {
  EXPECT_EQ(compact_schema().size(), 15u);
  EXPECT_EQ(full_schema().size(), 78u);
  EXPECT_EQ(schema_by_name("cicids2017-15"), compact_schema());
  EXPECT_THROW(schema_by_name("nope"), ConfigError);
  const auto compact = compact_schema();
  const auto full = full_schema();
  for (const auto& n : compact.names()) EXPECT_TRUE(full.find(n)) << n;
}

TEST(MergeLabels, SubsetLabels) {
  EXPECT_EQ(merge_labels("BENIGN"), CoarseLabel::Benign);
  EXPECT_EQ(merge_labels("DDoS"), CoarseLabel::DDoS);
  EXPECT_EQ(merge_labels("Web Attack \xE2\x80\x93 Brute Force"), CoarseLabel::WebAttack);
  EXPECT_EQ(merge_labels("Web Attack \xE2\x80\x93 XSS"), CoarseLabel::WebAttack);
  EXPECT_EQ(merge_labels("Web Attack \xE2\x80\x93 Sql Injection"), CoarseLabel::WebAttack);
}

TEST(MergeLabels, DashAndWhitespaceVariants) {
  for (const char* raw : {"Web Attack - Brute Force", "Web Attack-Brute Force", "  web attack \xE2\x80\x94 brute   force ",
                          "Web Attack \x96 Brute Force", "Web Attack \xEF\xBF\xBD Brute Force"}) {
    EXPECT_EQ(merge_labels(raw), CoarseLabel::WebAttack) << raw;
  }
  EXPECT_EQ(merge_labels(" benign\t"), CoarseLabel::Benign);
}

TEST(MergeLabels, UnknownLabelErrorListsString) {
  try {
    merge_labels("PortScan");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("PortScan"), std::string::npos);
  }
  EXPECT_FALSE(try_merge_labels("Web Attack"));
}

TEST(MergeLabels, RawCountsMergeToCoarseCounts) {
  const std::map<std::string, std::size_t> table_one = {{"BENIGN", 243212},
                                                        {"DDoS", 121606},
                                                        {"Web Attack \xE2\x80\x93 Brute Force", 1408},
                                                        {"Web Attack \xE2\x80\x93 XSS", 624},
                                                        {"Web Attack \xE2\x80\x93 Sql Injection", 21}};
  ClassCounts merged{};
  for (const auto& [raw, n] : table_one) merged[index_of(merge_labels(raw))] += n;
  EXPECT_EQ(merged, (ClassCounts{243212, 121606, 2053}));
}

// --- dedup -------------------------------------------------------------------

TEST(Deduplicate, FirstOccurrenceWinsAndConflictsAreCounted) {
  LabeledDataset ds{small_schema(), {}};
  ds.records.push_back({{{1, 2, 3}, "BENIGN"}, CoarseLabel::Benign});
  ds.records.push_back({{{1, 2, 3}, "DDoS"}, CoarseLabel::DDoS});
  const auto r = deduplicate(ds, {});
  ASSERT_EQ(r.dataset.size(), 1u);
  EXPECT_EQ(r.dataset.records[0].label, CoarseLabel::Benign);
  EXPECT_EQ(r.report.before, 2u);
  EXPECT_EQ(r.report.after, 1u);
  EXPECT_EQ(r.report.removed, 1u);
  EXPECT_EQ(r.report.conflicting_labels, 1u);
}

TEST(Deduplicate, EqualityIsAtFormatPrecision) {
  LabeledDataset ds{small_schema(), {}};
  ds.records.push_back({{{1.0000001, 2, 3}, "BENIGN"}, CoarseLabel::Benign});
  ds.records.push_back({{{1.0000002, 2, 3}, "BENIGN"}, CoarseLabel::Benign});
  ds.records.push_back({{{1.00001, 2, 3}, "BENIGN"}, CoarseLabel::Benign});
  EXPECT_EQ(deduplicate(ds, {}).dataset.size(), 2u);
  EXPECT_EQ(deduplicate(ds, {.significant_digits = 17}).dataset.size(), 3u);
}

TEST(Deduplicate, EmptyInput) {
  const auto r = deduplicate(LabeledDataset{small_schema(), {}}, {});
  EXPECT_TRUE(r.dataset.empty());
  EXPECT_EQ(r.report.before, 0u);
  EXPECT_EQ(r.report.after, 0u);
}

TEST(Deduplicate, IdempotentAndOrderPreserving) {
  auto ds = make_dataset(50, 30, 10, 11);
  const auto copy = ds.records;
  for (std::size_t i = 0; i < 40; i += 3) ds.records.push_back(copy[i]);
  const auto once = deduplicate(ds, {});
  const auto twice = deduplicate(once.dataset, {});
  EXPECT_EQ(once.report.after, copy.size());
  EXPECT_EQ(once.report.before - once.report.removed, once.report.after);
  EXPECT_EQ(twice.report.removed, 0u);
  EXPECT_EQ(once.hashes, twice.hashes);
  for (std::size_t i = 0; i < copy.size(); ++i) EXPECT_EQ(once.dataset.records[i].flow.features, copy[i].flow.features);
}

TEST(Deduplicate, HashIsSha1OfSerializedText) {
  const FlowRecord r{{80, 1.5, 0}, "BENIGN"};
  EXPECT_EQ(to_hex(record_hash(r, small_schema(), {})), to_hex(sha1("A is 80 ; B is 1.5 ; Flow Duration is 0")));
  EXPECT_EQ(to_hex(sha1("abc")), "a9993e364706816aba3e25717850c26c9cd0d89d");
}

// --- splitting ---------------------------------------------------------------

TEST(PartitionSizes, SpecExamples) {
  EXPECT_EQ(partition_sizes(10, {}), (std::array<std::size_t, 3>{7, 1, 2}));
  EXPECT_EQ(partition_sizes(3, {}), (std::array<std::size_t, 3>{1, 1, 1}));
  EXPECT_EQ(partition_sizes(0, {}), (std::array<std::size_t, 3>{0, 0, 0}));
}

// Per-class sizes and totals for the deduplicated CICIDS2017 subset counts, from an
// independent exact-fraction largest-remainder script.
TEST(PartitionSizes, CicidsSubsetTotals) {
  EXPECT_EQ(partition_sizes(243211, {}), (std::array<std::size_t, 3>{170248, 24321, 48642}));
  EXPECT_EQ(partition_sizes(121606, {}), (std::array<std::size_t, 3>{85124, 12161, 24321}));
  EXPECT_EQ(partition_sizes(2053, {}), (std::array<std::size_t, 3>{1437, 205, 411}));
  std::array<std::size_t, 3> total{};
  for (std::size_t n : {243211u, 121606u, 2053u}) {
    const auto p = partition_sizes(n, {});
    for (int s = 0; s < 3; ++s) total[s] += p[s];
  }
  EXPECT_EQ(total, (std::array<std::size_t, 3>{256809, 36687, 73374}));
  EXPECT_EQ(total[0] + total[1] + total[2], 366870u);
}

TEST(PartitionSizes, AlwaysSumsToN) {
  for (std::size_t n = 0; n < 500; ++n) {
    const auto p = partition_sizes(n, {});
    EXPECT_EQ(p[0] + p[1] + p[2], n);
    if (n >= 3) {
      EXPECT_TRUE(p[0] && p[1] && p[2]) << n;
    }
  }
}

TEST(StratifiedSplit, DeterministicForSeed) {
  const auto ds = make_dataset(80, 40, 12, 5);
  std::ostringstream a, b, c;
  write_split_manifest(a, stratified_split(ds, {}, 9), {});
  write_split_manifest(b, stratified_split(ds, {}, 9), {});
  write_split_manifest(c, stratified_split(ds, {}, 10), {});
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(StratifiedSplit, PartitionAndStratificationBound) {
  const auto ds = make_dataset(137, 61, 9, 6);
  const auto split = stratified_split(ds, {}, 1);
  std::multiset<std::string> all, parts;
  for (const auto& r : ds.records) all.insert(serialize(r.flow, ds.schema, {}).text);
  const auto counts = ds.class_counts();
  for (auto s : {SplitName::Train, SplitName::Validation, SplitName::Test}) {
    const auto& part = split.part(s);
    for (const auto& r : part.records) parts.insert(serialize(r.flow, ds.schema, {}).text);
    const auto pc = part.class_counts();
    for (auto c : kAllClasses) {
      const double got = static_cast<double>(pc[index_of(c)]) / static_cast<double>(part.size());
      const double want = static_cast<double>(counts[index_of(c)]) / static_cast<double>(ds.size());
      EXPECT_LE(std::abs(got - want), 1.0 / static_cast<double>(part.size()) + 1.0 / static_cast<double>(ds.size()));
    }
  }
  EXPECT_EQ(all, parts);
  EXPECT_EQ(split.train.size(), 96u + 43u + 6u);
}

TEST(StratifiedSplit, ClassWithFewerThanThreeRecordsIsAnError) {
  const auto ds = make_dataset(10, 10, 2, 1);
  EXPECT_THROW(stratified_split(ds, {}, 0), DataError);
}

// --- overlap audit -----------------------------------------------------------

TEST(AuditOverlap, CleanAfterDedupAndSplit) {
  auto ds = make_dataset(60, 30, 9, 2);
  ds.records.push_back(ds.records[0]);
  const auto split = stratified_split(deduplicate(ds, {}).dataset, {}, 4);
  EXPECT_TRUE(audit_overlap(split, {}).clean());
}

TEST(AuditOverlap, InjectedCopyIsDetected) {
  auto split = stratified_split(make_dataset(60, 30, 9, 2), {}, 4);
  split.test.records.push_back(split.train.records[3]);
  const auto o = audit_overlap(split, {});
  EXPECT_EQ(o.train_test, 1u);
  EXPECT_EQ(o.train_validation, 0u);
  EXPECT_EQ(o.validation_test, 0u);
}

TEST(AuditOverlap, EmptySplit) {
  SplitDataset empty{LabeledDataset{small_schema(), {}}, LabeledDataset{small_schema(), {}},
                     LabeledDataset{small_schema(), {}}, 0, {}};
  EXPECT_EQ(audit_overlap(empty, {}), (OverlapReport{0, 0, 0}));
}

TEST(SplitManifest, OneLinePerRecord) {
  const auto split = stratified_split(make_dataset(10, 10, 10, 8), {}, 0);
  std::ostringstream out;
  write_split_manifest(out, split, {});
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto t1 = line.find('\t'), t2 = line.rfind('\t');
    EXPECT_EQ(t1, 40u);
    const std::string split_name = line.substr(t1 + 1, t2 - t1 - 1);
    EXPECT_TRUE(split_name == "train" || split_name == "validation" || split_name == "test") << line;
    EXPECT_NO_THROW(coarse_label_from_string(line.substr(t2 + 1)));
  }
  EXPECT_EQ(n, 30u);
}

}  // namespace
}  // namespace xids
