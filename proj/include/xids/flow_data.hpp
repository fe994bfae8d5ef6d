// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "xids/hash.hpp"

namespace xids {

struct ValueFormatPolicy;

enum class CoarseLabel : std::uint8_t { Benign = 0, DDoS = 1, WebAttack = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<CoarseLabel, kNumClasses> kAllClasses = {
    CoarseLabel::Benign, CoarseLabel::DDoS, CoarseLabel::WebAttack};

using ClassCounts = std::array<std::size_t, kNumClasses>;

constexpr std::size_t index_of(CoarseLabel label) { return static_cast<std::size_t>(label); }

/// "BENIGN", "DDOS", "WEB_ATTACK".
std::string_view to_string(CoarseLabel label);
/// Inverse of to_string; throws DataError on anything else.
CoarseLabel coarse_label_from_string(std::string_view name);

/// Trim, collapse whitespace, unify dash variants (en/em dash, U+FFFD,
/// cp1252 0x96) to '-', and upper-case.
std::string normalize_label(std::string_view raw);

/// BENIGN -> BENIGN, DDoS -> DDOS, "Web Attack - {Brute Force,XSS,Sql Injection}" -> WEB_ATTACK.
CoarseLabel merge_labels(std::string_view raw_label);
std::optional<CoarseLabel> try_merge_labels(std::string_view raw_label);

/// Ordered, unique feature names.
class FeatureSchema {
 public:
  explicit FeatureSchema(std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::size_t size() const { return names_.size(); }
  std::optional<std::size_t> find(std::string_view name) const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<std::string> names_;
};

/// The 15 flow features used for modelling by default.
FeatureSchema compact_schema();
/// All 78 numeric columns of the CICIDS2017 MachineLearningCSV layout. The
/// second "Fwd Header Length" column is named "Fwd Header Length.1".
FeatureSchema full_schema();
/// "cicids2017-15" or "cicids2017-78".
FeatureSchema schema_by_name(std::string_view name);

struct FlowRecord {
  std::vector<double> features;
  std::string raw_label;
};

struct LabeledRecord {
  FlowRecord flow;
  CoarseLabel label;
};

struct LabeledDataset {
  FeatureSchema schema;
  std::vector<LabeledRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  ClassCounts class_counts() const;
};

enum class UnknownLabelPolicy { Error, Drop };

struct CsvOptions {
  std::string label_column = "Label";
  UnknownLabelPolicy unknown_labels = UnknownLabelPolicy::Error;
};

struct ParseReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t dropped_nonfinite = 0;
  std::size_t dropped_unparseable = 0;
  std::size_t dropped_unknown_label = 0;
  std::map<std::string, std::size_t> raw_label_counts;  ///< kept rows, by raw label as written
};

struct ParsedFlows {
  LabeledDataset dataset;
  ParseReport report;
};

/// Reads a header-bearing RFC-4180 CSV. Columns are matched to the schema by
/// trimmed header name, so file order may differ from schema order. Rows with
/// non-finite or unparseable numeric cells are dropped and tallied.
ParsedFlows parse_flow_csv(std::istream& source, const FeatureSchema& schema,
                           const CsvOptions& options = {});

/// Writes records in schema order with a trailing label column, using the
/// shortest round-trip rendering of each value.
void write_flow_csv(std::ostream& out, const LabeledDataset& dataset,
                    std::string_view label_column = "Label");

struct DedupReport {
  std::size_t before = 0;
  std::size_t after = 0;
  std::size_t removed = 0;
  std::size_t conflicting_labels = 0;  ///< removed duplicates whose coarse label differed from the kept one
};

struct DedupResult {
  LabeledDataset dataset;
  DedupReport report;
  std::vector<Sha1Digest> hashes;  ///< parallel to dataset.records
};

/// SHA-1 of the serialized text form of a record.
Sha1Digest record_hash(const FlowRecord& record, const FeatureSchema& schema,
                       const ValueFormatPolicy& policy);

/// Keeps the first occurrence of each serialization hash, in input order.
DedupResult deduplicate(const LabeledDataset& dataset, const ValueFormatPolicy& policy);

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

enum class SplitName : std::uint8_t { Train = 0, Validation = 1, Test = 2 };
std::string_view to_string(SplitName split);

struct SplitDataset {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
  std::uint64_t seed = 0;
  SplitRatios ratios;

  const LabeledDataset& part(SplitName s) const;
};

/// Largest-remainder allocation of n items over the three ratios; ties on the
/// fractional part go to the earlier split. When n >= 3 every split receives
/// at least one item.
std::array<std::size_t, 3> partition_sizes(std::size_t n, const SplitRatios& ratios);

/// Per-class seeded shuffle, then per-class partition by partition_sizes.
/// Classes are concatenated in label order within each split.
SplitDataset stratified_split(const LabeledDataset& dataset, const SplitRatios& ratios,
                              std::uint64_t seed);

struct OverlapReport {
  std::size_t train_validation = 0;
  std::size_t train_test = 0;
  std::size_t validation_test = 0;

  bool clean() const { return train_validation == 0 && train_test == 0 && validation_test == 0; }
  bool operator==(const OverlapReport&) const = default;
};

OverlapReport audit_overlap(const SplitDataset& split, const ValueFormatPolicy& policy);

/// One "hash<TAB>split<TAB>class" line per record, train then validation then test.
void write_split_manifest(std::ostream& out, const SplitDataset& split,
                          const ValueFormatPolicy& policy);

}  // namespace xids
