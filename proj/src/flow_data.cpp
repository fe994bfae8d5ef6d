// SPDX-License-Identifier: Apache-2.0
#include "xids/flow_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "xids/csv.hpp"
#include "xids/errors.hpp"
#include "xids/random.hpp"
#include "xids/textualize.hpp"

namespace xids {
namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

enum class CellStatus { Ok, NonFinite, Unparseable };

CellStatus parse_cell(std::string_view raw, double& value) {
  const std::string_view s = trim(raw);
  if (s.empty()) return CellStatus::Unparseable;
  const std::string lower = ascii_lower(s);
  if (lower == "inf" || lower == "+inf" || lower == "-inf" || lower == "infinity" || lower == "+infinity" ||
      lower == "-infinity" || lower == "nan" || lower == "-nan" || lower == "+nan") {
    return CellStatus::NonFinite;
  }
  std::string_view digits = s;
  if (digits.front() == '+') digits.remove_prefix(1);
  const auto r = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (r.ec == std::errc::result_out_of_range) return CellStatus::NonFinite;
  if (r.ec != std::errc{} || r.ptr != digits.data() + digits.size()) return CellStatus::Unparseable;
  return std::isfinite(value) ? CellStatus::Ok : CellStatus::NonFinite;
}

std::string shortest(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string_view to_string(CoarseLabel label) {
  switch (label) {
    case CoarseLabel::Benign: return "BENIGN";
    case CoarseLabel::DDoS: return "DDOS";
    case CoarseLabel::WebAttack: return "WEB_ATTACK";
  }
  return "?";
}

CoarseLabel coarse_label_from_string(std::string_view name) {
  for (const auto c : kAllClasses) {
    if (to_string(c) == name) return c;
  }
  throw DataError("unknown coarse label '" + std::string(name) + "'");
}

std::string normalize_label(std::string_view raw) {
  std::string unified;
  unified.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto b = static_cast<unsigned char>(raw[i]);
    if (b == 0xE2 && i + 2 < raw.size() && static_cast<unsigned char>(raw[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(raw[i + 2]) == 0x93 || static_cast<unsigned char>(raw[i + 2]) == 0x94)) {
      unified.push_back('-');
      i += 2;
    } else if (b == 0xEF && i + 2 < raw.size() && static_cast<unsigned char>(raw[i + 1]) == 0xBF &&
               static_cast<unsigned char>(raw[i + 2]) == 0xBD) {
      unified.push_back('-');
      i += 2;
    } else if (b == 0x96 || b == 0x97) {
      unified.push_back('-');
    } else if (b == '\t' || b == '\r' || b == '\n') {
      unified.push_back(' ');
    } else {
      unified.push_back(static_cast<char>(b >= 'a' && b <= 'z' ? b - 'a' + 'A' : b));
    }
  }
  // Collapse whitespace and drop it around dashes.
  std::string out;
  for (const char c : trim(unified)) {
    if (c == ' ') {
      if (!out.empty() && (out.back() == ' ' || out.back() == '-')) continue;
      out.push_back(c);
    } else if (c == '-') {
      if (!out.empty() && out.back() == ' ') out.pop_back();
      out.push_back(c);
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::optional<CoarseLabel> try_merge_labels(std::string_view raw_label) {
  const std::string n = normalize_label(raw_label);
  if (n == "BENIGN") return CoarseLabel::Benign;
  if (n == "DDOS") return CoarseLabel::DDoS;
  if (n == "WEB ATTACK-BRUTE FORCE" || n == "WEB ATTACK-XSS" || n == "WEB ATTACK-SQL INJECTION") {
    return CoarseLabel::WebAttack;
  }
  return std::nullopt;
}

CoarseLabel merge_labels(std::string_view raw_label) {
  if (auto l = try_merge_labels(raw_label)) return *l;
  throw DataError("unknown label '" + std::string(raw_label) +
                  "' (expected BENIGN, DDoS, or Web Attack - Brute Force/XSS/Sql Injection)");
}

FeatureSchema::FeatureSchema(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ConfigError("a schema needs at least one feature");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw ConfigError("feature names must be non-empty");
    if (!seen.insert(n).second) throw ConfigError("duplicate feature name '" + n + "'");
  }
}

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

FeatureSchema compact_schema() {
  return FeatureSchema({"Destination Port", "Flow Duration", "Total Fwd Packets", "Total Backward Packets",
                        "Total Length of Fwd Packets", "Total Length of Bwd Packets", "Flow Bytes/s",
                        "Flow Packets/s", "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max", "Flow IAT Min",
                        "Fwd IAT Mean", "Bwd IAT Mean", "Packet Length Mean"});
}

FeatureSchema full_schema() {
  return FeatureSchema({"Destination Port", "Flow Duration", "Total Fwd Packets", "Total Backward Packets",
                        "Total Length of Fwd Packets", "Total Length of Bwd Packets", "Fwd Packet Length Max",
                        "Fwd Packet Length Min", "Fwd Packet Length Mean", "Fwd Packet Length Std",
                        "Bwd Packet Length Max", "Bwd Packet Length Min", "Bwd Packet Length Mean",
                        "Bwd Packet Length Std", "Flow Bytes/s", "Flow Packets/s", "Flow IAT Mean", "Flow IAT Std",
                        "Flow IAT Max", "Flow IAT Min", "Fwd IAT Total", "Fwd IAT Mean", "Fwd IAT Std",
                        "Fwd IAT Max", "Fwd IAT Min", "Bwd IAT Total", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Max",
                        "Bwd IAT Min", "Fwd PSH Flags", "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags",
                        "Fwd Header Length", "Bwd Header Length", "Fwd Packets/s", "Bwd Packets/s",
                        "Min Packet Length", "Max Packet Length", "Packet Length Mean", "Packet Length Std",
                        "Packet Length Variance", "FIN Flag Count", "SYN Flag Count", "RST Flag Count",
                        "PSH Flag Count", "ACK Flag Count", "URG Flag Count", "CWE Flag Count", "ECE Flag Count",
                        "Down/Up Ratio", "Average Packet Size", "Avg Fwd Segment Size", "Avg Bwd Segment Size",
                        "Fwd Header Length.1", "Fwd Avg Bytes/Bulk", "Fwd Avg Packets/Bulk", "Fwd Avg Bulk Rate",
                        "Bwd Avg Bytes/Bulk", "Bwd Avg Packets/Bulk", "Bwd Avg Bulk Rate", "Subflow Fwd Packets",
                        "Subflow Fwd Bytes", "Subflow Bwd Packets", "Subflow Bwd Bytes", "Init_Win_bytes_forward",
                        "Init_Win_bytes_backward", "act_data_pkt_fwd", "min_seg_size_forward", "Active Mean",
                        "Active Std", "Active Max", "Active Min", "Idle Mean", "Idle Std", "Idle Max", "Idle Min"});
}

FeatureSchema schema_by_name(std::string_view name) {
  if (name == "cicids2017-15") return compact_schema();
  if (name == "cicids2017-78") return full_schema();
  throw ConfigError("unknown schema '" + std::string(name) + "' (expected cicids2017-15 or cicids2017-78)");
}

ClassCounts LabeledDataset::class_counts() const {
  ClassCounts counts{};
  for (const auto& r : records) ++counts[index_of(r.label)];
  return counts;
}

ParsedFlows parse_flow_csv(std::istream& source, const FeatureSchema& schema, const CsvOptions& options) {
  ParsedFlows out{LabeledDataset{schema, {}}, {}};
  CsvReader reader(source);
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw DataError("CSV input is empty (a header row is required)");

  // Trimmed header names; repeated names get ".1", ".2", ... suffixes.
  std::unordered_map<std::string, std::size_t> column_of;
  std::unordered_map<std::string, int> repeats;
  for (std::size_t c = 0; c < fields.size(); ++c) {
    std::string name(trim(fields[c]));
    if (c == 0 && name.starts_with("\xEF\xBB\xBF")) name.erase(0, 3);
    const int n = repeats[name]++;
    if (n > 0) name += "." + std::to_string(n);
    column_of.emplace(name, c);
  }
  std::vector<std::size_t> feature_columns(schema.size());
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto it = column_of.find(schema.name(i));
    if (it == column_of.end()) throw DataError("CSV header is missing required column '" + schema.name(i) + "'");
    feature_columns[i] = it->second;
  }
  const auto label_it = column_of.find(options.label_column);
  if (label_it == column_of.end()) {
    throw DataError("CSV header is missing required column '" + options.label_column + "'");
  }
  const std::size_t label_column = label_it->second;
  const std::size_t width = fields.size();

  auto& report = out.report;
  while (reader.next(fields)) {
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
    ++report.rows_read;
    if (fields.size() != width) {
      ++report.dropped_unparseable;
      continue;
    }
    FlowRecord rec;
    rec.features.resize(schema.size());
    CellStatus status = CellStatus::Ok;
    for (std::size_t i = 0; i < schema.size() && status == CellStatus::Ok; ++i) {
      status = parse_cell(fields[feature_columns[i]], rec.features[i]);
    }
    if (status == CellStatus::NonFinite) {
      ++report.dropped_nonfinite;
      continue;
    }
    if (status == CellStatus::Unparseable) {
      ++report.dropped_unparseable;
      continue;
    }
    rec.raw_label = std::string(trim(fields[label_column]));
    const auto label = try_merge_labels(rec.raw_label);
    if (!label) {
      if (options.unknown_labels == UnknownLabelPolicy::Drop) {
        ++report.dropped_unknown_label;
        continue;
      }
      throw DataError("line " + std::to_string(reader.line()) + ": unknown label '" + rec.raw_label + "'");
    }
    ++report.raw_label_counts[rec.raw_label];
    out.dataset.records.push_back({std::move(rec), *label});
  }
  report.rows_kept = out.dataset.records.size();
  return out;
}

void write_flow_csv(std::ostream& out, const LabeledDataset& dataset, std::string_view label_column) {
  std::vector<std::string> row = dataset.schema.names();
  row.emplace_back(label_column);
  write_csv_row(out, row);
  for (const auto& r : dataset.records) {
    row.clear();
    for (const double v : r.flow.features) row.push_back(shortest(v));
    row.push_back(r.flow.raw_label);
    write_csv_row(out, row);
  }
}

Sha1Digest record_hash(const FlowRecord& record, const FeatureSchema& schema, const ValueFormatPolicy& policy) {
  return sha1(serialize(record, schema, policy).text);
}

DedupResult deduplicate(const LabeledDataset& dataset, const ValueFormatPolicy& policy) {
  DedupResult out{LabeledDataset{dataset.schema, {}}, {}, {}};
  std::unordered_map<Sha1Digest, CoarseLabel, Sha1DigestHash> kept;
  kept.reserve(dataset.size());
  for (const auto& r : dataset.records) {
    const Sha1Digest h = record_hash(r.flow, dataset.schema, policy);
    const auto [it, inserted] = kept.emplace(h, r.label);
    if (inserted) {
      out.dataset.records.push_back(r);
      out.hashes.push_back(h);
    } else if (it->second != r.label) {
      ++out.report.conflicting_labels;
    }
  }
  out.report.before = dataset.size();
  out.report.after = out.dataset.size();
  out.report.removed = out.report.before - out.report.after;
  return out;
}

std::string_view to_string(SplitName split) {
  switch (split) {
    case SplitName::Train: return "train";
    case SplitName::Validation: return "validation";
    case SplitName::Test: return "test";
  }
  return "?";
}

const LabeledDataset& SplitDataset::part(SplitName s) const {
  switch (s) {
    case SplitName::Train: return train;
    case SplitName::Validation: return validation;
    case SplitName::Test: return test;
  }
  return train;
}

std::array<std::size_t, 3> partition_sizes(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r = {ratios.train, ratios.validation, ratios.test};
  for (const double x : r) {
    if (!(x >= 0.0)) throw ConfigError("split ratios must be non-negative");
  }
  if (std::fabs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    // Snap to 1e-9 so that e.g. 10 * 0.7 is exactly 7.
    const double quota = std::round(static_cast<double>(n) * r[i] * 1e9) / 1e9;
    sizes[i] = static_cast<std::size_t>(std::floor(quota));
    frac[i] = quota - std::floor(quota);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];

  if (n >= 3) {
    for (std::size_t i = 0; i < 3; ++i) {
      if (sizes[i] != 0) continue;
      const auto donor = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      --sizes[donor];
      ++sizes[i];
    }
  }
  return sizes;
}

SplitDataset stratified_split(const LabeledDataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  SplitDataset out{LabeledDataset{dataset.schema, {}}, LabeledDataset{dataset.schema, {}},
                   LabeledDataset{dataset.schema, {}}, seed, ratios};
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[index_of(dataset.records[i].label)].push_back(i);

  Rng root(seed);
  for (const auto c : kAllClasses) {
    auto& idx = by_class[index_of(c)];
    if (idx.size() < 3) {
      throw DataError("class " + std::string(to_string(c)) + " has " + std::to_string(idx.size()) +
                      " records; at least 3 are needed to place one in each split");
    }
    Rng rng = root.fork(index_of(c) + 1);
    shuffle(std::span(idx), rng);
    const auto sizes = partition_sizes(idx.size(), ratios);
    std::size_t k = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      auto& part = s == 0 ? out.train : s == 1 ? out.validation : out.test;
      for (std::size_t j = 0; j < sizes[s]; ++j) part.records.push_back(dataset.records[idx[k++]]);
    }
  }
  return out;
}

OverlapReport audit_overlap(const SplitDataset& split, const ValueFormatPolicy& policy) {
  using HashSet = std::unordered_set<Sha1Digest, Sha1DigestHash>;
  auto hashes = [&](const LabeledDataset& d) {
    HashSet set;
    set.reserve(d.size());
    for (const auto& r : d.records) set.insert(record_hash(r.flow, d.schema, policy));
    return set;
  };
  auto intersection = [](const HashSet& a, const HashSet& b) {
    const auto& small = a.size() <= b.size() ? a : b;
    const auto& large = a.size() <= b.size() ? b : a;
    return static_cast<std::size_t>(std::count_if(small.begin(), small.end(), [&](const auto& h) { return large.contains(h); }));
  };
  const HashSet tr = hashes(split.train), va = hashes(split.validation), te = hashes(split.test);
  return {intersection(tr, va), intersection(tr, te), intersection(va, te)};
}

void write_split_manifest(std::ostream& out, const SplitDataset& split, const ValueFormatPolicy& policy) {
  for (const auto s : {SplitName::Train, SplitName::Validation, SplitName::Test}) {
    const auto& part = split.part(s);
    for (const auto& r : part.records) {
      out << to_hex(record_hash(r.flow, part.schema, policy)) << '\t' << to_string(s) << '\t' << to_string(r.label)
          << '\n';
    }
  }
}

}  // namespace xids
