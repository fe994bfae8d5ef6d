// SPDX-License-Identifier: Apache-2.0
#include "xids/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "xids/checkpoint.hpp"
#include "xids/csv.hpp"
#include "xids/errors.hpp"
#include "xids/hash.hpp"
#include "xids/tokenizer.hpp"

namespace xids {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<SplitName, 3> kSplits = {SplitName::Train, SplitName::Validation, SplitName::Test};

void write_text(const fs::path& path, std::string_view content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string command_hint(std::string_view stage, const AttentionVariant* v) {
  std::string s = "xids ";
  s += stage;
  if (v) {
    s += " --variant ";
    s += to_string(*v);
  }
  return s;
}

void require(const fs::path& path, std::string_view stage, const AttentionVariant* v = nullptr) {
  if (!fs::exists(path)) {
    throw IoError("missing " + path.string() + "; run `" + command_hint(stage, v) + "` first");
  }
}

ordered_json counts_json(const ClassCounts& counts) {
  ordered_json j;
  for (auto c : kAllClasses) j[std::string(to_string(c))] = counts[index_of(c)];
  return j;
}

std::string class_counts_line(const ClassCounts& counts) {
  std::string s;
  for (auto c : kAllClasses) {
    if (!s.empty()) s += ", ";
    s += std::string(to_string(c)) + " " + std::to_string(counts[index_of(c)]);
  }
  return s;
}

std::string fixed(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

void require_all_classes(const LabeledDataset& ds, std::string_view what) {
  const auto counts = ds.class_counts();
  for (auto c : kAllClasses) {
    if (counts[index_of(c)] == 0) {
      throw DataError(std::string(what) + " has no " + std::string(to_string(c)) + " examples");
    }
  }
}

struct TrainedModel {
  EncoderParams params;
  Vocab vocab;
};

TrainedModel load_trained(const RunConfig& cfg, AttentionVariant v) {
  const fs::path dir = layout::train_dir(cfg, v);
  require(dir / "checkpoint.bin", "train", &v);
  require(dir / "vocab.tsv", "train", &v);
  std::istringstream vin(read_text(dir / "vocab.tsv"));
  Vocab vocab = Vocab::read_tsv(vin);
  if (!(vocab == Vocab::build(cfg.schema()))) {
    throw ConfigError("the configured schema differs from the one " + dir.string() + " was trained on");
  }
  EncoderParams params = load_checkpoint(dir / "checkpoint.bin");
  if (params.config.attention_variant != v) {
    throw DataError(dir.string() + "/checkpoint.bin holds a " + std::string(to_string(params.config.attention_variant)) +
                    " model");
  }
  return {std::move(params), std::move(vocab)};
}

std::vector<TokenizedExample> tokenize_split(const RunConfig& cfg, const LabeledDataset& ds, const Vocab& vocab,
                                             const EncoderConfig& enc) {
  return tokenize_dataset(ds, vocab, cfg.format, static_cast<std::size_t>(enc.max_seq_len));
}

std::string metrics_table(const MetricsReport& r) {
  std::ostringstream s;
  s << "  class        precision  recall     f1         support\n";
  for (auto c : kAllClasses) {
    const auto& m = r.per_class[index_of(c)];
    char line[128];
    std::snprintf(line, sizeof line, "  %-12s %-10s %-10s %-10s %zu\n", std::string(to_string(c)).c_str(),
                  fixed(m.precision).c_str(), fixed(m.recall).c_str(), fixed(m.f1).c_str(), m.support);
    s << line;
  }
  s << "  accuracy " << fixed(r.accuracy) << "  macro-F1 " << fixed(r.macro_f1) << "  weighted-F1 "
    << fixed(r.weighted_f1) << "\n";
  return s.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

// ---------------------------------------------------------------------------

Style Style::detect() {
  const char* no_color = std::getenv("NO_COLOR");
  return Style{(no_color == nullptr || *no_color == '\0') && ::isatty(STDOUT_FILENO) == 1};
}

std::string Style::bold(std::string_view s) const {
  return color ? "\x1b[1m" + std::string(s) + "\x1b[0m" : std::string(s);
}
std::string Style::good(std::string_view s) const {
  return color ? "\x1b[32m" + std::string(s) + "\x1b[0m" : std::string(s);
}
std::string Style::bad(std::string_view s) const {
  return color ? "\x1b[31m" + std::string(s) + "\x1b[0m" : std::string(s);
}

namespace layout {
fs::path prepare_dir(const RunConfig& cfg) { return cfg.work_dir / "prepare"; }
fs::path train_dir(const RunConfig& cfg, AttentionVariant v) { return cfg.work_dir / "train" / std::string(to_string(v)); }
fs::path evaluate_dir(const RunConfig& cfg, AttentionVariant v) {
  return cfg.work_dir / "evaluate" / std::string(to_string(v));
}
fs::path explain_dir(const RunConfig& cfg, AttentionVariant v) {
  return cfg.work_dir / "explain" / std::string(to_string(v));
}
fs::path report_path(const RunConfig& cfg) { return cfg.work_dir / "report.md"; }
fs::path lock_path(const RunConfig& cfg) { return cfg.work_dir / ".xids.lock"; }
}  // namespace layout

WorkDirLock::WorkDirLock(const fs::path& work_dir) {
  std::error_code ec;
  fs::create_directories(work_dir, ec);
  if (ec) throw IoError("cannot create work dir " + work_dir.string() + ": " + ec.message());
  const fs::path path = work_dir / ".xids.lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw IoError("work dir " + work_dir.string() + " is in use by another xids command");
  }
}

WorkDirLock::~WorkDirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

SplitFile load_split(const RunConfig& cfg, SplitName split) {
  const fs::path path = layout::prepare_dir(cfg) / (std::string(to_string(split)) + ".csv");
  require(path, "prepare");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  CsvOptions opts;
  opts.label_column = cfg.csv.label_column;
  ParsedFlows parsed = [&] {
    try {
      return parse_flow_csv(in, cfg.dedup_schema(), opts);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }();
  if (parsed.report.rows_kept != parsed.report.rows_read) {
    throw DataError(path.string() + ": split file has rows that no longer parse; rerun `xids prepare`");
  }
  const FeatureSchema model = cfg.schema();
  std::vector<std::size_t> columns;
  for (const auto& name : model.names()) columns.push_back(*parsed.dataset.schema.find(name));
  LabeledDataset projected{model, {}};
  projected.records.reserve(parsed.dataset.size());
  for (const auto& r : parsed.dataset.records) {
    FlowRecord f;
    f.raw_label = r.flow.raw_label;
    f.features.reserve(columns.size());
    for (auto c : columns) f.features.push_back(r.flow.features[c]);
    projected.records.push_back({std::move(f), r.label});
  }
  return {std::move(parsed.dataset), std::move(projected)};
}

// ---------------------------------------------------------------------------

PrepareSummary cmd_prepare(const RunConfig& cfg, std::ostream& out, const Style& style) {
  if (cfg.input_csv.empty()) throw ConfigError("input_csv is not set (config key input_csv or --input)");
  WorkDirLock lock(cfg.work_dir);
  std::ifstream in(cfg.input_csv, std::ios::binary);
  if (!in) throw IoError("cannot open input CSV " + cfg.input_csv.string());

  ParsedFlows parsed = [&] {
    try {
      return parse_flow_csv(in, cfg.dedup_schema(), cfg.csv);
    } catch (const DataError& e) {
      throw DataError(cfg.input_csv.string() + ": " + e.what());
    }
  }();
  DedupResult dedup = deduplicate(parsed.dataset, cfg.format);
  const SplitDataset split = stratified_split(dedup.dataset, cfg.split, cfg.split_seed());
  const OverlapReport overlap = audit_overlap(split, cfg.format);

  PrepareSummary summary;
  summary.parse = parsed.report;
  summary.dedup = dedup.report;
  summary.class_counts = dedup.dataset.class_counts();
  for (auto s : kSplits) summary.split_counts[static_cast<std::size_t>(s)] = split.part(s).class_counts();
  summary.overlap = overlap;

  const fs::path dir = layout::prepare_dir(cfg);
  for (auto s : kSplits) {
    std::ostringstream csv;
    write_flow_csv(csv, split.part(s), cfg.csv.label_column);
    write_text(dir / (std::string(to_string(s)) + ".csv"), csv.str());
  }
  {
    std::ostringstream manifest;
    write_split_manifest(manifest, split, cfg.format);
    write_text(dir / "manifest.tsv", manifest.str());
  }

  ordered_json pj;
  pj["input"] = cfg.input_csv.filename().string();
  pj["rows_read"] = parsed.report.rows_read;
  pj["rows_kept"] = parsed.report.rows_kept;
  pj["dropped_nonfinite"] = parsed.report.dropped_nonfinite;
  pj["dropped_unparseable"] = parsed.report.dropped_unparseable;
  pj["dropped_unknown_label"] = parsed.report.dropped_unknown_label;
  pj["raw_label_counts"] = parsed.report.raw_label_counts;
  write_text(dir / "parse_report.json", pj.dump(2) + "\n");

  ordered_json dj;
  dj["before"] = dedup.report.before;
  dj["after"] = dedup.report.after;
  dj["removed"] = dedup.report.removed;
  dj["conflicting_labels"] = dedup.report.conflicting_labels;
  dj["class_counts"] = counts_json(summary.class_counts);
  write_text(dir / "dedup_report.json", dj.dump(2) + "\n");

  ordered_json oj;
  oj["seed"] = cfg.split_seed();
  oj["ratios"] = {{"train", cfg.split.train}, {"validation", cfg.split.validation}, {"test", cfg.split.test}};
  ordered_json sizes;
  for (auto s : kSplits) sizes[std::string(to_string(s))] = counts_json(summary.split_counts[static_cast<std::size_t>(s)]);
  oj["splits"] = sizes;
  oj["overlap"] = {{"train_validation", overlap.train_validation},
                   {"train_test", overlap.train_test},
                   {"validation_test", overlap.validation_test}};
  oj["clean"] = overlap.clean();
  write_text(dir / "overlap_report.json", oj.dump(2) + "\n");

  const auto& pr = parsed.report;
  out << "parsed " << pr.rows_read << " rows (kept " << pr.rows_kept << "; dropped " << pr.dropped_nonfinite
      << " non-finite, " << pr.dropped_unparseable << " unparseable, " << pr.dropped_unknown_label
      << " unknown label)\n";
  out << style.bold("dedup") << ": " << dedup.report.before << " -> " << dedup.report.after << " (removed "
      << dedup.report.removed << ", conflicting labels " << dedup.report.conflicting_labels << ")\n";
  out << "classes: " << class_counts_line(summary.class_counts) << "\n";
  out << "split (seed " << cfg.split_seed() << "): train " << split.train.size() << ", validation "
      << split.validation.size() << ", test " << split.test.size() << "\n";
  out << style.bold("overlap audit") << ": train/validation " << overlap.train_validation << ", train/test "
      << overlap.train_test << ", validation/test " << overlap.validation_test << " -> "
      << (overlap.clean() ? style.good("clean") : style.bad("LEAKAGE")) << "\n";

  if (!overlap.clean()) {
    throw AuditError("overlap audit failed: splits share records (see " + (dir / "overlap_report.json").string() + ")");
  }
  return summary;
}

TrainSummary cmd_train(const RunConfig& cfg, AttentionVariant variant, std::ostream& out, const Style& style) {
  WorkDirLock lock(cfg.work_dir);
  const SplitFile train_split = load_split(cfg, SplitName::Train);
  const SplitFile val_split = load_split(cfg, SplitName::Validation);
  const FeatureSchema schema = cfg.schema();
  const Vocab vocab = Vocab::build(schema);

  EncoderConfig enc = cfg.encoder;
  enc.vocab_size = static_cast<int>(vocab.size());
  enc.attention_variant = variant;
  enc.seed = cfg.init_seed(variant);
  const EncoderParams initial = init_params(enc, enc.seed);

  const auto train_set = tokenize_split(cfg, train_split.model, vocab, enc);
  const auto val_set = tokenize_split(cfg, val_split.model, vocab, enc);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.train_seed(variant);
  const ClassWeights weights = class_weights(train_split.model.class_counts(), tc.clip_lo, tc.clip_hi);

  out << style.bold("train " + std::string(to_string(variant))) << ": " << train_set.size() << " train / "
      << val_set.size() << " validation examples, " << initial.parameter_count() << " parameters\n";
  out << "class weights: ";
  for (auto c : kAllClasses) out << to_string(c) << " " << fixed(weights[c]) << (c == CoarseLabel::WebAttack ? "\n" : ", ");

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    out << "  epoch " << e.epoch << "  loss " << fixed(e.train_loss) << "  val loss " << fixed(e.val_loss)
        << "  val macro-F1 " << fixed(e.val_macro_f1) << (e.improved ? "  *" : "") << "\n";
    out.flush();
  };
  TrainResult result = train(initial, train_set, val_set, weights, tc, hooks);
  const ModelEvaluation val = evaluate_model(result.best, val_set);

  const fs::path dir = layout::train_dir(cfg, variant);
  write_text(dir / "checkpoint.bin", serialize_checkpoint(result.best));
  write_text(dir / "training_log.jsonl", result.log.to_jsonl());
  write_text(dir / "validation_metrics.json", val.report.to_json());
  std::ostringstream vocab_tsv;
  vocab.write_tsv(vocab_tsv);
  write_text(dir / "vocab.tsv", vocab_tsv.str());
  ordered_json wj;
  for (auto c : kAllClasses) {
    wj[std::string(to_string(c))] = {{"count", train_split.model.class_counts()[index_of(c)]},
                                     {"unclipped", weights.unclipped[index_of(c)]},
                                     {"weight", weights[c]}};
  }
  write_text(dir / "class_weights.json", wj.dump(2) + "\n");

  out << "best epoch " << result.log.best_epoch << (result.log.stopped_early ? " (stopped early)" : "") << "\n";
  out << "validation metrics:\n" << metrics_table(val.report);
  return {std::move(result.log), val.report, result.best.fingerprint()};
}

MetricsReport cmd_evaluate(const RunConfig& cfg, AttentionVariant variant, std::ostream& out, const Style& style) {
  WorkDirLock lock(cfg.work_dir);
  const TrainedModel model = load_trained(cfg, variant);
  const SplitFile test = load_split(cfg, SplitName::Test);
  require_all_classes(test.model, "test split");
  const auto examples = tokenize_split(cfg, test.model, model.vocab, model.params.config);
  const ModelEvaluation ev = evaluate_model(model.params, examples);

  write_text(layout::evaluate_dir(cfg, variant) / "metrics.json", ev.report.to_json());
  out << style.bold("evaluate " + std::string(to_string(variant))) << ": " << examples.size()
      << " test examples\n"
      << metrics_table(ev.report);
  return ev.report;
}

ExplainSummary cmd_explain(const RunConfig& cfg, AttentionVariant variant, std::ostream& out, const Style& style) {
  WorkDirLock lock(cfg.work_dir);
  const TrainedModel model = load_trained(cfg, variant);
  const SplitFile test = load_split(cfg, SplitName::Test);
  require_all_classes(test.model, "test split");
  const auto examples = tokenize_split(cfg, test.model, model.vocab, model.params.config);

  const FeatureSchema schema = cfg.schema();
  const ClassAttributionRun run = class_attribution_matrix(model.params, examples, schema, cfg.attribution,
                                                           cfg.report.top_k, cfg.attribution_target);

  ExplainSummary summary;
  summary.matrix = run.matrix;
  summary.examples = run.results.size();
  std::vector<double> gaps;
  gaps.reserve(run.results.size());
  std::string dump;
  const FeatureSchema identity = cfg.dedup_schema();
  for (std::size_t i = 0; i < run.results.size(); ++i) {
    const auto& r = run.results[i];
    gaps.push_back(r.relative_gap());
    summary.exceeding += r.exceeds_tolerance ? 1 : 0;
    ordered_json j;
    j["hash"] = to_hex(record_hash(test.identity.records[i].flow, identity, cfg.format));
    j["class"] = std::string(to_string(examples[i].label));
    j["target"] = std::string(to_string(r.target_class));
    j["attributions"] = r.feature_attr;
    j["structural_residue"] = r.structural_residue;
    j["input_logit"] = r.input_logit;
    j["baseline_logit"] = r.baseline_logit;
    j["completeness_gap"] = r.completeness_gap;
    j["relative_gap"] = r.relative_gap();
    j["exceeds_tolerance"] = r.exceeds_tolerance;
    dump += j.dump() + "\n";
  }
  summary.median_relative_gap = median(gaps);
  summary.max_relative_gap = gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end());

  const fs::path dir = layout::explain_dir(cfg, variant);
  for (auto f : cfg.report.formats) {
    write_text(dir / ("heatmap." + std::string(to_string(f))), export_heatmap(run.matrix, f));
  }
  write_text(dir / "attributions.jsonl", dump);
  ordered_json cj;
  cj["steps"] = cfg.attribution.steps;
  cj["baseline"] = std::string(to_string(cfg.attribution.baseline));
  cj["target"] = std::string(to_string(cfg.attribution_target));
  cj["tolerance"] = cfg.attribution.completeness_tolerance;
  cj["examples"] = summary.examples;
  cj["exceeding"] = summary.exceeding;
  cj["exceeding_fraction"] = summary.exceeding_fraction();
  cj["median_relative_gap"] = summary.median_relative_gap;
  cj["max_relative_gap"] = summary.max_relative_gap;
  write_text(dir / "completeness.json", cj.dump(2) + "\n");

  out << style.bold("explain " + std::string(to_string(variant))) << ": " << summary.examples
      << " test examples, " << cfg.attribution.steps << " steps\n";
  for (auto c : kAllClasses) {
    std::vector<std::size_t> order(run.matrix.features.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    const auto& row = run.matrix.values[index_of(c)];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    out << "  " << to_string(c) << " top:";
    for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k) {
      out << (k ? ", " : " ") << run.matrix.features[order[k]] << " " << fixed(row[order[k]]);
    }
    out << "\n";
  }
  const std::string frac = fixed(100.0 * summary.exceeding_fraction(), 2) + "%";
  out << "completeness: " << summary.exceeding << "/" << summary.examples << " examples ("
      << (summary.exceeding ? style.bad(frac) : style.good(frac)) << ") exceed relative gap "
      << cfg.attribution.completeness_tolerance << "; median " << summary.median_relative_gap << "\n";
  return summary;
}

// ---------------------------------------------------------------------------

namespace {

struct HeatmapRows {
  std::vector<std::string> features;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
};

HeatmapRows read_heatmap_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvReader reader(in);
  HeatmapRows h;
  std::vector<std::string> fields;
  if (!reader.next(fields) || fields.empty()) throw DataError(path.string() + ": empty heatmap");
  h.features.assign(fields.begin() + 1, fields.end());
  while (reader.next(fields)) {
    std::vector<double> values;
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(std::stod(fields[i]));
    h.rows.emplace_back(fields[0], std::move(values));
  }
  return h;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::string cmd_report(const RunConfig& cfg, std::ostream& out, const Style& style) {
  WorkDirLock lock(cfg.work_dir);
  const fs::path prep = layout::prepare_dir(cfg);
  std::vector<std::string> missing;
  auto need = [&](const fs::path& p, std::string_view stage, const AttentionVariant* v = nullptr) {
    if (!fs::exists(p)) {
      const std::string hint = command_hint(stage, v);
      if (std::find(missing.begin(), missing.end(), hint) == missing.end()) missing.push_back(hint);
    }
  };
  need(prep / "dedup_report.json", "prepare");
  need(prep / "overlap_report.json", "prepare");
  need(prep / "parse_report.json", "prepare");
  for (const auto& v : cfg.variants) {
    need(layout::train_dir(cfg, v) / "training_log.jsonl", "train", &v);
    need(layout::evaluate_dir(cfg, v) / "metrics.json", "evaluate", &v);
    need(layout::explain_dir(cfg, v) / "completeness.json", "explain", &v);
    need(layout::explain_dir(cfg, v) / "heatmap.csv", "explain", &v);
  }
  if (!missing.empty()) {
    std::string msg = "report needs artifacts that are missing; run:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }

  const json parse = read_json(prep / "parse_report.json");
  const json dedup = read_json(prep / "dedup_report.json");
  const json overlap = read_json(prep / "overlap_report.json");

  std::ostringstream md;
  md << "# xids run report\n\n";
  md << "Seed " << cfg.seed << ". Variants: ";
  for (std::size_t i = 0; i < cfg.variants.size(); ++i) md << (i ? ", " : "") << to_string(cfg.variants[i]);
  md << ".\n\n";

  md << "## Deduplication\n\n";
  md << "| step | rows |\n|---|---:|\n";
  md << "| read | " << parse["rows_read"].get<std::size_t>() << " |\n";
  md << "| dropped non-finite | " << parse["dropped_nonfinite"].get<std::size_t>() << " |\n";
  md << "| dropped unparseable | " << parse["dropped_unparseable"].get<std::size_t>() << " |\n";
  md << "| dropped unknown label | " << parse["dropped_unknown_label"].get<std::size_t>() << " |\n";
  md << "| before dedup | " << dedup["before"].get<std::size_t>() << " |\n";
  md << "| after dedup | " << dedup["after"].get<std::size_t>() << " |\n";
  md << "| conflicting-label duplicates | " << dedup["conflicting_labels"].get<std::size_t>() << " |\n\n";
  md << "Dedup: " << dedup["before"].get<std::size_t>() << " -> " << dedup["after"].get<std::size_t>() << ".\n\n";

  md << "## Split audit\n\n";
  md << "| split |";
  for (auto c : kAllClasses) md << " " << to_string(c) << " |";
  md << " total |\n|---|";
  for (std::size_t i = 0; i <= kNumClasses; ++i) md << "---:|";
  md << "\n";
  for (auto s : kSplits) {
    const auto& row = overlap["splits"][std::string(to_string(s))];
    std::size_t total = 0;
    md << "| " << to_string(s) << " |";
    for (auto c : kAllClasses) {
      const auto n = row[std::string(to_string(c))].get<std::size_t>();
      total += n;
      md << " " << n << " |";
    }
    md << " " << total << " |\n";
  }
  const auto& ov = overlap["overlap"];
  md << "\nOverlap (shared record hashes): train/validation " << ov["train_validation"].get<std::size_t>()
     << ", train/test " << ov["train_test"].get<std::size_t>() << ", validation/test "
     << ov["validation_test"].get<std::size_t>() << " -> " << (overlap["clean"].get<bool>() ? "clean" : "LEAKAGE")
     << ". Manifest: `prepare/manifest.tsv`.\n\n";

  md << "## Training\n\n";
  for (const auto& v : cfg.variants) {
    md << "### " << to_string(v) << "\n\n";
    md << "| epoch | train loss | val loss | val macro-F1 | val accuracy |\n|---:|---:|---:|---:|---:|\n";
    std::istringstream log(read_text(layout::train_dir(cfg, v) / "training_log.jsonl"));
    std::string line;
    int best = 0;
    while (std::getline(log, line)) {
      if (line.empty()) continue;
      const json e = json::parse(line);
      best = e["best_epoch"].get<int>();
      md << "| " << e["epoch"].get<int>() << " | " << fixed(e["train_loss"].get<double>()) << " | "
         << fixed(e["val_loss"].get<double>()) << " | " << fixed(e["val_macro_f1"].get<double>()) << " | "
         << fixed(e["val_accuracy"].get<double>()) << " |\n";
    }
    md << "\nBest epoch: " << best << ". Checkpoint: `train/" << to_string(v) << "/checkpoint.bin`.\n\n";
  }

  md << "## Test metrics\n\n| metric |";
  std::vector<json> reports;
  for (const auto& v : cfg.variants) {
    md << " " << to_string(v) << " |";
    reports.push_back(read_json(layout::evaluate_dir(cfg, v) / "metrics.json"));
  }
  md << "\n|---|";
  for (std::size_t i = 0; i < reports.size(); ++i) md << "---:|";
  md << "\n";
  auto metric_row = [&](const std::string& label, auto&& get) {
    md << "| " << label << " |";
    for (const auto& r : reports) md << " " << fixed(get(r)) << " |";
    md << "\n";
  };
  metric_row("accuracy", [](const json& r) { return r["accuracy"].get<double>(); });
  metric_row("macro-F1", [](const json& r) { return r["macro_f1"].get<double>(); });
  metric_row("weighted-F1", [](const json& r) { return r["weighted_f1"].get<double>(); });
  for (auto c : kAllClasses) {
    const std::string name(to_string(c));
    for (const char* m : {"precision", "recall", "f1"}) {
      metric_row(name + " " + m, [&](const json& r) { return r["classes"][name][m].get<double>(); });
    }
  }
  md << "\n";

  md << "## Attribution heatmaps\n\n";
  for (const auto& v : cfg.variants) {
    const fs::path dir = layout::explain_dir(cfg, v);
    const json comp = read_json(dir / "completeness.json");
    md << "### " << to_string(v) << "\n\n";
    md << "Files:";
    for (auto f : cfg.report.formats) md << " `explain/" << to_string(v) << "/heatmap." << to_string(f) << "`";
    md << " `explain/" << to_string(v) << "/attributions.jsonl`\n\n";
    md << "Completeness at " << comp["steps"].get<int>() << " steps: " << comp["exceeding"].get<std::size_t>() << "/"
       << comp["examples"].get<std::size_t>() << " examples exceed relative gap "
       << comp["tolerance"].get<double>() << " (median " << comp["median_relative_gap"].get<double>() << ").\n\n";
    const HeatmapRows h = read_heatmap_csv(dir / "heatmap.csv");
    md << "| class | top features (mean absolute attribution) |\n|---|---|\n";
    for (const auto& [cls, values] : h.rows) {
      std::vector<std::size_t> order(values.size());
      for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
      md << "| " << cls << " |";
      for (std::size_t k = 0; k < std::min<std::size_t>(3, order.size()); ++k) {
        md << (k ? ", " : " ") << h.features[order[k]] << " (" << fixed(values[order[k]]) << ")";
      }
      md << " |\n";
    }
    md << "\n";
  }

  const std::string text = md.str();
  write_text(layout::report_path(cfg), text);
  out << style.bold("report") << ": wrote " << layout::report_path(cfg).string() << "\n";
  return text;
}

}  // namespace xids
