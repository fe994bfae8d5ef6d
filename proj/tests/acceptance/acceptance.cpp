// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run. Prints one [PASS]/[FAIL]/[SKIP] line per criterion and
// exits non-zero if any criterion fails.
//
//   xids_acceptance [--cicids PATH] [--report FILE] [--keep]
//
// --cicids points at the CICIDS2017 BENIGN/DDoS/Web Attack subset CSV; without it the
// protocol-number criterion is skipped with a notice. --report also writes
// the verdict lines to FILE.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../gradcheck.hpp"
#include "../metrics_oracle.hpp"
#include "xids/attribution.hpp"
#include "xids/checkpoint.hpp"
#include "xids/pipeline.hpp"
#include "xids/synthetic.hpp"
#include "xids/textualize.hpp"
#include "xids/tokenizer.hpp"
#include "xids/training.hpp"

namespace fs = std::filesystem;
using namespace xids;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
static_assert(kGradRelTol == testing::kFdRelTolerance);
constexpr std::size_t kGradMinPairs = 20;
constexpr double kGradBudgetSeconds = 120;

constexpr std::size_t kCompletenessExamples = 200;
constexpr int kCompletenessSteps = 128;
constexpr double kCompletenessRelTol = 0.01;
constexpr double kCompletenessMinFraction = 0.99;
constexpr double kCompletenessBudgetSeconds = 300;

constexpr double kLinearAbsTol = 1e-10;

constexpr std::size_t kCicidsBefore = 1188333;
constexpr std::size_t kCicidsAfter = 366870;
constexpr ClassCounts kCicidsCounts{243211, 121606, 2053};
constexpr double kProtocolBudgetSeconds = 600;

constexpr double kWeightRatio = 10.88421550235947;  // sqrt(243211 / 2053)
constexpr double kWeightTol = 1e-9;

constexpr int kMetricsMatrices = 1000;
constexpr double kMetricsTol = 1e-12;
constexpr double kReferenceTol = 1e-4;

constexpr double kSyntheticMinMacroF1 = 0.95;
constexpr int kSyntheticMaxEpochs = 10;
constexpr std::size_t kPlantedMaxRank = 3;
constexpr double kSyntheticLearningRate = 1e-3;
constexpr int kSyntheticSteps = 32;
constexpr double kSyntheticBudgetSeconds = 600;

int failures = 0;
std::map<std::string, std::string> lines;  // criterion id -> verdict line, printed in id order

void record(const char* id, const std::string& line) {
  std::cerr << line << std::endl;
  lines[id] = line;
}

void verdict(const char* id, bool ok, const std::string& detail) {
  record(id, (ok ? "[PASS] " : "[FAIL] ") + std::string(id) + " " + detail);
  if (!ok) ++failures;
}

void skip(const char* id, const std::string& why) { record(id, "[SKIP] " + std::string(id) + " " + why); }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

FeatureSchema small_schema() { return FeatureSchema({"A", "B", "Flow Duration"}); }

TokenizedExample random_example(Rng& rng, const FeatureSchema& schema, const Vocab& vocab, std::size_t max_len) {
  FlowRecord r;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    switch (rng.below(3)) {
      case 0: r.features.push_back(static_cast<double>(rng.below(100000))); break;
      case 1: r.features.push_back(std::round(rng.uniform(0, 1e4) * 1000) / 1000); break;
      default: r.features.push_back(std::exp(rng.uniform(-5, 20))); break;
    }
  }
  r.raw_label = "BENIGN";
  return tokenize(serialize(r, schema, {}), vocab, max_len, CoarseLabel::Benign);
}

EncoderConfig small_config(const Vocab& vocab, int layers, int d_model, AttentionVariant v) {
  EncoderConfig c;
  c.layers = layers;
  c.heads = 2;
  c.d_model = d_model;
  c.d_ff = 2 * d_model;
  c.max_seq_len = 40;
  c.vocab_size = static_cast<int>(vocab.size());
  c.attention_variant = v;
  c.relative_window = 4;
  return c;
}

// ---------------------------------------------------------------------------

void c1_gradients() {
  Stopwatch sw;
  const auto schema = small_schema();
  const auto vocab = Vocab::build(schema);
  Rng rng(2024);
  std::size_t pairs = 0, entries = 0;
  double worst = 0;
  std::string where;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (auto v : {AttentionVariant::Absolute, AttentionVariant::Disentangled}) {
      for (int layers : {1, 2}) {
        for (int d : {8, 16}) {
          auto p = init_params(small_config(vocab, layers, d, v), seed);
          // Off-init weights so layer norms and attention are far from symmetric points.
          p.for_each([&](std::string_view, Matrix& m) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.2 * rng.normal();
          });
          const auto ex = random_example(rng, schema, vocab, 40);
          const Logits up(rng.normal(), rng.normal(), rng.normal());
          const auto r = testing::check_gradients(p, ex, up);
          ++pairs;
          entries += r.checked;
          if (r.max_rel > worst) {
            worst = r.max_rel;
            where = std::string(to_string(v)) + " L" + std::to_string(layers) + " d" + std::to_string(d) + " " + r.worst;
          }
        }
      }
    }
  }
  const double t = sw.seconds();
  verdict("C1", pairs >= kGradMinPairs && worst < kGradRelTol && t < kGradBudgetSeconds,
          "gradient check: " + std::to_string(pairs) + " pairs, " + std::to_string(entries) +
              " entries, max rel err " + fmt("%.3g", worst) + " (< " + fmt("%g", kGradRelTol) + "), " +
              fmt("%.1f", t) + "s" + (worst >= kGradRelTol ? "; worst at " + where : ""));
}

void c3_linear_exactness() {
  Stopwatch sw;
  const auto schema = small_schema();
  const auto vocab = Vocab::build(schema);
  Rng rng(9);
  double worst = 0;
  std::size_t cases = 0;
  for (auto v : {AttentionVariant::Absolute, AttentionVariant::Disentangled}) {
    for (auto kind : {BaselineKind::AllPadEmbeddings, BaselineKind::ZeroEmbeddings}) {
      auto cfg = small_config(vocab, 0, 8, v);
      cfg.final_norm = false;
      auto p = init_params(cfg, 11);
      for (Eigen::Index i = 0; i < p.classifier_weight.size(); ++i) p.classifier_weight.data()[i] = rng.normal();
      const auto ex = random_example(rng, schema, vocab, 40);
      const Matrix delta = embed(p, ex) - baseline_embeddings(p, ex, kind);
      for (int steps : {1, 4, 64}) {
        for (auto target : kAllClasses) {
          const auto r = integrated_gradients(p, ex, target, {steps, kind, 0.01});
          const auto col = static_cast<Eigen::Index>(index_of(target));
          const double cls = delta.row(0).dot(p.classifier_weight.col(col).transpose());
          worst = std::max(worst, std::abs(r.token_attr[0] - cls));
          for (std::size_t q = 1; q < r.token_attr.size(); ++q) worst = std::max(worst, std::abs(r.token_attr[q]));
          ++cases;
        }
      }
    }
  }
  verdict("C3", worst <= kLinearAbsTol,
          "IG linear exactness: " + std::to_string(cases) + " cases, max abs err " + fmt("%.3g", worst) + " (<= " +
              fmt("%g", kLinearAbsTol) + "), " + fmt("%.2f", sw.seconds()) + "s");
}

void c4_protocol(const fs::path& cicids, const fs::path& root, std::string* manifest) {
  if (cicids.empty()) {
    skip("C4", "protocol numbers: no CICIDS2017 subset given (pass --cicids PATH)");
    return;
  }
  Stopwatch sw;
  RunConfig cfg;
  cfg.input_csv = cicids;
  cfg.work_dir = root / "cicids";
  cfg.dedup_schema_name = "cicids2017-78";
  cfg.validate();
  std::ostringstream sink;
  try {
    const auto s = cmd_prepare(cfg, sink);
    const double t = sw.seconds();
    const bool ok = s.dedup.before == kCicidsBefore && s.dedup.after == kCicidsAfter &&
                    s.class_counts == kCicidsCounts && s.overlap.clean() && t < kProtocolBudgetSeconds;
    verdict("C4", ok,
            "protocol numbers: dedup " + std::to_string(s.dedup.before) + " -> " + std::to_string(s.dedup.after) +
                ", classes " + std::to_string(s.class_counts[0]) + "/" + std::to_string(s.class_counts[1]) + "/" +
                std::to_string(s.class_counts[2]) + ", overlap (" + std::to_string(s.overlap.train_validation) +
                "," + std::to_string(s.overlap.train_test) + "," + std::to_string(s.overlap.validation_test) +
                "), " + fmt("%.1f", t) + "s");
    *manifest = slurp(layout::prepare_dir(cfg) / "manifest.tsv");
  } catch (const std::exception& e) {
    verdict("C4", false, std::string("protocol numbers: ") + e.what());
  }
}

void c5_weights() {
  const auto w = class_weights(kCicidsCounts);
  const double ratio = w.unclipped[index_of(CoarseLabel::WebAttack)] / w.unclipped[index_of(CoarseLabel::Benign)];
  const double closed = std::sqrt(243211.0 / 2053.0);
  const bool ok = std::abs(ratio - closed) <= kWeightTol && std::abs(closed - kWeightRatio) <= kWeightTol;
  verdict("C5", ok, "class weights: WEB:BENIGN pre-clip ratio " + fmt("%.14f", ratio) + " vs " + fmt("%.14f", closed));
}

void c6_metrics() {
  Rng rng(77);
  double worst = 0;
  for (int i = 0; i < kMetricsMatrices; ++i) {
    ConfusionMatrix cm;
    for (auto& row : cm.counts) {
      for (auto& v : row) v = rng.below(5) == 0 ? 0 : rng.below(200);
    }
    if (cm.total() == 0) cm.counts[1][1] = 1;
    worst = std::max(worst, testing::metrics_discrepancy(metrics(cm), testing::brute_force_metrics(cm)));
  }
  double macro = 0, weighted = 0, total = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    macro += testing::kReferenceF1[c] / 3.0;
    weighted += testing::kReferenceF1[c] * testing::kDerivedTestSupports[c];
    total += testing::kDerivedTestSupports[c];
  }
  const bool ok = worst < kMetricsTol && std::abs(macro - testing::kReferenceMacroF1) <= kReferenceTol;
  verdict("C6", ok,
          "metrics oracle: " + std::to_string(kMetricsMatrices) + " matrices, max diff " + fmt("%.3g", worst) +
              "; reference row macro-F1 " + fmt("%.5f", macro) + " (reference 0.9902), weighted " +
              fmt("%.5f", weighted / total));
}

struct SyntheticRun {
  RunConfig cfg;
  bool completed = false;
};

SyntheticRun run_synthetic(const fs::path& dir) {
  SyntheticRun run;
  fs::create_directories(dir);
  const auto fx = generate_synthetic_flows();
  {
    std::ofstream out(dir / "fixture.csv", std::ios::binary);
    write_flow_csv(out, fx.dataset);
  }
  RunConfig& cfg = run.cfg;
  cfg.input_csv = dir / "fixture.csv";
  cfg.work_dir = dir / "work";
  cfg.seed = 42;
  cfg.train.learning_rate = kSyntheticLearningRate;
  cfg.attribution.steps = kSyntheticSteps;
  cfg.validate();

  Stopwatch sw;
  std::ostringstream sink;
  std::vector<std::string> parts;
  bool ok = cfg.train.epochs <= kSyntheticMaxEpochs;
  try {
    cmd_prepare(cfg, sink);
    for (auto v : cfg.variants) {
      const auto trained = cmd_train(cfg, v, sink);
      const auto m = cmd_evaluate(cfg, v, sink);
      const auto e = cmd_explain(cfg, v, sink);
      std::string ranks;
      for (auto c : kAllClasses) {
        const std::size_t rank = e.matrix.rank_in_row(c, fx.planted[index_of(c)]);
        ok = ok && rank < kPlantedMaxRank;
        ranks += (ranks.empty() ? "" : ",") + std::to_string(rank);
      }
      ok = ok && m.macro_f1 >= kSyntheticMinMacroF1;
      parts.push_back(std::string(to_string(v)) + " test macro-F1 " + fmt("%.4f", m.macro_f1) + " (epochs " +
                      std::to_string(trained.log.epochs.size()) + "), planted ranks " + ranks);
    }
    cmd_report(cfg, sink);
    run.completed = true;
  } catch (const std::exception& e) {
    ok = false;
    parts.push_back(std::string("error: ") + e.what());
  }
  const double t = sw.seconds();
  ok = ok && t < kSyntheticBudgetSeconds;
  std::string detail = "synthetic run:";
  for (const auto& p : parts) detail += " " + p + ";";
  verdict("C7", ok, detail + " " + fmt("%.1f", t) + "s");
  return run;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void c2_completeness(const SyntheticRun& run) {
  if (!run.completed) {
    verdict("C2", false, "IG completeness: needs the trained model from C7");
    return;
  }
  Stopwatch sw;
  const RunConfig& cfg = run.cfg;
  const auto v = AttentionVariant::Absolute;
  const EncoderParams params = load_checkpoint(layout::train_dir(cfg, v) / "checkpoint.bin");
  const Vocab vocab = Vocab::build(cfg.schema());
  const SplitFile test = load_split(cfg, SplitName::Test);
  auto examples = tokenize_dataset(test.model, vocab, cfg.format, static_cast<std::size_t>(params.config.max_seq_len));
  if (examples.size() > kCompletenessExamples) examples.resize(kCompletenessExamples);

  std::vector<double> medians;
  std::size_t within = 0;
  double worst = 0;
  for (int steps : {32, 64, kCompletenessSteps}) {
    std::vector<double> gaps;
    for (const auto& ex : examples) {
      const auto r = integrated_gradients(params, ex, ex.label, {steps, cfg.attribution.baseline, kCompletenessRelTol});
      gaps.push_back(r.relative_gap());
    }
    medians.push_back(median(gaps));
    if (steps == kCompletenessSteps) {
      within = static_cast<std::size_t>(std::count_if(gaps.begin(), gaps.end(), [](double g) { return g < kCompletenessRelTol; }));
      worst = *std::max_element(gaps.begin(), gaps.end());
    }
  }
  const double t = sw.seconds();
  const double fraction = static_cast<double>(within) / static_cast<double>(examples.size());
  const bool monotone = medians[1] <= medians[0] && medians[2] <= medians[1];
  const bool ok = examples.size() == kCompletenessExamples && fraction >= kCompletenessMinFraction && monotone &&
                  t < kCompletenessBudgetSeconds;
  verdict("C2", ok,
          "IG completeness (" + std::string(to_string(v)) + "): " + std::to_string(within) + "/" +
              std::to_string(examples.size()) + " below " + fmt("%g", kCompletenessRelTol) + " at " +
              std::to_string(kCompletenessSteps) + " steps, max " + fmt("%.3g", worst) + "; median 32/64/128 " +
              fmt("%.3g", medians[0]) + "/" + fmt("%.3g", medians[1]) + "/" + fmt("%.3g", medians[2]) + ", " +
              fmt("%.1f", t) + "s");
}

void c8_determinism(const SyntheticRun& first, const fs::path& root, const fs::path& cicids,
                    const std::string& cicids_manifest) {
  if (!first.completed) {
    verdict("C8", false, "determinism: needs a completed C7 run");
    return;
  }
  std::ostringstream sink;
  RunConfig cfg = first.cfg;
  cfg.work_dir = root / "synthetic-repeat" / "work";
  fs::create_directories(cfg.work_dir);
  std::vector<std::string> mismatched;
  std::size_t compared = 0;
  try {
    cmd_prepare(cfg, sink);
    for (auto v : cfg.variants) {
      cmd_train(cfg, v, sink);
      cmd_evaluate(cfg, v, sink);
      cmd_explain(cfg, v, sink);
    }
    std::vector<fs::path> files{fs::path("prepare") / "manifest.tsv"};
    for (auto v : cfg.variants) {
      files.push_back(layout::train_dir(cfg, v).lexically_relative(cfg.work_dir) / "checkpoint.bin");
      files.push_back(layout::train_dir(cfg, v).lexically_relative(cfg.work_dir) / "validation_metrics.json");
      files.push_back(layout::evaluate_dir(cfg, v).lexically_relative(cfg.work_dir) / "metrics.json");
      files.push_back(layout::explain_dir(cfg, v).lexically_relative(cfg.work_dir) / "heatmap.csv");
    }
    for (const auto& f : files) {
      const std::string a = slurp(first.cfg.work_dir / f);
      ++compared;
      if (a.empty() || a != slurp(cfg.work_dir / f)) mismatched.push_back(f.string());
    }
    if (!cicids.empty() && !cicids_manifest.empty()) {
      RunConfig c;
      c.input_csv = cicids;
      c.work_dir = root / "cicids-repeat";
      c.dedup_schema_name = "cicids2017-78";
      cmd_prepare(c, sink);
      ++compared;
      if (slurp(layout::prepare_dir(c) / "manifest.tsv") != cicids_manifest) mismatched.push_back("cicids manifest.tsv");
    }
  } catch (const std::exception& e) {
    verdict("C8", false, std::string("determinism: ") + e.what());
    return;
  }
  std::string detail = "determinism: " + std::to_string(compared) + " artifacts compared";
  for (const auto& m : mismatched) detail += ", differs: " + m;
  verdict("C8", mismatched.empty(), detail);
}

}  // namespace

int main(int argc, char** argv) {
  fs::path cicids;
  fs::path report;
  bool keep = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cicids" && i + 1 < argc) {
      cicids = argv[++i];
    } else if (a == "--report" && i + 1 < argc) {
      report = argv[++i];
    } else if (a == "--keep") {
      keep = true;
    } else {
      std::cerr << "usage: xids_acceptance [--cicids PATH] [--report FILE] [--keep]\n";
      return 2;
    }
  }
  const fs::path root = fs::temp_directory_path() / ("xids-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  c1_gradients();
  c3_linear_exactness();
  std::string cicids_manifest;
  c4_protocol(cicids, root, &cicids_manifest);
  c5_weights();
  c6_metrics();
  const SyntheticRun run = run_synthetic(root / "synthetic");
  c2_completeness(run);
  c8_determinism(run, root, cicids, cicids_manifest);

  const std::string summary =
      failures == 0 ? "acceptance: all criteria passed" : "acceptance: " + std::to_string(failures) + " failed";
  std::ostringstream all;
  for (const auto& [id, line] : lines) all << line << "\n";
  all << summary << "\n";
  std::cout << all.str() << std::flush;
  if (!report.empty()) std::ofstream(report, std::ios::trunc) << all.str();
  if (keep) {
    std::cout << "artifacts kept under " << root.string() << "\n";
  } else {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  return failures == 0 ? 0 : 1;
}
