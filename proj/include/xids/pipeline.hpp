// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <ostream>
#include <string>

#include "xids/attribution.hpp"
#include "xids/config.hpp"
#include "xids/evaluation.hpp"
#include "xids/flow_data.hpp"
#include "xids/training.hpp"

namespace xids {

/// ANSI emphasis for console summaries. Off unless explicitly enabled.
struct Style {
  bool color = false;

  /// Enabled for a terminal stdout unless NO_COLOR is set (to anything).
  static Style detect();

  std::string bold(std::string_view s) const;
  std::string good(std::string_view s) const;
  std::string bad(std::string_view s) const;
};

/// Stage directories under the work dir. Each command writes only its own.
namespace layout {
std::filesystem::path prepare_dir(const RunConfig& cfg);
std::filesystem::path train_dir(const RunConfig& cfg, AttentionVariant v);
std::filesystem::path evaluate_dir(const RunConfig& cfg, AttentionVariant v);
std::filesystem::path explain_dir(const RunConfig& cfg, AttentionVariant v);
std::filesystem::path report_path(const RunConfig& cfg);
std::filesystem::path lock_path(const RunConfig& cfg);
}  // namespace layout

/// Exclusive advisory lock on the work dir, released on destruction or
/// process exit. Throws IoError when another process holds it.
class WorkDirLock {
 public:
  explicit WorkDirLock(const std::filesystem::path& work_dir);
  ~WorkDirLock();
  WorkDirLock(const WorkDirLock&) = delete;
  WorkDirLock& operator=(const WorkDirLock&) = delete;

 private:
  int fd_ = -1;
};

struct PrepareSummary {
  ParseReport parse;
  DedupReport dedup;
  ClassCounts class_counts{};  ///< after dedup
  std::array<ClassCounts, 3> split_counts{};
  OverlapReport overlap;
};

/// Parse, deduplicate, split, audit. Artifacts are written before the audit
/// verdict so a failing run can be inspected; a non-empty overlap then
/// raises AuditError.
PrepareSummary cmd_prepare(const RunConfig& cfg, std::ostream& out, const Style& style = {});

struct TrainSummary {
  TrainingLog log;
  MetricsReport validation;
  std::string fingerprint;
};

TrainSummary cmd_train(const RunConfig& cfg, AttentionVariant variant, std::ostream& out,
                       const Style& style = {});

/// Test-split metrics of the trained checkpoint. Throws DataError when a
/// class has no test examples.
MetricsReport cmd_evaluate(const RunConfig& cfg, AttentionVariant variant, std::ostream& out,
                           const Style& style = {});

struct ExplainSummary {
  ClassAttributionMatrix matrix;
  std::size_t examples = 0;
  std::size_t exceeding = 0;  ///< relative completeness gap above tolerance
  double median_relative_gap = 0.0;
  double max_relative_gap = 0.0;

  double exceeding_fraction() const { return examples ? static_cast<double>(exceeding) / static_cast<double>(examples) : 0.0; }
};

/// Class x feature attribution heatmap over the test split.
ExplainSummary cmd_explain(const RunConfig& cfg, AttentionVariant variant, std::ostream& out,
                           const Style& style = {});

/// Markdown report over every stage. Throws IoError listing the commands to
/// run when an artifact is missing. Returns the document text.
std::string cmd_report(const RunConfig& cfg, std::ostream& out, const Style& style = {});

/// Loads one split file, keeping the dedup-schema columns (for hashing) and
/// the projection onto the modelling schema.
struct SplitFile {
  LabeledDataset identity;
  LabeledDataset model;
};
SplitFile load_split(const RunConfig& cfg, SplitName split);

}  // namespace xids
