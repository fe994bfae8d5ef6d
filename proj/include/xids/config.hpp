// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "xids/attribution.hpp"
#include "xids/encoder.hpp"
#include "xids/flow_data.hpp"
#include "xids/textualize.hpp"
#include "xids/training.hpp"

namespace xids {

struct ReportOptions {
  std::size_t top_k = 15;
  std::vector<HeatmapFormat> formats = {HeatmapFormat::Csv, HeatmapFormat::Svg};
};

/// Everything one run needs. Parsed from a JSON document whose layout mirrors
/// these fields; every key is optional and unknown keys are rejected.
///
///   {
///     "input_csv": "flows.csv",         // relative to the config file
///     "work_dir": "work",               // relative to the config file
///     "seed": 42,                       // split, init, and shuffling seeds derive from it
///     "schema": "cicids2017-15",        // modelling columns: a schema name or a list of names
///     "dedup_schema": "cicids2017-78",  // record identity for dedup and audit; defaults to "schema"
///     "label_column": "Label",
///     "unknown_labels": "error",        // or "drop"
///     "variants": ["absolute", "disentangled"],
///     "format":  {"significant_digits": 6, "integer_passthrough": true},
///     "split":   {"train": 0.7, "validation": 0.1, "test": 0.2},
///     "encoder": {"layers": 2, "heads": 4, "d_model": 64, "d_ff": 128, "max_seq_len": 256,
///                 "dropout": 0.1, "relative_window": 16},
///     "train":   {"epochs": 10, "batch_size": 32, "learning_rate": 3e-4, "beta1": 0.9,
///                 "beta2": 0.999, "epsilon": 1e-8, "weight_decay": 0.01, "patience": 3,
///                 "clip_lo": 0.25, "clip_hi": 10},
///     "attribution": {"steps": 64, "baseline": "all_pad", "completeness_tolerance": 0.01,
///                     "target": "true_label"},
///     "report":  {"top_k": 15, "formats": ["csv", "svg"]}
///   }
struct RunConfig {
  std::filesystem::path input_csv;
  std::filesystem::path work_dir = "xids-work";
  std::uint64_t seed = 42;
  std::string schema_name = "cicids2017-15";
  std::vector<std::string> schema_columns;  ///< overrides schema_name when non-empty
  std::string dedup_schema_name;              ///< empty: same as the modelling schema
  std::vector<std::string> dedup_schema_columns;
  CsvOptions csv;
  std::vector<AttentionVariant> variants = {AttentionVariant::Absolute, AttentionVariant::Disentangled};
  ValueFormatPolicy format;
  SplitRatios split;
  EncoderConfig encoder;  ///< vocab_size, variant, and seed are filled per stage
  TrainConfig train;      ///< seed is derived
  IGConfig attribution;
  AttributionTarget attribution_target = AttributionTarget::TrueLabel;
  ReportOptions report;

  FeatureSchema schema() const;
  /// Columns hashed for dedup and overlap audit. Split files keep these
  /// columns, and later stages project them onto schema().
  FeatureSchema dedup_schema() const;
  /// Throws ConfigError on out-of-range values.
  void validate() const;

  std::uint64_t split_seed() const;
  std::uint64_t init_seed(AttentionVariant v) const;
  std::uint64_t train_seed(AttentionVariant v) const;
};

/// Relative paths in the document resolve against `base_dir`.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical JSON of the fully resolved config, defaults included.
std::string to_json(const RunConfig& config);

std::string encoder_config_to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(std::string_view json_text);

}  // namespace xids
