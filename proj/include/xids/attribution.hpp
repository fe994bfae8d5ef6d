// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xids/encoder.hpp"
#include "xids/flow_data.hpp"
#include "xids/tokenizer.hpp"

namespace xids {

enum class BaselineKind { AllPadEmbeddings, ZeroEmbeddings };

std::string_view to_string(BaselineKind kind);  ///< "all_pad" / "zero"
BaselineKind baseline_kind_from_string(std::string_view s);

struct IGConfig {
  int steps = 64;
  BaselineKind baseline = BaselineKind::AllPadEmbeddings;
  double completeness_tolerance = 0.01;  ///< relative

  void validate() const;
};

/// ALL_PAD: each position's token embedding replaced by the PAD embedding,
/// position embeddings kept. ZERO: an all-zero matrix.
Matrix baseline_embeddings(const EncoderParams& params, const TokenizedExample& example, BaselineKind kind);

struct FeatureAttribution {
  std::vector<double> features;
  double structural_residue = 0.0;  ///< attribution on CLS/SEP positions
};

/// Sums token attributions inside each feature span. Positions outside every
/// span go to the structural residue. Throws DataError if a span is out of
/// range, spans overlap, or a feature index repeats.
FeatureAttribution aggregate_to_features(std::span<const double> token_attr, std::span<const TokenSpan> spans,
                                         std::size_t num_features);

struct AttributionResult {
  std::vector<double> token_attr;
  std::vector<double> feature_attr;
  double structural_residue = 0.0;
  CoarseLabel target_class = CoarseLabel::Benign;
  double input_logit = 0.0;     ///< F_target(x)
  double baseline_logit = 0.0;  ///< F_target(x')
  /// sum(token_attr) - (F(x) - F(x')).
  double completeness_gap = 0.0;
  bool exceeds_tolerance = false;

  double output_delta() const { return input_logit - baseline_logit; }
  /// |gap| / |F(x) - F(x')|, or |gap| when the denominator vanishes.
  double relative_gap() const;
};

/// Midpoint-rule integrated gradients of the pre-softmax target logit with
/// respect to the input embeddings, projected per token by summing
/// (x - x') * mean gradient over embedding dimensions.
/// Throws NumericError with the step index on a non-finite gradient.
AttributionResult integrated_gradients(const EncoderParams& params, const TokenizedExample& example,
                                       CoarseLabel target_class, const IGConfig& config);

enum class AttributionTarget { TrueLabel, Predicted };
std::string_view to_string(AttributionTarget target);  ///< "true_label" / "predicted"
AttributionTarget attribution_target_from_string(std::string_view s);

/// Classes x top-K features of mean absolute feature attribution.
struct ClassAttributionMatrix {
  std::array<CoarseLabel, kNumClasses> classes = kAllClasses;
  std::vector<std::string> features;       ///< selected names, by global score descending
  std::vector<std::size_t> feature_index;  ///< schema indices of `features`
  std::vector<double> global_scores;       ///< mean |attr| over all examples, per selected feature
  std::array<std::vector<double>, kNumClasses> values;
  ClassCounts sample_counts{};

  double value(CoarseLabel c, std::size_t column) const { return values[index_of(c)].at(column); }
  /// Rank (0-based) of a schema feature within one class row, by descending value.
  std::size_t rank_in_row(CoarseLabel c, std::size_t schema_index) const;
};

/// Aggregates per-example attributions. `classes[i]` is the row example i
/// contributes to. Throws DataError naming any class without examples.
ClassAttributionMatrix build_class_matrix(std::span<const AttributionResult> results,
                                          std::span<const CoarseLabel> classes, const FeatureSchema& schema,
                                          std::size_t top_k);

struct ClassAttributionRun {
  ClassAttributionMatrix matrix;
  std::vector<AttributionResult> results;  ///< parallel to the input examples
};

/// IG for every example toward its true (or predicted) class, then build_class_matrix.
ClassAttributionRun class_attribution_matrix(const EncoderParams& params,
                                             std::span<const TokenizedExample> examples,
                                             const FeatureSchema& schema, const IGConfig& config,
                                             std::size_t top_k,
                                             AttributionTarget target = AttributionTarget::TrueLabel);

enum class HeatmapFormat { Csv, Svg };
HeatmapFormat heatmap_format_from_string(std::string_view s);
std::string_view to_string(HeatmapFormat format);  ///< "csv" / "svg"

/// CSV: header "class,<features...>", one row per class, 6 significant digits.
/// SVG: standalone heatmap with per-cell values and a color bar.
std::string export_heatmap(const ClassAttributionMatrix& matrix, HeatmapFormat format);

}  // namespace xids
