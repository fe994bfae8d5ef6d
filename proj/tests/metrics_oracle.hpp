// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "xids/evaluation.hpp"

namespace xids::testing {

/// Metrics recomputed by expanding the matrix into (truth, prediction) pairs
/// and counting TP/FP/FN per class one example at a time.
struct OracleMetrics {
  std::array<double, 3> precision{}, recall{}, f1{};
  std::array<double, 3> support{};
  double accuracy = 0, macro_f1 = 0, weighted_f1 = 0;
};

inline OracleMetrics brute_force_metrics(const ConfusionMatrix& cm) {
  std::vector<std::pair<int, int>> pairs;
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) {
      for (std::uint64_t k = 0; k < cm.counts[t][p]; ++k) pairs.emplace_back(t, p);
    }
  }
  OracleMetrics o;
  double correct = 0;
  for (const auto& [t, p] : pairs) correct += t == p;
  o.accuracy = correct / static_cast<double>(pairs.size());
  double weighted = 0;
  for (int c = 0; c < 3; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (const auto& [t, p] : pairs) {
      if (t == c && p == c) tp += 1;
      if (t != c && p == c) fp += 1;
      if (t == c && p != c) fn += 1;
    }
    o.precision[c] = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    o.recall[c] = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double s = o.precision[c] + o.recall[c];
    o.f1[c] = s > 0 ? 2 * o.precision[c] * o.recall[c] / s : 0.0;
    o.support[c] = tp + fn;
    weighted += o.support[c] * o.f1[c];
  }
  o.macro_f1 = (o.f1[0] + o.f1[1] + o.f1[2]) / 3.0;
  o.weighted_f1 = weighted / static_cast<double>(pairs.size());
  return o;
}

/// Largest absolute difference between the library report and the oracle.
inline double metrics_discrepancy(const MetricsReport& r, const OracleMetrics& o) {
  double d = std::max({std::abs(r.accuracy - o.accuracy), std::abs(r.macro_f1 - o.macro_f1),
                       std::abs(r.weighted_f1 - o.weighted_f1)});
  for (std::size_t c = 0; c < 3; ++c) {
    d = std::max({d, std::abs(r.per_class[c].precision - o.precision[c]), std::abs(r.per_class[c].recall - o.recall[c]),
                  std::abs(r.per_class[c].f1 - o.f1[c]),
                  std::abs(static_cast<double>(r.per_class[c].support) - o.support[c])});
  }
  return d;
}

/// Reference classifier row: per-class F1 and its macro and weighted F1.
inline constexpr std::array<double, 3> kReferenceF1{0.9995, 0.9994, 0.9717};
inline constexpr double kReferenceMacroF1 = 0.9902;
inline constexpr double kReferenceWeightedF1 = 0.9993;
/// 20% test split of the deduplicated class counts.
inline constexpr std::array<double, 3> kDerivedTestSupports{48642, 24321, 411};

}  // namespace xids::testing
