// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "xids/encoder.hpp"
#include "xids/flow_data.hpp"

namespace xids {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  std::uint64_t total() const;
  std::uint64_t at(CoarseLabel truth, CoarseLabel predicted) const {
    return counts[index_of(truth)][index_of(predicted)];
  }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const CoarseLabel> predictions, std::span<const CoarseLabel> labels);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  bool precision_undefined = false;  ///< no predictions of this class; reported as 0
  bool recall_undefined = false;     ///< no true examples of this class; reported as 0
};

struct MetricsReport {
  std::array<ClassMetrics, kNumClasses> per_class{};
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  ConfusionMatrix confusion;

  /// Fixed-key JSON document, byte-stable for equal inputs.
  std::string to_json() const;
};

/// Throws DataError on an all-zero matrix.
MetricsReport metrics(const ConfusionMatrix& cm);

/// Argmax; ties go to the lower class index.
CoarseLabel argmax_label(const Logits& logits);

}  // namespace xids
