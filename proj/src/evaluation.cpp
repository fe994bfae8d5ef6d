// SPDX-License-Identifier: Apache-2.0
#include "xids/evaluation.hpp"

#include <nlohmann/json.hpp>

#include "xids/errors.hpp"

namespace xids {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) {
    for (const auto v : row) t += v;
  }
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) counts[i][j] += other.counts[i][j];
  }
  return *this;
}

ConfusionMatrix confusion(std::span<const CoarseLabel> predictions, std::span<const CoarseLabel> labels) {
  if (predictions.size() != labels.size()) {
    throw DataError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) ++cm.counts[index_of(labels[i])][index_of(predictions[i])];
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw DataError("metrics: confusion matrix is empty");
  MetricsReport r;
  r.confusion = cm;
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::uint64_t tp = cm.counts[c][c];
    std::uint64_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      predicted += cm.counts[k][c];
      actual += cm.counts[c][k];
    }
    auto& m = r.per_class[c];
    m.support = actual;
    m.precision_undefined = predicted == 0;
    m.recall_undefined = actual == 0;
    m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    m.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    trace += tp;
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  double weighted = 0.0, macro = 0.0;
  for (const auto& m : r.per_class) {
    macro += m.f1;
    weighted += static_cast<double>(m.support) * m.f1;
  }
  r.macro_f1 = macro / static_cast<double>(kNumClasses);
  r.weighted_f1 = weighted / static_cast<double>(total);
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["macro_f1"] = macro_f1;
  j["weighted_f1"] = weighted_f1;
  auto& classes = j["classes"];
  classes = nlohmann::ordered_json::object();
  for (const auto c : kAllClasses) {
    const auto& m = per_class[index_of(c)];
    nlohmann::ordered_json e;
    e["precision"] = m.precision;
    e["recall"] = m.recall;
    e["f1"] = m.f1;
    e["support"] = m.support;
    e["precision_undefined"] = m.precision_undefined;
    e["recall_undefined"] = m.recall_undefined;
    classes[std::string(to_string(c))] = e;
  }
  nlohmann::ordered_json cm = nlohmann::ordered_json::object();
  for (const auto c : kAllClasses) {
    cm[std::string(to_string(c))] = confusion.counts[index_of(c)];
  }
  j["confusion"] = cm;
  return j.dump(2) + "\n";
}

CoarseLabel argmax_label(const Logits& logits) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (logits(static_cast<Eigen::Index>(c)) > logits(static_cast<Eigen::Index>(best))) best = c;
  }
  return static_cast<CoarseLabel>(best);
}

}  // namespace xids
