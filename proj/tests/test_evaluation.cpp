// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "metrics_oracle.hpp"
#include "test_util.hpp"
#include "xids/errors.hpp"
#include "xids/evaluation.hpp"

namespace xids {
namespace {

ConfusionMatrix make(std::array<std::array<std::uint64_t, 3>, 3> c) {
  ConfusionMatrix cm;
  cm.counts = c;
  return cm;
}

TEST(Confusion, CountsAndShapes) {
  const std::vector<CoarseLabel> y{CoarseLabel::Benign, CoarseLabel::DDoS, CoarseLabel::WebAttack, CoarseLabel::DDoS};
  EXPECT_EQ(confusion(y, y), make({{{1, 0, 0}, {0, 2, 0}, {0, 0, 1}}}));
  const std::vector<CoarseLabel> all_benign(4, CoarseLabel::Benign);
  EXPECT_EQ(confusion(all_benign, y), make({{{1, 0, 0}, {2, 0, 0}, {1, 0, 0}}}));
  EXPECT_EQ(confusion({}, {}).total(), 0u);
  EXPECT_THROW(confusion(all_benign, std::vector<CoarseLabel>(3)), DataError);
  auto cm = confusion(y, y);
  cm += confusion(all_benign, y);
  EXPECT_EQ(cm.total(), 8u);
}

TEST(Metrics, PerfectDiagonal) {
  const auto r = metrics(make({{{10, 0, 0}, {0, 10, 0}, {0, 0, 10}}}));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.weighted_f1, 1.0);
  for (const auto& c : r.per_class) EXPECT_EQ(c.f1, 1.0);
}

TEST(Metrics, HandExample) {
  const auto cm = make({{{8, 2, 0}, {1, 9, 0}, {0, 0, 10}}});
  const auto r = metrics(cm);
  EXPECT_NEAR(r.per_class[0].precision, 8.0 / 9.0, 1e-15);
  EXPECT_NEAR(r.per_class[0].recall, 0.8, 1e-15);
  EXPECT_NEAR(r.per_class[1].precision, 9.0 / 11.0, 1e-15);
  EXPECT_NEAR(r.accuracy, 27.0 / 30.0, 1e-15);
  EXPECT_LT(testing::metrics_discrepancy(r, testing::brute_force_metrics(cm)), 1e-12);
}

TEST(Metrics, MatchBruteForceOnRandomMatrices) {
  Rng rng(1);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    ConfusionMatrix cm;
    for (auto& row : cm.counts) {
      for (auto& v : row) v = rng.below(4) == 0 ? 0 : rng.below(60);
    }
    if (cm.total() == 0) cm.counts[0][0] = 1;
    const auto r = metrics(cm);
    worst = std::max(worst, testing::metrics_discrepancy(r, testing::brute_force_metrics(cm)));
    double lo = 1, hi = 0;
    for (const auto& c : r.per_class) {
      lo = std::min(lo, c.f1);
      hi = std::max(hi, c.f1);
      EXPECT_GE(c.precision, 0.0);
      EXPECT_LE(c.recall, 1.0);
    }
    EXPECT_LE(lo, r.macro_f1 + 1e-15);
    EXPECT_GE(hi, r.macro_f1 - 1e-15);
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Metrics, PermutingClassesPermutesMetrics) {
  const auto cm = make({{{50, 3, 1}, {4, 30, 2}, {5, 0, 7}}});
  ConfusionMatrix perm;
  const int p[3] = {2, 0, 1};
  for (int t = 0; t < 3; ++t) {
    for (int q = 0; q < 3; ++q) perm.counts[p[t]][p[q]] = cm.counts[t][q];
  }
  const auto a = metrics(cm), b = metrics(perm);
  EXPECT_NEAR(a.accuracy, b.accuracy, 1e-15);
  EXPECT_NEAR(a.macro_f1, b.macro_f1, 1e-15);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(a.per_class[c].f1, b.per_class[p[c]].f1);
}

TEST(Metrics, EqualSupportsMakeWeightedEqualMacro) {
  const auto r = metrics(make({{{7, 2, 1}, {0, 10, 0}, {3, 3, 4}}}));
  EXPECT_EQ(r.weighted_f1, r.macro_f1);
}

TEST(Metrics, ZeroDivisionIsFlagged) {
  const auto r = metrics(make({{{5, 0, 0}, {3, 0, 0}, {0, 0, 0}}}));
  EXPECT_TRUE(r.per_class[1].precision_undefined);
  EXPECT_FALSE(r.per_class[1].recall_undefined);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
  EXPECT_TRUE(r.per_class[2].precision_undefined);
  EXPECT_TRUE(r.per_class[2].recall_undefined);
  EXPECT_EQ(r.per_class[2].support, 0u);
  EXPECT_THROW(metrics(ConfusionMatrix{}), DataError);
}

TEST(Metrics, ReferenceRowRecombines) {
  double macro = 0, weighted = 0, total = 0;
  for (int c = 0; c < 3; ++c) {
    macro += testing::kReferenceF1[c] / 3.0;
    weighted += testing::kReferenceF1[c] * testing::kDerivedTestSupports[c];
    total += testing::kDerivedTestSupports[c];
  }
  EXPECT_NEAR(macro, testing::kReferenceMacroF1, 1e-4);
  EXPECT_NEAR(weighted / total, testing::kReferenceWeightedF1, 1e-4);
}

TEST(Metrics, JsonHasFixedKeysAndIsStable) {
  const auto cm = make({{{8, 2, 0}, {1, 9, 0}, {0, 0, 10}}});
  const std::string j = metrics(cm).to_json();
  EXPECT_EQ(j, metrics(cm).to_json());
  EXPECT_LT(j.find("\"accuracy\""), j.find("\"macro_f1\""));
  EXPECT_NE(j.find("\"WEB_ATTACK\""), std::string::npos);
  EXPECT_NE(j.find("\"precision_undefined\": false"), std::string::npos);
  EXPECT_NE(j.find("\"confusion\""), std::string::npos);
}

TEST(Argmax, TiesGoToLowerIndex) {
  EXPECT_EQ(argmax_label(Logits(1, 2, 3)), CoarseLabel::WebAttack);
  EXPECT_EQ(argmax_label(Logits(2, 2, 1)), CoarseLabel::Benign);
  EXPECT_EQ(argmax_label(Logits(0, 5, 5)), CoarseLabel::DDoS);
  EXPECT_EQ(argmax_label(Logits::Zero()), CoarseLabel::Benign);
}

}  // namespace
}  // namespace xids
