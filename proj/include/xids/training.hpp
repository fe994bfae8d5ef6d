// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xids/encoder.hpp"
#include "xids/evaluation.hpp"
#include "xids/flow_data.hpp"

namespace xids {

struct ClassWeights {
  std::array<double, kNumClasses> weights{1.0, 1.0, 1.0};    ///< clipped, used by the loss
  std::array<double, kNumClasses> unclipped{1.0, 1.0, 1.0};  ///< mean-normalized 1/sqrt(n_c)
  double clip_lo = 0.25;
  double clip_hi = 10.0;

  double operator[](CoarseLabel c) const { return weights[index_of(c)]; }
};

/// w_c = (1/sqrt(n_c)) / mean_k(1/sqrt(n_k)), then clipped to [clip_lo, clip_hi].
/// Throws DataError when any class count is zero.
ClassWeights class_weights(const ClassCounts& counts, double clip_lo = 0.25, double clip_hi = 10.0);

struct LossResult {
  double loss = 0.0;
  Logits grad = Logits::Zero();  ///< d loss / d logits
};

/// -w_label * log softmax(logits)[label] with log-sum-exp stabilization.
LossResult weighted_cross_entropy(const Logits& logits, CoarseLabel label, const ClassWeights& weights);

/// Unweighted cross-entropy, used for validation and test reporting.
double cross_entropy(const Logits& logits, CoarseLabel label);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;  ///< decoupled, applied to matrices only (not biases or norms)
  int patience = 3;
  std::uint64_t seed = 0;
  double clip_lo = 0.25;
  double clip_hi = 10.0;

  void validate() const;
};

/// Adam with decoupled weight decay.
class AdamOptimizer {
 public:
  AdamOptimizer(const EncoderParams& like, const TrainConfig& config);
  void step(EncoderParams& params, const EncoderParams& grads);
  long steps() const { return t_; }

 private:
  TrainConfig config_;
  EncoderParams m_;
  EncoderParams v_;
  long t_ = 0;
};

/// Tracks the best metric; improvement must be strict.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Returns true when `metric` improves on the best seen so far.
  bool update(double metric);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  int bad_epochs_ = 0;
  double best_ = -1.0;
  bool seen_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  ///< mean weighted loss over the epoch
  double val_loss = 0.0;    ///< mean unweighted loss
  double val_macro_f1 = 0.0;
  double val_accuracy = 0.0;
  bool improved = false;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  bool stopped_early = false;

  /// One JSON object per epoch.
  std::string to_jsonl() const;
};

struct TrainHooks {
  /// Replaces validation macro-F1 as the model-selection metric when set.
  std::function<double(const EncoderParams&, int epoch)> validation_metric;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  EncoderParams best;
  TrainingLog log;
};

/// Seeded mini-batch training. Per-example gradients are summed in batch
/// order; the checkpoint with the best validation macro-F1 is returned.
/// Throws NumericError naming the batch on a non-finite loss.
TrainResult train(const EncoderParams& initial, std::span<const TokenizedExample> train_set,
                  std::span<const TokenizedExample> validation_set, const ClassWeights& weights,
                  const TrainConfig& config, const TrainHooks& hooks = {});

struct ModelEvaluation {
  MetricsReport report;
  double mean_loss = 0.0;
  std::vector<CoarseLabel> predictions;
  std::vector<Logits> logits;
};

/// Eval-mode predictions and metrics; never reads class weights.
ModelEvaluation evaluate_model(const EncoderParams& params, std::span<const TokenizedExample> examples);

}  // namespace xids
