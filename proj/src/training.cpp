// SPDX-License-Identifier: Apache-2.0
#include "xids/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "xids/errors.hpp"

namespace xids {
namespace {

std::vector<Matrix*> tensors(EncoderParams& p) {
  std::vector<Matrix*> out;
  p.for_each([&](std::string_view, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> named_tensors(const EncoderParams& p) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  p.for_each([&](std::string_view n, const Matrix& m) { out.emplace_back(std::string(n), &m); });
  return out;
}

// Norm gains and all biases ("bias", "layers.N.bq", "layers.N.b1", ...) are not decayed.
bool decays(std::string_view name) {
  return name.find("gain") == std::string_view::npos && name.find("bias") == std::string_view::npos &&
         name.find(".b") == std::string_view::npos;
}

double log_sum_exp(const Logits& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

}  // namespace

ClassWeights class_weights(const ClassCounts& counts, double clip_lo, double clip_hi) {
  if (!(clip_lo > 0.0 && clip_lo <= clip_hi)) throw ConfigError("class weight clip bounds must satisfy 0 < lo <= hi");
  ClassWeights w;
  w.clip_lo = clip_lo;
  w.clip_hi = clip_hi;
  double mean = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts[c] == 0) {
      throw DataError("class " + std::string(to_string(static_cast<CoarseLabel>(c))) +
                      " is absent from the training data; cannot compute its weight");
    }
    w.unclipped[c] = 1.0 / std::sqrt(static_cast<double>(counts[c]));
    mean += w.unclipped[c];
  }
  mean /= static_cast<double>(kNumClasses);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    w.unclipped[c] /= mean;
    w.weights[c] = std::clamp(w.unclipped[c], clip_lo, clip_hi);
  }
  return w;
}

LossResult weighted_cross_entropy(const Logits& logits, CoarseLabel label, const ClassWeights& weights) {
  const auto y = static_cast<Eigen::Index>(index_of(label));
  const double w = weights[label];
  const double lse = log_sum_exp(logits);
  LossResult r;
  r.loss = w * (lse - logits(y));
  r.grad = (logits.array() - lse).exp().matrix();
  r.grad(y) -= 1.0;
  r.grad *= w;
  return r;
}

double cross_entropy(const Logits& logits, CoarseLabel label) {
  return log_sum_exp(logits) - logits(static_cast<Eigen::Index>(index_of(label)));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (!(clip_lo > 0.0 && clip_lo <= clip_hi)) throw ConfigError("train.clip bounds must satisfy 0 < lo <= hi");
}

AdamOptimizer::AdamOptimizer(const EncoderParams& like, const TrainConfig& config)
    : config_(config), m_(like.zeros_like()), v_(like.zeros_like()) {}

void AdamOptimizer::step(EncoderParams& params, const EncoderParams& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double lr = config_.learning_rate;
  auto p = tensors(params);
  auto m = tensors(m_);
  auto v = tensors(v_);
  const auto g = named_tensors(grads);
  if (p.size() != g.size()) throw ConfigError("optimizer: gradient layout does not match parameters");
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Matrix& gi = *g[i].second;
    m[i]->array() = config_.beta1 * m[i]->array() + (1.0 - config_.beta1) * gi.array();
    v[i]->array() = config_.beta2 * v[i]->array() + (1.0 - config_.beta2) * gi.array().square();
    if (config_.weight_decay > 0.0 && decays(g[i].first)) p[i]->array() *= 1.0 - lr * config_.weight_decay;
    p[i]->array() -= lr * (m[i]->array() / bc1) / ((v[i]->array() / bc2).sqrt() + config_.epsilon);
  }
}

bool EarlyStopping::update(double metric) {
  if (!seen_ || metric > best_) {
    seen_ = true;
    best_ = metric;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

std::string TrainingLog::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_macro_f1"] = e.val_macro_f1;
    j["val_accuracy"] = e.val_accuracy;
    j["improved"] = e.improved;
    j["best_epoch"] = best_epoch;
    out += j.dump() + "\n";
  }
  return out;
}

ModelEvaluation evaluate_model(const EncoderParams& params, std::span<const TokenizedExample> examples) {
  ModelEvaluation ev;
  std::vector<CoarseLabel> labels;
  labels.reserve(examples.size());
  ev.predictions.reserve(examples.size());
  double loss = 0.0;
  for (const auto& ex : examples) {
    const Logits z = predict_logits(params, ex);
    ev.logits.push_back(z);
    ev.predictions.push_back(argmax_label(z));
    labels.push_back(ex.label);
    loss += cross_entropy(z, ex.label);
  }
  ev.mean_loss = examples.empty() ? 0.0 : loss / static_cast<double>(examples.size());
  if (!examples.empty()) ev.report = metrics(confusion(ev.predictions, labels));
  return ev;
}

TrainResult train(const EncoderParams& initial, std::span<const TokenizedExample> train_set,
                  std::span<const TokenizedExample> validation_set, const ClassWeights& weights,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw DataError("training split is empty");
  if (validation_set.empty() && !hooks.validation_metric) throw DataError("validation split is empty");

  TrainResult result{initial, {}};
  EncoderParams params = initial;
  AdamOptimizer adam(params, config);
  EarlyStopping stopper(config.patience);
  Rng root(config.seed);

  std::vector<std::size_t> order(train_set.size());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::size_t batch_index = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.fork(2 * static_cast<std::uint64_t>(epoch));
    Rng dropout_rng = root.fork(2 * static_cast<std::uint64_t>(epoch) + 1);
    shuffle(std::span(order), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + batch);
      EncoderParams grad_sum = params.zeros_like();
      auto sum = tensors(grad_sum);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const TokenizedExample& ex = train_set[order[k]];
        ForwardResult fr = forward(params, ex, {.training = true, .rng = &dropout_rng});
        const LossResult lr = weighted_cross_entropy(fr.logits, ex.label, weights);
        if (!std::isfinite(lr.loss)) {
          throw NumericError("non-finite training loss in batch " + std::to_string(batch_index) + " (epoch " +
                             std::to_string(epoch) + ")");
        }
        batch_loss += lr.loss;
        Gradients g = backward(params, fr.trace, lr.grad);
        auto gt = tensors(g.params);
        for (std::size_t i = 0; i < sum.size(); ++i) *sum[i] += *gt[i];
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto* m : sum) *m *= scale;
      adam.step(params, grad_sum);
      epoch_loss += batch_loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    if (!validation_set.empty()) {
      const ModelEvaluation ev = evaluate_model(params, validation_set);
      rec.val_loss = ev.mean_loss;
      rec.val_macro_f1 = ev.report.macro_f1;
      rec.val_accuracy = ev.report.accuracy;
    }
    const double selection = hooks.validation_metric ? hooks.validation_metric(params, epoch) : rec.val_macro_f1;
    rec.improved = stopper.update(selection);
    if (rec.improved) {
      result.best = params;
      result.log.best_epoch = epoch;
    }
    result.log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stopper.should_stop() && epoch < config.epochs) {
      result.log.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace xids
