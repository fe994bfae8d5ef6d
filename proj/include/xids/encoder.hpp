// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xids/random.hpp"
#include "xids/tokenizer.hpp"

namespace xids {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Logits = Eigen::Matrix<double, 1, 3>;

enum class AttentionVariant { Absolute, Disentangled };

std::string_view to_string(AttentionVariant v);  ///< "absolute" / "disentangled"
AttentionVariant attention_variant_from_string(std::string_view s);

struct EncoderConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 64;
  int d_ff = 128;
  int max_seq_len = static_cast<int>(kDefaultMaxSeqLen);
  int n_classes = 3;
  int vocab_size = 0;
  AttentionVariant attention_variant = AttentionVariant::Absolute;
  double dropout_rate = 0.1;
  /// Clipping window k for relative distances (disentangled variant).
  int relative_window = 16;
  /// Apply the final layer norm before the classifier. Disabling it with
  /// layers == 0 makes the model linear in the CLS embedding.
  bool final_norm = true;
  std::uint64_t seed = 0;

  int head_dim() const { return d_model / heads; }
  /// Throws ConfigError on inconsistent shapes.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  /// Projections of the shared relative-position table (disentangled only).
  Matrix wq_rel, wk_rel;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1, w2, b2;
};

struct EncoderParams {
  EncoderConfig config;
  Matrix token_embedding;     ///< vocab_size x d_model
  Matrix position_embedding;  ///< max_seq_len x d_model (absolute only)
  Matrix relative_embedding;  ///< 2k x d_model (disentangled only)
  std::vector<LayerParams> layers;
  Matrix final_gain, final_bias;
  Matrix classifier_weight;  ///< d_model x n_classes
  Matrix classifier_bias;    ///< 1 x n_classes

  /// Visits every tensor with a stable dotted name, in a fixed order.
  void for_each(const std::function<void(std::string_view, Matrix&)>& fn);
  void for_each(const std::function<void(std::string_view, const Matrix&)>& fn) const;

  /// Same shapes, all zeros.
  EncoderParams zeros_like() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
  /// SHA-1 over names, shapes, and raw values.
  std::string fingerprint() const;
};

/// Deterministic initialization. Matrices are N(0, 1/fan_in); the classifier
/// gets an extra 0.1 gain so untrained logits stay near zero. Layer-norm
/// gains are 1, all biases 0.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

/// Token lookup, plus position embeddings for the absolute variant.
/// Returns max_seq_len x d_model. Throws DataError on out-of-range ids.
Matrix embed(const EncoderParams& params, const TokenizedExample& example);

/// Raw content-content + content-position + position-content scores for one
/// head, scaled by 1/sqrt(3 * d_head). Rows/columns follow `positions`, the
/// original sequence indices of the content rows; relative rows index clipped
/// distances clamp(i - j, -k, k - 1) + k.
Matrix attention_scores_disentangled(const Matrix& content_q, const Matrix& content_k,
                                     const Matrix& relative_q, const Matrix& relative_k,
                                     std::span<const int> positions, int window);

/// Bucket used for the relative distance between query i and key j.
int relative_bucket(int i, int j, int window);

struct LayerTrace {
  Matrix input;  ///< L x D
  Matrix ln1_hat;
  Vector ln1_rstd;
  Matrix ln1_out;
  Matrix q, k, v;  ///< q has Lq rows
  Matrix q_rel, k_rel;  ///< 2k x D (disentangled)
  std::vector<Matrix> probs;  ///< per head, Lq x L
  Matrix context;  ///< Lq x D
  Matrix drop1;    ///< dropout scale mask, empty when not training
  Matrix mid;      ///< Lq x D
  Matrix ln2_hat;
  Vector ln2_rstd;
  Matrix ln2_out;
  Matrix ffn_pre;  ///< Lq x F
  Matrix ffn_act;
  Matrix drop2;
  Matrix output;  ///< Lq x D
};

/// Activations cached by a forward pass. Masked positions are never
/// computed: only the rows listed in `active` take part in attention.
struct ForwardTrace {
  EncoderConfig config;
  int seq_len = 0;
  std::vector<int> active;  ///< original indices of unmasked positions, CLS first
  std::vector<LayerTrace> layers;
  Matrix cls_state;  ///< 1 x D, input to the final norm
  Matrix final_hat;
  double final_rstd = 1.0;
  Matrix pooled;  ///< 1 x D, input to the classifier
  Logits logits;
  std::vector<TokenId> ids;  ///< set by forward(example) so backward can fill embedding grads
};

struct ForwardOptions {
  bool training = false;  ///< enables dropout
  Rng* rng = nullptr;     ///< required when training with dropout > 0
};

struct ForwardResult {
  Logits logits;
  ForwardTrace trace;
};

/// Pre-norm encoder over given embeddings; CLS (position 0) feeds the head.
/// Throws NumericError naming the layer on a non-finite activation.
ForwardResult forward_from_embeddings(const EncoderParams& params, const Matrix& embeddings,
                                      std::span<const std::uint8_t> attention_mask,
                                      const ForwardOptions& options = {});

ForwardResult forward(const EncoderParams& params, const TokenizedExample& example,
                      const ForwardOptions& options = {});

/// Logits only.
Logits predict_logits(const EncoderParams& params, const TokenizedExample& example);

struct Gradients {
  EncoderParams params;  ///< same layout as the model, gradient values
  Matrix input;          ///< seq_len x D gradient w.r.t. the embeddings
};

enum class BackwardMode { Full, InputOnly };

/// Exact reverse-mode gradients of <upstream, logits>. With InputOnly the
/// parameter gradients are not computed and `params` stays default-constructed. Throws ConfigError if the trace was
/// produced by a model of a different configuration.
Gradients backward(const EncoderParams& params, const ForwardTrace& trace, const Logits& upstream,
                   BackwardMode mode = BackwardMode::Full);

}  // namespace xids
