// SPDX-License-Identifier: Apache-2.0
#include "xids/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "xids/errors.hpp"
#include "xids/hash.hpp"

namespace xids {
namespace {

constexpr double kLayerNormEps = 1e-5;

void layer_norm_forward(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& hat,
                        Vector& rstd, Matrix& out) {
  const auto rows = x.rows();
  const auto dim = static_cast<double>(x.cols());
  hat.resize(rows, x.cols());
  rstd.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / dim;
    hat.row(r) = x.row(r).array() - mean;
    const double var = hat.row(r).squaredNorm() / dim;
    rstd(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    hat.row(r) *= rstd(r);
  }
  out = (hat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

/// Returns dx; accumulates into dgain/dbias when given.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& hat, const Vector& rstd,
                           const Matrix& gain, Matrix* dgain, Matrix* dbias) {
  if (dgain) *dgain += dy.cwiseProduct(hat).colwise().sum();
  if (dbias) *dbias += dy.colwise().sum();
  const Matrix dhat = dy.array().rowwise() * gain.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  const auto dim = static_cast<double>(dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dhat.row(r).sum() / dim;
    const double m2 = dhat.row(r).dot(hat.row(r)) / dim;
    dx.row(r) = rstd(r) * (dhat.row(r).array() - m1 - hat.row(r).array() * m2);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - m).exp();
    s.row(r) /= s.row(r).sum();
  }
}

void add_row(Matrix& m, const Matrix& bias) { m.rowwise() += bias.row(0); }

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

Matrix disentangled_scores(const Matrix& qc, const Matrix& kc, const Matrix& qr, const Matrix& kr,
                           std::span<const int> qpos, std::span<const int> kpos, int window) {
  Matrix s = qc * kc.transpose();
  const Matrix c2p = qc * kr.transpose();
  const Matrix p2c = kc * qr.transpose();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      s(i, j) += c2p(i, relative_bucket(qpos[i], kpos[j], window)) +
                 p2c(j, relative_bucket(kpos[j], qpos[i], window));
    }
  }
  s *= 1.0 / std::sqrt(3.0 * static_cast<double>(qc.cols()));
  return s;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  const auto& cfg = p.config;
  fn("token_embedding", p.token_embedding);
  if (cfg.attention_variant == AttentionVariant::Absolute) fn("position_embedding", p.position_embedding);
  if (cfg.attention_variant == AttentionVariant::Disentangled) fn("relative_embedding", p.relative_embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    fn(pre + "ln1_gain", L.ln1_gain);
    fn(pre + "ln1_bias", L.ln1_bias);
    fn(pre + "wq", L.wq);
    fn(pre + "bq", L.bq);
    fn(pre + "wk", L.wk);
    fn(pre + "bk", L.bk);
    fn(pre + "wv", L.wv);
    fn(pre + "bv", L.bv);
    fn(pre + "wo", L.wo);
    fn(pre + "bo", L.bo);
    if (cfg.attention_variant == AttentionVariant::Disentangled) {
      fn(pre + "wq_rel", L.wq_rel);
      fn(pre + "wk_rel", L.wk_rel);
    }
    fn(pre + "ln2_gain", L.ln2_gain);
    fn(pre + "ln2_bias", L.ln2_bias);
    fn(pre + "w1", L.w1);
    fn(pre + "b1", L.b1);
    fn(pre + "w2", L.w2);
    fn(pre + "b2", L.b2);
  }
  fn("final_gain", p.final_gain);
  fn("final_bias", p.final_bias);
  fn("classifier_weight", p.classifier_weight);
  fn("classifier_bias", p.classifier_bias);
}

void require_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite activation in " + where);
}

}  // namespace

std::string_view to_string(AttentionVariant v) {
  return v == AttentionVariant::Absolute ? "absolute" : "disentangled";
}

AttentionVariant attention_variant_from_string(std::string_view s) {
  if (s == "absolute") return AttentionVariant::Absolute;
  if (s == "disentangled") return AttentionVariant::Disentangled;
  throw ConfigError("unknown attention variant '" + std::string(s) +
                    "' (expected absolute or disentangled)");
}

void EncoderConfig::validate() const {
  if (layers < 0) throw ConfigError("encoder.layers must be >= 0");
  if (heads < 1) throw ConfigError("encoder.heads must be >= 1");
  if (d_model < 1) throw ConfigError("encoder.d_model must be >= 1");
  if (d_model % heads != 0) {
    throw ConfigError("encoder.d_model (" + std::to_string(d_model) +
                      ") must be divisible by encoder.heads (" + std::to_string(heads) + ")");
  }
  if (d_ff < 1) throw ConfigError("encoder.d_ff must be >= 1");
  if (max_seq_len < 1) throw ConfigError("encoder.max_seq_len must be >= 1");
  if (n_classes != 3) throw ConfigError("encoder.n_classes must be 3");
  if (vocab_size < 1) throw ConfigError("encoder.vocab_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("encoder.dropout must lie in [0, 1)");
  }
  if (relative_window < 1) throw ConfigError("encoder.relative_window must be >= 1");
}

int relative_bucket(int i, int j, int window) { return std::clamp(i - j, -window, window - 1) + window; }

Matrix attention_scores_disentangled(const Matrix& content_q, const Matrix& content_k,
                                     const Matrix& relative_q, const Matrix& relative_k,
                                     std::span<const int> positions, int window) {
  if (content_q.rows() != content_k.rows() || content_q.cols() != content_k.cols() ||
      relative_q.cols() != content_q.cols() || relative_k.cols() != content_q.cols() ||
      relative_q.rows() != 2 * window || relative_k.rows() != 2 * window ||
      static_cast<Eigen::Index>(positions.size()) != content_q.rows()) {
    throw ConfigError("attention_scores_disentangled: shape mismatch");
  }
  return disentangled_scores(content_q, content_k, relative_q, relative_k, positions, positions,
                             window);
}

void EncoderParams::for_each(const std::function<void(std::string_view, Matrix&)>& fn) {
  visit_params(*this, [&](const std::string& n, Matrix& m) { fn(n, m); });
}

void EncoderParams::for_each(const std::function<void(std::string_view, const Matrix&)>& fn) const {
  visit_params(*this, [&](const std::string& n, const Matrix& m) { fn(n, m); });
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  z.for_each([](std::string_view, Matrix& m) { m.setZero(); });
  return z;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

std::string EncoderParams::fingerprint() const {
  std::string bytes;
  for_each([&](std::string_view name, const Matrix& m) {
    bytes.append(name);
    bytes.push_back('\0');
    const auto rows = static_cast<std::int64_t>(m.rows());
    const auto cols = static_cast<std::int64_t>(m.cols());
    bytes.append(reinterpret_cast<const char*>(&rows), sizeof rows);
    bytes.append(reinterpret_cast<const char*>(&cols), sizeof cols);
    bytes.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  });
  return to_hex(sha1(bytes));
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  const int D = config.d_model;
  const int F = config.d_ff;
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(D));
  const double inv_f = 1.0 / std::sqrt(static_cast<double>(F));
  Rng rng(seed);

  EncoderParams p;
  p.config = config;
  p.config.seed = seed;
  p.token_embedding = normal_matrix(config.vocab_size, D, inv_d, rng);
  if (config.attention_variant == AttentionVariant::Absolute) {
    p.position_embedding = normal_matrix(config.max_seq_len, D, inv_d, rng);
  } else {
    p.relative_embedding = normal_matrix(2 * config.relative_window, D, inv_d, rng);
  }
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& L : p.layers) {
    L.ln1_gain = Matrix::Ones(1, D);
    L.ln1_bias = Matrix::Zero(1, D);
    L.wq = normal_matrix(D, D, inv_d, rng);
    L.bq = Matrix::Zero(1, D);
    L.wk = normal_matrix(D, D, inv_d, rng);
    L.bk = Matrix::Zero(1, D);
    L.wv = normal_matrix(D, D, inv_d, rng);
    L.bv = Matrix::Zero(1, D);
    L.wo = normal_matrix(D, D, inv_d, rng);
    L.bo = Matrix::Zero(1, D);
    if (config.attention_variant == AttentionVariant::Disentangled) {
      L.wq_rel = normal_matrix(D, D, inv_d, rng);
      L.wk_rel = normal_matrix(D, D, inv_d, rng);
    }
    L.ln2_gain = Matrix::Ones(1, D);
    L.ln2_bias = Matrix::Zero(1, D);
    L.w1 = normal_matrix(D, F, inv_d, rng);
    L.b1 = Matrix::Zero(1, F);
    L.w2 = normal_matrix(F, D, inv_f, rng);
    L.b2 = Matrix::Zero(1, D);
  }
  p.final_gain = Matrix::Ones(1, D);
  p.final_bias = Matrix::Zero(1, D);
  p.classifier_weight = normal_matrix(D, config.n_classes, 0.1 * inv_d, rng);
  p.classifier_bias = Matrix::Zero(1, config.n_classes);
  return p;
}

Matrix embed(const EncoderParams& params, const TokenizedExample& example) {
  const auto& cfg = params.config;
  const auto n = static_cast<Eigen::Index>(example.ids.size());
  if (n > cfg.max_seq_len) {
    throw DataError("sequence length " + std::to_string(n) + " exceeds encoder max_seq_len " +
                    std::to_string(cfg.max_seq_len));
  }
  Matrix e(n, cfg.d_model);
  for (Eigen::Index p = 0; p < n; ++p) {
    const TokenId id = example.ids[static_cast<std::size_t>(p)];
    if (id < 0 || id >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(id) + " at position " + std::to_string(p) +
                      " is outside the vocabulary of size " + std::to_string(cfg.vocab_size));
    }
    e.row(p) = params.token_embedding.row(id);
    if (cfg.attention_variant == AttentionVariant::Absolute) e.row(p) += params.position_embedding.row(p);
  }
  return e;
}

ForwardResult forward_from_embeddings(const EncoderParams& params, const Matrix& embeddings,
                                      std::span<const std::uint8_t> attention_mask,
                                      const ForwardOptions& options) {
  const auto& cfg = params.config;
  const int D = cfg.d_model;
  const int H = cfg.heads;
  const int dh = cfg.head_dim();
  const bool disentangled = cfg.attention_variant == AttentionVariant::Disentangled;
  const bool dropout = options.training && cfg.dropout_rate > 0.0;
  if (embeddings.cols() != D || embeddings.rows() != static_cast<Eigen::Index>(attention_mask.size()) ||
      embeddings.rows() > cfg.max_seq_len || embeddings.rows() == 0) {
    throw ConfigError("forward: embeddings shape does not match the encoder configuration");
  }
  if (attention_mask[0] == 0) throw DataError("forward: the CLS position must be unmasked");
  if (dropout && options.rng == nullptr) throw ConfigError("forward: training with dropout needs an rng");

  ForwardResult result;
  ForwardTrace& tr = result.trace;
  tr.config = cfg;
  tr.seq_len = static_cast<int>(embeddings.rows());
  for (std::size_t p = 0; p < attention_mask.size(); ++p) {
    if (attention_mask[p] != 0) tr.active.push_back(static_cast<int>(p));
  }
  const auto L = static_cast<Eigen::Index>(tr.active.size());
  Matrix x(L, D);
  for (Eigen::Index r = 0; r < L; ++r) x.row(r) = embeddings.row(tr.active[static_cast<std::size_t>(r)]);

  const double abs_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  tr.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& P = params.layers[l];
    LayerTrace& t = tr.layers[l];
    // Only the CLS row of the last layer reaches the classifier.
    const Eigen::Index Lq = (l + 1 == params.layers.size()) ? 1 : L;
    const std::span<const int> qpos(tr.active.data(), static_cast<std::size_t>(Lq));

    t.input = std::move(x);
    layer_norm_forward(t.input, P.ln1_gain, P.ln1_bias, t.ln1_hat, t.ln1_rstd, t.ln1_out);
    t.q.noalias() = t.ln1_out.topRows(Lq) * P.wq;
    add_row(t.q, P.bq);
    t.k.noalias() = t.ln1_out * P.wk;
    add_row(t.k, P.bk);
    t.v.noalias() = t.ln1_out * P.wv;
    add_row(t.v, P.bv);
    if (disentangled) {
      t.q_rel.noalias() = params.relative_embedding * P.wq_rel;
      t.k_rel.noalias() = params.relative_embedding * P.wk_rel;
    }
    t.context.resize(Lq, D);
    t.probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      const Matrix qh = t.q.middleCols(h * dh, dh);
      const Matrix kh = t.k.middleCols(h * dh, dh);
      Matrix s;
      if (disentangled) {
        s = disentangled_scores(qh, kh, t.q_rel.middleCols(h * dh, dh), t.k_rel.middleCols(h * dh, dh),
                                qpos, tr.active, cfg.relative_window);
      } else {
        s.noalias() = qh * kh.transpose();
        s *= abs_scale;
      }
      softmax_rows(s);
      t.context.middleCols(h * dh, dh).noalias() = s * t.v.middleCols(h * dh, dh);
      t.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Matrix attn = t.context * P.wo;
    add_row(attn, P.bo);
    if (dropout) {
      t.drop1 = dropout_mask(Lq, D, cfg.dropout_rate, *options.rng);
      attn.array() *= t.drop1.array();
    }
    t.mid = t.input.topRows(Lq) + attn;

    layer_norm_forward(t.mid, P.ln2_gain, P.ln2_bias, t.ln2_hat, t.ln2_rstd, t.ln2_out);
    t.ffn_pre.noalias() = t.ln2_out * P.w1;
    add_row(t.ffn_pre, P.b1);
    t.ffn_act = t.ffn_pre.unaryExpr(&gelu);
    Matrix ffn = t.ffn_act * P.w2;
    add_row(ffn, P.b2);
    if (dropout) {
      t.drop2 = dropout_mask(Lq, D, cfg.dropout_rate, *options.rng);
      ffn.array() *= t.drop2.array();
    }
    t.output = t.mid + ffn;
    require_finite(t.output, "encoder layer " + std::to_string(l));
    x = t.output;
  }

  tr.cls_state = x.topRows(1);
  if (cfg.final_norm) {
    Vector rstd;
    layer_norm_forward(tr.cls_state, params.final_gain, params.final_bias, tr.final_hat, rstd, tr.pooled);
    tr.final_rstd = rstd(0);
  } else {
    tr.pooled = tr.cls_state;
  }
  Matrix logits = tr.pooled * params.classifier_weight + params.classifier_bias;
  require_finite(logits, "classifier head");
  tr.logits = logits.row(0);
  result.logits = tr.logits;
  return result;
}

ForwardResult forward(const EncoderParams& params, const TokenizedExample& example,
                      const ForwardOptions& options) {
  ForwardResult r = forward_from_embeddings(params, embed(params, example), example.attention_mask, options);
  r.trace.ids = example.ids;
  return r;
}

Logits predict_logits(const EncoderParams& params, const TokenizedExample& example) {
  return forward(params, example).logits;
}

Gradients backward(const EncoderParams& params, const ForwardTrace& trace, const Logits& upstream,
                   BackwardMode mode) {
  const auto& cfg = params.config;
  if (!(trace.config == cfg) || trace.layers.size() != params.layers.size() || trace.active.empty()) {
    throw ConfigError("backward: trace was not produced by this model configuration");
  }
  const bool full = mode == BackwardMode::Full;
  const bool disentangled = cfg.attention_variant == AttentionVariant::Disentangled;
  const int D = cfg.d_model;
  const int H = cfg.heads;
  const int dh = cfg.head_dim();
  const double abs_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double dis_scale = 1.0 / std::sqrt(3.0 * static_cast<double>(dh));
  const auto L = static_cast<Eigen::Index>(trace.active.size());

  Gradients g;
  if (full) g.params = params.zeros_like();
  EncoderParams* gp = full ? &g.params : nullptr;

  const Matrix up = upstream;
  Matrix dpooled = up * params.classifier_weight.transpose();
  if (gp) {
    gp->classifier_weight.noalias() += trace.pooled.transpose() * up;
    gp->classifier_bias += up;
  }
  Matrix dcls;
  if (cfg.final_norm) {
    Vector rstd(1);
    rstd(0) = trace.final_rstd;
    dcls = layer_norm_backward(dpooled, trace.final_hat, rstd, params.final_gain,
                               gp ? &gp->final_gain : nullptr, gp ? &gp->final_bias : nullptr);
  } else {
    dcls = dpooled;
  }

  const Eigen::Index top_rows = trace.layers.empty() ? L : trace.layers.back().output.rows();
  Matrix dx = Matrix::Zero(top_rows, D);
  dx.row(0) = dcls.row(0);

  for (std::size_t li = trace.layers.size(); li-- > 0;) {
    const LayerParams& P = params.layers[li];
    const LayerTrace& t = trace.layers[li];
    LayerParams* G = gp ? &gp->layers[li] : nullptr;
    const Eigen::Index Lq = t.q.rows();
    const std::span<const int> qpos(trace.active.data(), static_cast<std::size_t>(Lq));

    // Feed-forward branch.
    Matrix dffn = t.drop2.size() ? Matrix(dx.cwiseProduct(t.drop2)) : dx;
    if (G) {
      G->w2.noalias() += t.ffn_act.transpose() * dffn;
      G->b2 += dffn.colwise().sum();
    }
    Matrix dpre = dffn * P.w2.transpose();
    dpre.array() *= t.ffn_pre.unaryExpr(&gelu_grad).array();
    if (G) {
      G->w1.noalias() += t.ln2_out.transpose() * dpre;
      G->b1 += dpre.colwise().sum();
    }
    const Matrix dln2 = dpre * P.w1.transpose();
    Matrix dmid = dx + layer_norm_backward(dln2, t.ln2_hat, t.ln2_rstd, P.ln2_gain,
                                           G ? &G->ln2_gain : nullptr, G ? &G->ln2_bias : nullptr);

    // Attention branch.
    const Matrix dattn = t.drop1.size() ? Matrix(dmid.cwiseProduct(t.drop1)) : dmid;
    if (G) {
      G->wo.noalias() += t.context.transpose() * dattn;
      G->bo += dattn.colwise().sum();
    }
    const Matrix dctx = dattn * P.wo.transpose();
    Matrix dq(Lq, D), dk = Matrix::Zero(L, D), dv(L, D);
    Matrix dq_rel, dk_rel;
    if (disentangled) {
      dq_rel = Matrix::Zero(t.q_rel.rows(), D);
      dk_rel = Matrix::Zero(t.k_rel.rows(), D);
    }
    for (int h = 0; h < H; ++h) {
      const Matrix& prob = t.probs[static_cast<std::size_t>(h)];
      const auto cols = Eigen::seqN(h * dh, dh);
      const Matrix dctx_h = dctx(Eigen::all, cols);
      const Matrix vh = t.v(Eigen::all, cols);
      const Matrix dprob = dctx_h * vh.transpose();
      dv(Eigen::all, cols).noalias() = prob.transpose() * dctx_h;
      const Vector rowdot = dprob.cwiseProduct(prob).rowwise().sum();
      Matrix ds = prob.cwiseProduct(Matrix(dprob.colwise() - rowdot));
      const Matrix qh = t.q(Eigen::all, cols);
      const Matrix kh = t.k(Eigen::all, cols);
      if (!disentangled) {
        ds *= abs_scale;
        dq(Eigen::all, cols).noalias() = ds * kh;
        dk(Eigen::all, cols).noalias() = ds.transpose() * qh;
        continue;
      }
      ds *= dis_scale;
      const Matrix qr = t.q_rel(Eigen::all, cols);
      const Matrix kr = t.k_rel(Eigen::all, cols);
      Matrix dc2p = Matrix::Zero(Lq, kr.rows());
      Matrix dp2c = Matrix::Zero(L, qr.rows());
      for (Eigen::Index i = 0; i < Lq; ++i) {
        for (Eigen::Index j = 0; j < L; ++j) {
          const double v = ds(i, j);
          dc2p(i, relative_bucket(qpos[i], trace.active[j], cfg.relative_window)) += v;
          dp2c(j, relative_bucket(trace.active[j], qpos[i], cfg.relative_window)) += v;
        }
      }
      dq(Eigen::all, cols).noalias() = ds * kh + dc2p * kr;
      dk(Eigen::all, cols).noalias() = ds.transpose() * qh + dp2c * qr;
      if (G) {
        dk_rel(Eigen::all, cols).noalias() = dc2p.transpose() * qh;
        dq_rel(Eigen::all, cols).noalias() = dp2c.transpose() * kh;
      }
    }
    if (G) {
      G->wq.noalias() += t.ln1_out.topRows(Lq).transpose() * dq;
      G->bq += dq.colwise().sum();
      G->wk.noalias() += t.ln1_out.transpose() * dk;
      G->bk += dk.colwise().sum();
      G->wv.noalias() += t.ln1_out.transpose() * dv;
      G->bv += dv.colwise().sum();
      if (disentangled) {
        G->wq_rel.noalias() += params.relative_embedding.transpose() * dq_rel;
        G->wk_rel.noalias() += params.relative_embedding.transpose() * dk_rel;
        gp->relative_embedding.noalias() += dq_rel * P.wq_rel.transpose();
        gp->relative_embedding.noalias() += dk_rel * P.wk_rel.transpose();
      }
    }
    Matrix dln1 = dk * P.wk.transpose();
    dln1.noalias() += dv * P.wv.transpose();
    dln1.topRows(Lq).noalias() += dq * P.wq.transpose();
    Matrix dinput = layer_norm_backward(dln1, t.ln1_hat, t.ln1_rstd, P.ln1_gain,
                                        G ? &G->ln1_gain : nullptr, G ? &G->ln1_bias : nullptr);
    dinput.topRows(Lq) += dmid;
    dx = std::move(dinput);
  }

  g.input = Matrix::Zero(trace.seq_len, D);
  for (Eigen::Index r = 0; r < L; ++r) g.input.row(trace.active[static_cast<std::size_t>(r)]) = dx.row(r);

  if (gp && !trace.ids.empty()) {
    for (const int p : trace.active) {
      gp->token_embedding.row(trace.ids[static_cast<std::size_t>(p)]) += g.input.row(p);
      if (cfg.attention_variant == AttentionVariant::Absolute) gp->position_embedding.row(p) += g.input.row(p);
    }
  }
  return g;
}

}  // namespace xids
