#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlit/rng.hpp"
#include "xlit/types.hpp"

namespace xlit {

struct EncoderConfig {
  int num_layers = 4;
  int hidden_dim = 128;
  int num_heads = 4;
  int ffn_dim = 512;
  int max_seq_len = 128;
  int vocab_size = 0;
  int pooling_layer = 3;  // 1..num_layers; sentence vectors mean-pool this layer
  double dropout_rate = 0.1;
  bool tie_mlm_head = true;

  void validate() const;
  int head_dim() const { return hidden_dim / num_heads; }
};

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kInitStd = 0.02;

/// All weights of one transformer layer. Projections act on row vectors:
/// y = x * W + b, with W shaped [in, out] and biases stored 1 x out.
template <class S>
struct LayerParams {
  Matrix<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<S> ln1_gamma, ln1_beta;
  Matrix<S> w1, b1;  // hidden -> ffn
  Matrix<S> w2, b2;  // ffn -> hidden
  Matrix<S> ln2_gamma, ln2_beta;
};

template <class S>
struct EncoderParameters {
  Matrix<S> token_embeddings;     // V x d
  Matrix<S> position_embeddings;  // max_seq_len x d
  std::vector<LayerParams<S>> layers;
  Matrix<S> mlm_transform;  // d x d
  Matrix<S> mlm_bias;       // 1 x d
  Matrix<S> mlm_ln_gamma, mlm_ln_beta;
  Matrix<S> mlm_output;       // V x d; unused (0x0) when the head is tied
  Matrix<S> mlm_output_bias;  // 1 x V
};

/// Visits every parameter tensor in a fixed order shared by initialization,
/// checkpoints, the optimizer, and gradient containers.
template <class S, class F>
void for_each_tensor(EncoderParameters<S>& params, F&& f) {
  f("token_embeddings", params.token_embeddings);
  f("position_embeddings", params.position_embeddings);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    f(prefix + "wq", layer.wq);
    f(prefix + "bq", layer.bq);
    f(prefix + "wk", layer.wk);
    f(prefix + "bk", layer.bk);
    f(prefix + "wv", layer.wv);
    f(prefix + "bv", layer.bv);
    f(prefix + "wo", layer.wo);
    f(prefix + "bo", layer.bo);
    f(prefix + "ln1_gamma", layer.ln1_gamma);
    f(prefix + "ln1_beta", layer.ln1_beta);
    f(prefix + "w1", layer.w1);
    f(prefix + "b1", layer.b1);
    f(prefix + "w2", layer.w2);
    f(prefix + "b2", layer.b2);
    f(prefix + "ln2_gamma", layer.ln2_gamma);
    f(prefix + "ln2_beta", layer.ln2_beta);
  }
  f("mlm_transform", params.mlm_transform);
  f("mlm_bias", params.mlm_bias);
  f("mlm_ln_gamma", params.mlm_ln_gamma);
  f("mlm_ln_beta", params.mlm_ln_beta);
  f("mlm_output", params.mlm_output);
  f("mlm_output_bias", params.mlm_output_bias);
}

template <class S, class F>
void for_each_tensor(const EncoderParameters<S>& params, F&& f) {
  for_each_tensor(const_cast<EncoderParameters<S>&>(params),
                  [&](const std::string& name, Matrix<S>& m) { f(name, static_cast<const Matrix<S>&>(m)); });
}

/// Truncated-normal(0.02) weights, zero biases, unit layer-norm scales.
/// Deterministic in the seed.
template <class S>
EncoderParameters<S> init_params(const EncoderConfig& config, std::uint64_t seed);

template <class S>
EncoderParameters<S> zeros_like(const EncoderParameters<S>& params);

template <class S>
void accumulate(EncoderParameters<S>& into, const EncoderParameters<S>& grads);

/// Token batch in the padded public layout.
struct TokenBatch {
  IndexMatrix token_ids;       // B x T
  IndexMatrix attention_mask;  // B x T of {0,1}
};

enum class LogitsMode { kNone, kLabeled, kFull };

/// Forward activations kept for the backward pass. Rows of the internal
/// matrices are the attended (mask=1) positions of the batch, flattened
/// row-major; padding positions are dropped entirely.
template <class S>
struct ForwardCache {
  int batch_size = 0;
  int padded_len = 0;
  std::vector<int> row_begin;  // batch_size+1 offsets into flattened rows
  std::vector<int> orig_pos;   // original column of each flattened row
  std::vector<int> tokens;     // token id of each flattened row

  std::vector<Matrix<S>> hidden;  // num_layers+1 of [M x d]; hidden[0] = embeddings
  Matrix<S> embed_drop;           // dropout scale masks; empty in eval mode
  struct LayerCache {
    Matrix<S> q, k, v;                // M x d
    std::vector<Matrix<S>> attn;      // batch*heads of [T_b x T_b] softmax outputs
    Matrix<S> ctx;                    // M x d, heads concatenated
    Matrix<S> attn_drop;              // M x d
    Matrix<S> res1;                   // M x d, pre-LN1
    Vector<S> ln1_rstd;               // M
    Matrix<S> ln1_xhat;               // M x d
    Matrix<S> h1;                     // M x d, post-LN1
    Matrix<S> ffn_pre;                // M x f
    Matrix<S> ffn_act;                // M x f
    Matrix<S> ffn_drop;               // M x d
    Matrix<S> res2;                   // M x d, pre-LN2
    Vector<S> ln2_rstd;               // M
    Matrix<S> ln2_xhat;               // M x d
  };
  std::vector<LayerCache> layer;

  LogitsMode logits_mode = LogitsMode::kNone;
  std::vector<int> logit_rows;  // flattened row index of each logits row
  Matrix<S> head_in;            // K x d gathered final hidden
  Matrix<S> head_pre;           // K x d, pre-LN
  Vector<S> head_rstd;          // K
  Matrix<S> head_xhat;          // K x d
  Matrix<S> head_out;           // K x d, post-LN
  Matrix<S> logits;             // K x V

  int rows() const { return static_cast<int>(orig_pos.size()); }
  /// Mean of hidden[pooling_layer] over each row's attended positions.
  Matrix<S> pooled(const EncoderConfig& config) const;
};

/// Runs the encoder over the attended positions of `batch`. In kLabeled mode
/// logits are produced only at positions where labels(b,t) >= 0. Dropout is
/// active only in train mode and consumes `rng` in a fixed order.
template <class S>
ForwardCache<S> forward_cache(const EncoderParameters<S>& params, const EncoderConfig& config,
                              const TokenBatch& batch, LogitsMode logits_mode,
                              const IndexMatrix* labels, bool train_mode, Rng* rng);

/// Padded public view of a forward pass: per-layer hidden states, pooled
/// sentence vectors, and logits. Entries at padding positions are zero.
template <class S>
struct EncodedBatch {
  IndexMatrix token_ids;
  IndexMatrix attention_mask;
  std::vector<Matrix<S>> hidden_states;  // num_layers+1 of [B*T x d], row b*T+t
  Matrix<S> pooled;                      // B x d
  Matrix<S> mlm_logits;                  // B*T x V (kFull), else 0x0
};

template <class S>
EncodedBatch<S> forward(const EncoderParameters<S>& params, const EncoderConfig& config,
                        const TokenBatch& batch, bool train_mode = false, Rng* rng = nullptr,
                        LogitsMode logits_mode = LogitsMode::kFull);

/// Exact reverse-mode gradients of a scalar loss with upstream gradients
/// `dlogits` (matching the cache's logits rows; may be empty) and `dpooled`
/// (B x d against the pooled vectors; may be empty). Gradients accumulate
/// into `grads`, which must be zeros_like-shaped.
template <class S>
void backward(const EncoderParameters<S>& params, const EncoderConfig& config,
              const ForwardCache<S>& cache, const Matrix<S>& dlogits, const Matrix<S>& dpooled,
              EncoderParameters<S>& grads);

}  // namespace xlit
