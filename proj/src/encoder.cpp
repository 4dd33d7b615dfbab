#include "xlit/encoder.hpp"

#include <cmath>

#include "xlit/errors.hpp"

namespace xlit {

void EncoderConfig::validate() const {
  if (num_layers <= 0 || hidden_dim <= 0 || num_heads <= 0 || ffn_dim <= 0 || vocab_size <= 0) {
    throw ValidationError("encoder config: all dimensions must be positive");
  }
  if (hidden_dim % num_heads != 0) {
    throw ValidationError("encoder config: hidden_dim must be divisible by num_heads");
  }
  if (max_seq_len < 2) throw ValidationError("encoder config: max_seq_len must be at least 2");
  if (pooling_layer < 1 || pooling_layer > num_layers) {
    throw ValidationError("encoder config: pooling_layer must be in [1, num_layers]");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ValidationError("encoder config: dropout_rate must be in [0,1)");
  }
}

namespace {

template <class S>
void fill_truncated_normal(Matrix<S>& m, Rng& rng, double std_dev) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = static_cast<S>(rng.truncated_normal() * std_dev);
    }
  }
}

template <class S>
S gelu(S x) {
  return static_cast<S>(0.5) * x * static_cast<S>(std::erfc(-static_cast<double>(x) / std::sqrt(2.0)));
}

template <class S>
S gelu_grad(S x) {
  const double xd = static_cast<double>(x);
  const double cdf = 0.5 * std::erfc(-xd / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * 3.14159265358979323846);
  return static_cast<S>(cdf + xd * pdf);
}

/// y = LN(x) rowwise; fills xhat and rstd caches.
template <class S>
void layer_norm_forward(const Matrix<S>& x, const Matrix<S>& gamma, const Matrix<S>& beta,
                        Matrix<S>& xhat, Vector<S>& rstd, Matrix<S>& y) {
  const Eigen::Index d = x.cols();
  xhat.resize(x.rows(), d);
  rstd.resize(x.rows());
  y.resize(x.rows(), d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S mu = x.row(i).mean();
    const auto centered = (x.row(i).array() - mu).eval();
    const S var = centered.square().sum() / static_cast<S>(d);
    const S r = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + kLayerNormEps));
    rstd(i) = r;
    xhat.row(i) = (centered * r).matrix();
    y.row(i) = (xhat.row(i).array() * gamma.row(0).array() + beta.row(0).array()).matrix();
  }
}

template <class S>
void layer_norm_backward(const Matrix<S>& dy, const Matrix<S>& xhat, const Vector<S>& rstd,
                         const Matrix<S>& gamma, Matrix<S>& dx, Matrix<S>& dgamma,
                         Matrix<S>& dbeta) {
  const Eigen::Index d = xhat.cols();
  dx.resize(xhat.rows(), d);
  for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
    const auto dxhat = (dy.row(i).array() * gamma.row(0).array()).eval();
    const S m1 = dxhat.sum() / static_cast<S>(d);
    const S m2 = (dxhat * xhat.row(i).array()).sum() / static_cast<S>(d);
    dx.row(i) = (rstd(i) * (dxhat - m1 - xhat.row(i).array() * m2)).matrix();
    dgamma.row(0).array() += dy.row(i).array() * xhat.row(i).array();
    dbeta.row(0).array() += dy.row(i).array();
  }
}

template <class S>
Matrix<S> make_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix<S> mask(rows, cols);
  const double keep = 1.0 - rate;
  const S scale = static_cast<S>(1.0 / keep);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      mask(i, j) = rng.bernoulli(keep) ? scale : S(0);
    }
  }
  return mask;
}

}  // namespace

template <class S>
EncoderParameters<S> init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  EncoderParameters<S> p;
  const int d = config.hidden_dim;
  const int f = config.ffn_dim;
  p.token_embeddings.resize(config.vocab_size, d);
  p.position_embeddings.resize(config.max_seq_len, d);
  p.layers.resize(static_cast<std::size_t>(config.num_layers));
  for (auto& layer : p.layers) {
    layer.wq.resize(d, d);
    layer.bq = Matrix<S>::Zero(1, d);
    layer.wk.resize(d, d);
    layer.bk = Matrix<S>::Zero(1, d);
    layer.wv.resize(d, d);
    layer.bv = Matrix<S>::Zero(1, d);
    layer.wo.resize(d, d);
    layer.bo = Matrix<S>::Zero(1, d);
    layer.ln1_gamma = Matrix<S>::Ones(1, d);
    layer.ln1_beta = Matrix<S>::Zero(1, d);
    layer.w1.resize(d, f);
    layer.b1 = Matrix<S>::Zero(1, f);
    layer.w2.resize(f, d);
    layer.b2 = Matrix<S>::Zero(1, d);
    layer.ln2_gamma = Matrix<S>::Ones(1, d);
    layer.ln2_beta = Matrix<S>::Zero(1, d);
  }
  p.mlm_transform.resize(d, d);
  p.mlm_bias = Matrix<S>::Zero(1, d);
  p.mlm_ln_gamma = Matrix<S>::Ones(1, d);
  p.mlm_ln_beta = Matrix<S>::Zero(1, d);
  if (config.tie_mlm_head) {
    p.mlm_output.resize(0, 0);
  } else {
    p.mlm_output.resize(config.vocab_size, d);
  }
  p.mlm_output_bias = Matrix<S>::Zero(1, config.vocab_size);

  Rng rng(seed);
  for_each_tensor(p, [&](const std::string& name, Matrix<S>& m) {
    if (m.size() == 0) return;
    const bool is_weight = name.find("gamma") == std::string::npos &&
                           name.find("beta") == std::string::npos &&
                           name.find("bias") == std::string::npos && name.find(".b") == std::string::npos;
    if (is_weight) fill_truncated_normal(m, rng, kInitStd);
  });
  return p;
}

template <class S>
EncoderParameters<S> zeros_like(const EncoderParameters<S>& params) {
  EncoderParameters<S> z;
  z.layers.resize(params.layers.size());
  z.token_embeddings = Matrix<S>::Zero(params.token_embeddings.rows(), params.token_embeddings.cols());
  z.position_embeddings =
      Matrix<S>::Zero(params.position_embeddings.rows(), params.position_embeddings.cols());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& src = params.layers[l];
    auto& dst = z.layers[l];
    auto zero = [](const Matrix<S>& m) { return Matrix<S>::Zero(m.rows(), m.cols()).eval(); };
    dst.wq = zero(src.wq);
    dst.bq = zero(src.bq);
    dst.wk = zero(src.wk);
    dst.bk = zero(src.bk);
    dst.wv = zero(src.wv);
    dst.bv = zero(src.bv);
    dst.wo = zero(src.wo);
    dst.bo = zero(src.bo);
    dst.ln1_gamma = zero(src.ln1_gamma);
    dst.ln1_beta = zero(src.ln1_beta);
    dst.w1 = zero(src.w1);
    dst.b1 = zero(src.b1);
    dst.w2 = zero(src.w2);
    dst.b2 = zero(src.b2);
    dst.ln2_gamma = zero(src.ln2_gamma);
    dst.ln2_beta = zero(src.ln2_beta);
  }
  z.mlm_transform = Matrix<S>::Zero(params.mlm_transform.rows(), params.mlm_transform.cols());
  z.mlm_bias = Matrix<S>::Zero(params.mlm_bias.rows(), params.mlm_bias.cols());
  z.mlm_ln_gamma = Matrix<S>::Zero(params.mlm_ln_gamma.rows(), params.mlm_ln_gamma.cols());
  z.mlm_ln_beta = Matrix<S>::Zero(params.mlm_ln_beta.rows(), params.mlm_ln_beta.cols());
  z.mlm_output = Matrix<S>::Zero(params.mlm_output.rows(), params.mlm_output.cols());
  z.mlm_output_bias = Matrix<S>::Zero(params.mlm_output_bias.rows(), params.mlm_output_bias.cols());
  return z;
}

template <class S>
void accumulate(EncoderParameters<S>& into, const EncoderParameters<S>& grads) {
  std::vector<Matrix<S>*> dst;
  for_each_tensor(into, [&](const std::string&, Matrix<S>& m) { dst.push_back(&m); });
  std::size_t i = 0;
  for_each_tensor(grads, [&](const std::string&, const Matrix<S>& m) {
    if (m.size() != 0) *dst[i] += m;
    ++i;
  });
}

template <class S>
Matrix<S> ForwardCache<S>::pooled(const EncoderConfig& config) const {
  const Matrix<S>& h = hidden[static_cast<std::size_t>(config.pooling_layer)];
  Matrix<S> out(batch_size, h.cols());
  for (int b = 0; b < batch_size; ++b) {
    const int begin = row_begin[static_cast<std::size_t>(b)];
    const int count = row_begin[static_cast<std::size_t>(b) + 1] - begin;
    out.row(b) = h.middleRows(begin, count).colwise().mean();
  }
  return out;
}

template <class S>
ForwardCache<S> forward_cache(const EncoderParameters<S>& params, const EncoderConfig& config,
                              const TokenBatch& batch, LogitsMode logits_mode,
                              const IndexMatrix* labels, bool train_mode, Rng* rng) {
  config.validate();
  const int batch_size = static_cast<int>(batch.token_ids.rows());
  const int padded_len = static_cast<int>(batch.token_ids.cols());
  if (batch.attention_mask.rows() != batch_size || batch.attention_mask.cols() != padded_len) {
    throw ValidationError("forward: attention_mask shape must match token_ids");
  }
  if (padded_len > config.max_seq_len) {
    throw ValidationError("forward: sequence length " + std::to_string(padded_len) +
                          " exceeds max_seq_len " + std::to_string(config.max_seq_len));
  }
  if (batch_size == 0) throw ValidationError("forward: empty batch");
  const bool dropout_on = train_mode && config.dropout_rate > 0.0;
  if (dropout_on && rng == nullptr) {
    throw ValidationError("forward: train mode with dropout requires an rng");
  }

  ForwardCache<S> cache;
  cache.batch_size = batch_size;
  cache.padded_len = padded_len;
  cache.logits_mode = logits_mode;
  cache.row_begin.assign(static_cast<std::size_t>(batch_size) + 1, 0);
  for (int b = 0; b < batch_size; ++b) {
    int kept = 0;
    for (int t = 0; t < padded_len; ++t) {
      const int m = batch.attention_mask(b, t);
      if (m != 0 && m != 1) throw ValidationError("forward: attention_mask entries must be 0 or 1");
      const int id = batch.token_ids(b, t);
      if (id < 0 || id >= config.vocab_size) {
        throw ValidationError("forward: token id " + std::to_string(id) + " out of range");
      }
      if (m == 1) {
        cache.orig_pos.push_back(t);
        cache.tokens.push_back(id);
        ++kept;
        if (logits_mode == LogitsMode::kLabeled && labels != nullptr && (*labels)(b, t) >= 0) {
          cache.logit_rows.push_back(static_cast<int>(cache.orig_pos.size()) - 1);
        }
      } else if (labels != nullptr && logits_mode == LogitsMode::kLabeled && (*labels)(b, t) >= 0) {
        throw ValidationError("forward: labeled position is masked out by attention_mask");
      }
    }
    if (kept == 0) throw ValidationError("forward: batch row with no attended positions");
    cache.row_begin[static_cast<std::size_t>(b) + 1] =
        cache.row_begin[static_cast<std::size_t>(b)] + kept;
  }
  const int total = cache.rows();
  const int d = config.hidden_dim;
  const int heads = config.num_heads;
  const int hd = config.head_dim();
  const S inv_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

  cache.hidden.resize(static_cast<std::size_t>(config.num_layers) + 1);
  Matrix<S>& x0 = cache.hidden[0];
  x0.resize(total, d);
  for (int m = 0; m < total; ++m) {
    x0.row(m) = params.token_embeddings.row(cache.tokens[static_cast<std::size_t>(m)]) +
                params.position_embeddings.row(cache.orig_pos[static_cast<std::size_t>(m)]);
  }
  if (dropout_on) {
    cache.embed_drop = make_dropout_mask<S>(total, d, config.dropout_rate, *rng);
    x0 = x0.cwiseProduct(cache.embed_drop);
  }

  cache.layer.resize(static_cast<std::size_t>(config.num_layers));
  for (int l = 0; l < config.num_layers; ++l) {
    auto& lc = cache.layer[static_cast<std::size_t>(l)];
    const auto& lp = params.layers[static_cast<std::size_t>(l)];
    const Matrix<S>& x = cache.hidden[static_cast<std::size_t>(l)];

    lc.q.noalias() = x * lp.wq;
    lc.q.rowwise() += lp.bq.row(0);
    lc.k.noalias() = x * lp.wk;
    lc.k.rowwise() += lp.bk.row(0);
    lc.v.noalias() = x * lp.wv;
    lc.v.rowwise() += lp.bv.row(0);

    lc.ctx.resize(total, d);
    lc.attn.resize(static_cast<std::size_t>(batch_size) * static_cast<std::size_t>(heads));
    for (int b = 0; b < batch_size; ++b) {
      const int begin = cache.row_begin[static_cast<std::size_t>(b)];
      const int len = cache.row_begin[static_cast<std::size_t>(b) + 1] - begin;
      for (int h = 0; h < heads; ++h) {
        auto qb = lc.q.block(begin, h * hd, len, hd);
        auto kb = lc.k.block(begin, h * hd, len, hd);
        auto vb = lc.v.block(begin, h * hd, len, hd);
        Matrix<S>& probs = lc.attn[static_cast<std::size_t>(b) * static_cast<std::size_t>(heads) +
                                   static_cast<std::size_t>(h)];
        probs.noalias() = qb * kb.transpose();
        probs *= inv_scale;
        for (int r = 0; r < len; ++r) {
          const S row_max = probs.row(r).maxCoeff();
          probs.row(r) = (probs.row(r).array() - row_max).exp();
          probs.row(r) /= probs.row(r).sum();
        }
        lc.ctx.block(begin, h * hd, len, hd).noalias() = probs * vb;
      }
    }

    Matrix<S> attn_out;
    attn_out.noalias() = lc.ctx * lp.wo;
    attn_out.rowwise() += lp.bo.row(0);
    if (dropout_on) {
      lc.attn_drop = make_dropout_mask<S>(total, d, config.dropout_rate, *rng);
      attn_out = attn_out.cwiseProduct(lc.attn_drop);
    }
    lc.res1 = x + attn_out;
    layer_norm_forward(lc.res1, lp.ln1_gamma, lp.ln1_beta, lc.ln1_xhat, lc.ln1_rstd, lc.h1);

    lc.ffn_pre.noalias() = lc.h1 * lp.w1;
    lc.ffn_pre.rowwise() += lp.b1.row(0);
    lc.ffn_act = lc.ffn_pre.unaryExpr([](S u) { return gelu(u); });
    Matrix<S> ffn_out;
    ffn_out.noalias() = lc.ffn_act * lp.w2;
    ffn_out.rowwise() += lp.b2.row(0);
    if (dropout_on) {
      lc.ffn_drop = make_dropout_mask<S>(total, d, config.dropout_rate, *rng);
      ffn_out = ffn_out.cwiseProduct(lc.ffn_drop);
    }
    lc.res2 = lc.h1 + ffn_out;
    layer_norm_forward(lc.res2, lp.ln2_gamma, lp.ln2_beta, lc.ln2_xhat, lc.ln2_rstd,
                       cache.hidden[static_cast<std::size_t>(l) + 1]);
  }

  if (logits_mode != LogitsMode::kNone) {
    if (logits_mode == LogitsMode::kFull) {
      cache.logit_rows.resize(static_cast<std::size_t>(total));
      for (int m = 0; m < total; ++m) cache.logit_rows[static_cast<std::size_t>(m)] = m;
    }
    const auto k_rows = static_cast<Eigen::Index>(cache.logit_rows.size());
    const Matrix<S>& final_hidden = cache.hidden.back();
    cache.head_in.resize(k_rows, d);
    for (Eigen::Index i = 0; i < k_rows; ++i) {
      cache.head_in.row(i) = final_hidden.row(cache.logit_rows[static_cast<std::size_t>(i)]);
    }
    cache.head_pre.noalias() = cache.head_in * params.mlm_transform;
    cache.head_pre.rowwise() += params.mlm_bias.row(0);
    layer_norm_forward(cache.head_pre, params.mlm_ln_gamma, params.mlm_ln_beta, cache.head_xhat,
                       cache.head_rstd, cache.head_out);
    const Matrix<S>& output_weights =
        config.tie_mlm_head ? params.token_embeddings : params.mlm_output;
    cache.logits.noalias() = cache.head_out * output_weights.transpose();
    cache.logits.rowwise() += params.mlm_output_bias.row(0);
  }
  return cache;
}

template <class S>
EncodedBatch<S> forward(const EncoderParameters<S>& params, const EncoderConfig& config,
                        const TokenBatch& batch, bool train_mode, Rng* rng,
                        LogitsMode logits_mode) {
  const ForwardCache<S> cache =
      forward_cache(params, config, batch, logits_mode, nullptr, train_mode, rng);
  EncodedBatch<S> out;
  out.token_ids = batch.token_ids;
  out.attention_mask = batch.attention_mask;
  const int batch_size = cache.batch_size;
  const int padded_len = cache.padded_len;
  const int d = config.hidden_dim;
  out.hidden_states.resize(cache.hidden.size());
  for (std::size_t layer_i = 0; layer_i < cache.hidden.size(); ++layer_i) {
    Matrix<S>& padded = out.hidden_states[layer_i];
    padded = Matrix<S>::Zero(static_cast<Eigen::Index>(batch_size) * padded_len, d);
    for (int b = 0; b < batch_size; ++b) {
      const int begin = cache.row_begin[static_cast<std::size_t>(b)];
      const int end = cache.row_begin[static_cast<std::size_t>(b) + 1];
      for (int k = begin; k < end; ++k) {
        padded.row(static_cast<Eigen::Index>(b) * padded_len + cache.orig_pos[static_cast<std::size_t>(k)]) =
            cache.hidden[layer_i].row(k);
      }
    }
  }
  out.pooled = cache.pooled(config);
  if (logits_mode == LogitsMode::kFull) {
    out.mlm_logits = Matrix<S>::Zero(static_cast<Eigen::Index>(batch_size) * padded_len,
                                     config.vocab_size);
    for (std::size_t i = 0; i < cache.logit_rows.size(); ++i) {
      const int flat = cache.logit_rows[i];
      int b = 0;
      while (cache.row_begin[static_cast<std::size_t>(b) + 1] <= flat) ++b;
      out.mlm_logits.row(static_cast<Eigen::Index>(b) * padded_len +
                         cache.orig_pos[static_cast<std::size_t>(flat)]) = cache.logits.row(static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

template <class S>
void backward(const EncoderParameters<S>& params, const EncoderConfig& config,
              const ForwardCache<S>& cache, const Matrix<S>& dlogits, const Matrix<S>& dpooled,
              EncoderParameters<S>& grads) {
  const int total = cache.rows();
  const int d = config.hidden_dim;
  const int heads = config.num_heads;
  const int hd = config.head_dim();
  const S inv_scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

  Matrix<S> dh = Matrix<S>::Zero(total, d);

  if (dlogits.size() != 0) {
    if (dlogits.rows() != static_cast<Eigen::Index>(cache.logit_rows.size()) ||
        dlogits.cols() != config.vocab_size) {
      throw ValidationError("backward: dlogits shape does not match the cached logits");
    }
    const Matrix<S>& output_weights =
        config.tie_mlm_head ? params.token_embeddings : params.mlm_output;
    Matrix<S>& output_grad = config.tie_mlm_head ? grads.token_embeddings : grads.mlm_output;

    Matrix<S> dhead_out;
    dhead_out.noalias() = dlogits * output_weights;
    output_grad.noalias() += dlogits.transpose() * cache.head_out;
    grads.mlm_output_bias.row(0) += dlogits.colwise().sum();

    Matrix<S> dhead_pre;
    layer_norm_backward(dhead_out, cache.head_xhat, cache.head_rstd, params.mlm_ln_gamma,
                        dhead_pre, grads.mlm_ln_gamma, grads.mlm_ln_beta);
    grads.mlm_transform.noalias() += cache.head_in.transpose() * dhead_pre;
    grads.mlm_bias.row(0) += dhead_pre.colwise().sum();
    Matrix<S> dhead_in;
    dhead_in.noalias() = dhead_pre * params.mlm_transform.transpose();
    for (std::size_t i = 0; i < cache.logit_rows.size(); ++i) {
      dh.row(cache.logit_rows[i]) += dhead_in.row(static_cast<Eigen::Index>(i));
    }
  }

  auto inject_pooled = [&](Matrix<S>& target) {
    if (dpooled.size() == 0) return;
    if (dpooled.rows() != cache.batch_size || dpooled.cols() != d) {
      throw ValidationError("backward: dpooled must be batch_size x hidden_dim");
    }
    for (int b = 0; b < cache.batch_size; ++b) {
      const int begin = cache.row_begin[static_cast<std::size_t>(b)];
      const int len = cache.row_begin[static_cast<std::size_t>(b) + 1] - begin;
      const S w = static_cast<S>(1.0 / static_cast<double>(len));
      target.middleRows(begin, len).rowwise() += (dpooled.row(b) * w).eval();
    }
  };
  if (config.pooling_layer == config.num_layers) inject_pooled(dh);

  for (int l = config.num_layers - 1; l >= 0; --l) {
    const auto& lc = cache.layer[static_cast<std::size_t>(l)];
    const auto& lp = params.layers[static_cast<std::size_t>(l)];
    auto& lg = grads.layers[static_cast<std::size_t>(l)];
    const Matrix<S>& x = cache.hidden[static_cast<std::size_t>(l)];

    // LN2
    Matrix<S> dres2;
    layer_norm_backward(dh, lc.ln2_xhat, lc.ln2_rstd, lp.ln2_gamma, dres2, lg.ln2_gamma,
                        lg.ln2_beta);
    Matrix<S> dh1 = dres2;
    Matrix<S> dffn_out = std::move(dres2);
    if (lc.ffn_drop.size() != 0) dffn_out = dffn_out.cwiseProduct(lc.ffn_drop);

    // FFN
    Matrix<S> dact;
    dact.noalias() = dffn_out * lp.w2.transpose();
    lg.w2.noalias() += lc.ffn_act.transpose() * dffn_out;
    lg.b2.row(0) += dffn_out.colwise().sum();
    Matrix<S> dpre = dact.binaryExpr(lc.ffn_pre, [](S g, S u) { return g * gelu_grad(u); });
    dh1.noalias() += dpre * lp.w1.transpose();
    lg.w1.noalias() += lc.h1.transpose() * dpre;
    lg.b1.row(0) += dpre.colwise().sum();

    // LN1
    Matrix<S> dres1;
    layer_norm_backward(dh1, lc.ln1_xhat, lc.ln1_rstd, lp.ln1_gamma, dres1, lg.ln1_gamma,
                        lg.ln1_beta);
    Matrix<S> dx = dres1;
    Matrix<S> dattn_out = std::move(dres1);
    if (lc.attn_drop.size() != 0) dattn_out = dattn_out.cwiseProduct(lc.attn_drop);

    // output projection
    Matrix<S> dctx;
    dctx.noalias() = dattn_out * lp.wo.transpose();
    lg.wo.noalias() += lc.ctx.transpose() * dattn_out;
    lg.bo.row(0) += dattn_out.colwise().sum();

    // attention
    Matrix<S> dq = Matrix<S>::Zero(total, d);
    Matrix<S> dk = Matrix<S>::Zero(total, d);
    Matrix<S> dv = Matrix<S>::Zero(total, d);
    for (int b = 0; b < cache.batch_size; ++b) {
      const int begin = cache.row_begin[static_cast<std::size_t>(b)];
      const int len = cache.row_begin[static_cast<std::size_t>(b) + 1] - begin;
      for (int h = 0; h < heads; ++h) {
        const Matrix<S>& probs =
            lc.attn[static_cast<std::size_t>(b) * static_cast<std::size_t>(heads) +
                    static_cast<std::size_t>(h)];
        auto qb = lc.q.block(begin, h * hd, len, hd);
        auto kb = lc.k.block(begin, h * hd, len, hd);
        auto vb = lc.v.block(begin, h * hd, len, hd);
        auto dctx_b = dctx.block(begin, h * hd, len, hd);

        Matrix<S> dprobs;
        dprobs.noalias() = dctx_b * vb.transpose();
        dv.block(begin, h * hd, len, hd).noalias() += probs.transpose() * dctx_b;

        Matrix<S> dscores(len, len);
        for (int r = 0; r < len; ++r) {
          const S dot = dprobs.row(r).cwiseProduct(probs.row(r)).sum();
          dscores.row(r) = (probs.row(r).array() * (dprobs.row(r).array() - dot)).matrix();
        }
        dscores *= inv_scale;
        dq.block(begin, h * hd, len, hd).noalias() += dscores * kb;
        dk.block(begin, h * hd, len, hd).noalias() += dscores.transpose() * qb;
      }
    }
    dx.noalias() += dq * lp.wq.transpose();
    dx.noalias() += dk * lp.wk.transpose();
    dx.noalias() += dv * lp.wv.transpose();
    lg.wq.noalias() += x.transpose() * dq;
    lg.bq.row(0) += dq.colwise().sum();
    lg.wk.noalias() += x.transpose() * dk;
    lg.bk.row(0) += dk.colwise().sum();
    lg.wv.noalias() += x.transpose() * dv;
    lg.bv.row(0) += dv.colwise().sum();

    dh = std::move(dx);
    if (l == config.pooling_layer) inject_pooled(dh);
  }

  if (cache.embed_drop.size() != 0) dh = dh.cwiseProduct(cache.embed_drop);
  for (int m = 0; m < total; ++m) {
    grads.token_embeddings.row(cache.tokens[static_cast<std::size_t>(m)]) += dh.row(m);
    grads.position_embeddings.row(cache.orig_pos[static_cast<std::size_t>(m)]) += dh.row(m);
  }
}

template EncoderParameters<float> init_params<float>(const EncoderConfig&, std::uint64_t);
template EncoderParameters<double> init_params<double>(const EncoderConfig&, std::uint64_t);
template EncoderParameters<float> zeros_like<float>(const EncoderParameters<float>&);
template EncoderParameters<double> zeros_like<double>(const EncoderParameters<double>&);
template void accumulate<float>(EncoderParameters<float>&, const EncoderParameters<float>&);
template void accumulate<double>(EncoderParameters<double>&, const EncoderParameters<double>&);
template struct ForwardCache<float>;
template struct ForwardCache<double>;
template ForwardCache<float> forward_cache<float>(const EncoderParameters<float>&,
                                                  const EncoderConfig&, const TokenBatch&,
                                                  LogitsMode, const IndexMatrix*, bool, Rng*);
template ForwardCache<double> forward_cache<double>(const EncoderParameters<double>&,
                                                    const EncoderConfig&, const TokenBatch&,
                                                    LogitsMode, const IndexMatrix*, bool, Rng*);
template EncodedBatch<float> forward<float>(const EncoderParameters<float>&, const EncoderConfig&,
                                            const TokenBatch&, bool, Rng*, LogitsMode);
template EncodedBatch<double> forward<double>(const EncoderParameters<double>&,
                                              const EncoderConfig&, const TokenBatch&, bool, Rng*,
                                              LogitsMode);
template void backward<float>(const EncoderParameters<float>&, const EncoderConfig&,
                              const ForwardCache<float>&, const Matrix<float>&,
                              const Matrix<float>&, EncoderParameters<float>&);
template void backward<double>(const EncoderParameters<double>&, const EncoderConfig&,
                               const ForwardCache<double>&, const Matrix<double>&,
                               const Matrix<double>&, EncoderParameters<double>&);

}  // namespace xlit
