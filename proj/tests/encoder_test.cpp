#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "xlit/encoder.hpp"
#include "xlit/errors.hpp"
#include "xlit/objectives.hpp"
#include "xlit/rng.hpp"

using namespace xlit;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig config;
  config.num_layers = 2;
  config.hidden_dim = 16;
  config.num_heads = 2;
  config.ffn_dim = 32;
  config.max_seq_len = 16;
  config.vocab_size = 50;
  config.pooling_layer = 1;
  config.dropout_rate = 0.0;
  return config;
}

TokenBatch random_batch(const EncoderConfig& config, int batch, int len, Rng& rng,
                        bool ragged = true) {
  std::vector<std::vector<int>> rows;
  for (int b = 0; b < batch; ++b) {
    const int n = ragged ? 2 + static_cast<int>(rng.index_below(static_cast<std::uint64_t>(len - 1)))
                         : len;
    std::vector<int> row;
    row.push_back(kClsId);
    for (int t = 1; t + 1 < n; ++t) {
      row.push_back(kNumSpecialTokens +
                    static_cast<int>(rng.index_below(
                        static_cast<std::uint64_t>(config.vocab_size - kNumSpecialTokens))));
    }
    row.push_back(kSepId);
    rows.push_back(std::move(row));
  }
  return make_token_batch(rows);
}

/// Scalar loss used by the finite-difference checks: a fixed random linear
/// functional of the logits plus one of the pooled vectors.
template <class S>
double probe_loss(const EncoderParameters<S>& params, const EncoderConfig& config,
                  const TokenBatch& batch, const IndexMatrix* labels, const Matrix<S>& logit_w,
                  const Matrix<S>& pooled_w) {
  const ForwardCache<S> cache = forward_cache(
      params, config, batch, logit_w.size() != 0 ? LogitsMode::kLabeled : LogitsMode::kNone,
      labels, false, nullptr);
  double loss = 0.0;
  if (logit_w.size() != 0) {
    loss += static_cast<double>(cache.logits.cwiseProduct(logit_w).sum());
  }
  if (pooled_w.size() != 0) {
    loss += static_cast<double>(cache.pooled(config).cwiseProduct(pooled_w).sum());
  }
  return loss;
}

}  // namespace

TEST_CASE("init is deterministic and respects the stated scheme") {
  const EncoderConfig config = tiny_config();
  const auto a = init_params<double>(config, 42);
  const auto b = init_params<double>(config, 42);
  const auto c = init_params<double>(config, 43);
  bool all_equal = true;
  bool any_diff_seed = false;
  for_each_tensor(a, [&](const std::string& name, const MatrixD& t) {
    (void)name;
    (void)t;
  });
  std::vector<const MatrixD*> ta, tb, tc;
  for_each_tensor(a, [&](const std::string&, const MatrixD& t) { ta.push_back(&t); });
  for_each_tensor(b, [&](const std::string&, const MatrixD& t) { tb.push_back(&t); });
  for_each_tensor(c, [&](const std::string&, const MatrixD& t) { tc.push_back(&t); });
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i]->size() != 0 && *ta[i] != *tb[i]) all_equal = false;
    if (ta[i]->size() != 0 && *ta[i] != *tc[i]) any_diff_seed = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);

  CHECK(a.token_embeddings.rows() == 50);
  CHECK(a.token_embeddings.cols() == 16);
  CHECK(a.layers[0].ln1_gamma.isOnes());
  CHECK(a.layers[0].ln1_beta.isZero());
  CHECK(a.layers[0].bq.isZero());
  // Truncated normal with std 0.02 stays within 2 sigma.
  CHECK(a.token_embeddings.cwiseAbs().maxCoeff() <= 0.04 + 1e-12);
}

TEST_CASE("forward is deterministic without dropout") {
  const EncoderConfig config = tiny_config();
  const auto params = init_params<double>(config, 1);
  Rng rng(5);
  const TokenBatch batch = random_batch(config, 3, 8, rng);
  const auto one = forward(params, config, batch);
  const auto two = forward(params, config, batch);
  CHECK(one.pooled == two.pooled);
  CHECK(one.mlm_logits == two.mlm_logits);
}

TEST_CASE("padding never changes pooled outputs or non-pad logits") {
  const EncoderConfig config = tiny_config();
  const auto params = init_params<double>(config, 2);
  std::vector<std::vector<int>> rows = {{kClsId, 7, 8, 9, kSepId}};
  const TokenBatch batch = make_token_batch(rows);
  TokenBatch padded = batch;
  padded.token_ids.conservativeResize(1, 10);
  padded.attention_mask.conservativeResize(1, 10);
  for (int t = 5; t < 10; ++t) {
    padded.token_ids(0, t) = kPadId;
    padded.attention_mask(0, t) = 0;
  }
  const auto a = forward(params, config, batch);
  const auto b = forward(params, config, padded);
  CHECK((a.pooled - b.pooled).cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < 5; ++t) {
    CHECK((a.mlm_logits.row(t) - b.mlm_logits.row(t)).cwiseAbs().maxCoeff() == 0.0);
  }
  // Padding rows of the padded view are zero.
  for (int t = 5; t < 10; ++t) {
    CHECK(b.hidden_states.back().row(t).isZero());
  }
}

TEST_CASE("one-layer toy forward matches straight-line arithmetic") {
  // L=1, d=4, one head, two positions, weights set by hand; the oracle below
  // recomputes the whole forward pass with scalar loops.
  EncoderConfig config;
  config.num_layers = 1;
  config.hidden_dim = 4;
  config.num_heads = 1;
  config.ffn_dim = 4;
  config.max_seq_len = 4;
  config.vocab_size = 6;
  config.pooling_layer = 1;
  config.dropout_rate = 0.0;
  auto params = init_params<double>(config, 0);
  // Distinct, small, hand-picked values.
  auto fill = [](MatrixD& m, double base, double step) {
    double v = base;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = v;
        v += step;
      }
    }
  };
  fill(params.token_embeddings, 0.01, 0.003);
  fill(params.position_embeddings, -0.02, 0.002);
  auto& L0 = params.layers[0];
  fill(L0.wq, 0.05, 0.01);
  fill(L0.wk, -0.04, 0.01);
  fill(L0.wv, 0.03, -0.005);
  fill(L0.wo, 0.02, 0.004);
  fill(L0.w1, 0.01, 0.006);
  fill(L0.w2, -0.03, 0.007);
  fill(L0.b1, 0.001, 0.001);
  fill(L0.b2, -0.002, 0.001);
  fill(params.mlm_transform, 0.015, 0.002);
  fill(params.mlm_output_bias, 0.001, 0.0005);

  std::vector<std::vector<int>> rows = {{2, 5}};
  const TokenBatch batch = make_token_batch(rows);
  const auto out = forward(params, config, batch);

  // Oracle: scalar re-computation.
  const int d = 4;
  double x[2][4];
  for (int t = 0; t < 2; ++t) {
    for (int j = 0; j < d; ++j) {
      x[t][j] = params.token_embeddings(rows[0][static_cast<std::size_t>(t)], j) +
                params.position_embeddings(t, j);
    }
  }
  auto matvec = [&](const MatrixD& w, const MatrixD& bias, const double in[2][4], double out_[2][4]) {
    for (int t = 0; t < 2; ++t) {
      for (int j = 0; j < d; ++j) {
        double acc = bias.size() ? bias(0, j) : 0.0;
        for (int k = 0; k < d; ++k) acc += in[t][k] * w(k, j);
        out_[t][j] = acc;
      }
    }
  };
  double q[2][4], k[2][4], v[2][4];
  matvec(L0.wq, L0.bq, x, q);
  matvec(L0.wk, L0.bk, x, k);
  matvec(L0.wv, L0.bv, x, v);
  double ctx[2][4];
  for (int t = 0; t < 2; ++t) {
    double scores[2];
    for (int u = 0; u < 2; ++u) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += q[t][j] * k[u][j];
      scores[u] = acc / 2.0;  // sqrt(head_dim)=2
    }
    const double mx = std::max(scores[0], scores[1]);
    double e0 = std::exp(scores[0] - mx), e1 = std::exp(scores[1] - mx);
    const double z = e0 + e1;
    for (int j = 0; j < d; ++j) ctx[t][j] = (e0 * v[0][j] + e1 * v[1][j]) / z;
  }
  double attn[2][4];
  matvec(L0.wo, L0.bo, ctx, attn);
  double res1[2][4];
  for (int t = 0; t < 2; ++t) {
    for (int j = 0; j < d; ++j) res1[t][j] = x[t][j] + attn[t][j];
  }
  auto layer_norm = [&](const double in[2][4], const MatrixD& gamma, const MatrixD& beta,
                        double out_[2][4]) {
    for (int t = 0; t < 2; ++t) {
      double mu = 0.0;
      for (int j = 0; j < d; ++j) mu += in[t][j];
      mu /= d;
      double var = 0.0;
      for (int j = 0; j < d; ++j) var += (in[t][j] - mu) * (in[t][j] - mu);
      var /= d;
      const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
      for (int j = 0; j < d; ++j) {
        out_[t][j] = (in[t][j] - mu) * rstd * gamma(0, j) + beta(0, j);
      }
    }
  };
  double h1[2][4];
  layer_norm(res1, L0.ln1_gamma, L0.ln1_beta, h1);
  double u[2][4], g[2][4], o[2][4];
  matvec(L0.w1, L0.b1, h1, u);
  for (int t = 0; t < 2; ++t) {
    for (int j = 0; j < d; ++j) {
      g[t][j] = 0.5 * u[t][j] * std::erfc(-u[t][j] / std::sqrt(2.0));
    }
  }
  matvec(L0.w2, L0.b2, g, o);
  double res2[2][4], h2[2][4];
  for (int t = 0; t < 2; ++t) {
    for (int j = 0; j < d; ++j) res2[t][j] = h1[t][j] + o[t][j];
  }
  layer_norm(res2, L0.ln2_gamma, L0.ln2_beta, h2);

  for (int t = 0; t < 2; ++t) {
    for (int j = 0; j < d; ++j) {
      CHECK(out.hidden_states[1](t, j) == doctest::Approx(h2[t][j]).epsilon(1e-12));
    }
  }
  // MLM head: transform + LN + tied projection.
  double hp[2][4], hl[2][4];
  matvec(params.mlm_transform, params.mlm_bias, h2, hp);
  layer_norm(hp, params.mlm_ln_gamma, params.mlm_ln_beta, hl);
  for (int t = 0; t < 2; ++t) {
    for (int tok = 0; tok < 6; ++tok) {
      double acc = params.mlm_output_bias(0, tok);
      for (int j = 0; j < d; ++j) acc += hl[t][j] * params.token_embeddings(tok, j);
      CHECK(out.mlm_logits(t, tok) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
  // Pooled = mean over both positions of layer-1 hidden states.
  for (int j = 0; j < d; ++j) {
    CHECK(out.pooled(0, j) == doctest::Approx((h2[0][j] + h2[1][j]) / 2.0).epsilon(1e-12));
  }
}

TEST_CASE("permuting the batch permutes outputs identically") {
  const EncoderConfig config = tiny_config();
  const auto params = init_params<double>(config, 3);
  Rng rng(17);
  const TokenBatch batch = random_batch(config, 4, 8, rng, false);
  TokenBatch permuted;
  const int perm[4] = {2, 0, 3, 1};
  permuted.token_ids.resize(4, batch.token_ids.cols());
  permuted.attention_mask.resize(4, batch.attention_mask.cols());
  for (int b = 0; b < 4; ++b) {
    permuted.token_ids.row(b) = batch.token_ids.row(perm[b]);
    permuted.attention_mask.row(b) = batch.attention_mask.row(perm[b]);
  }
  const auto a = forward(params, config, batch);
  const auto b = forward(params, config, permuted);
  for (int i = 0; i < 4; ++i) {
    CHECK((a.pooled.row(perm[i]) - b.pooled.row(i)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("outputs stay finite") {
  const EncoderConfig config = tiny_config();
  const auto params = init_params<double>(config, 9);
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const TokenBatch batch = random_batch(config, 3, 12, rng);
    const auto out = forward(params, config, batch);
    CHECK(out.pooled.allFinite());
    CHECK(out.mlm_logits.allFinite());
  }
}

TEST_CASE("forward input validation") {
  const EncoderConfig config = tiny_config();
  const auto params = init_params<double>(config, 9);
  std::vector<std::vector<int>> rows = {{kClsId, 100, kSepId}};  // id out of range
  CHECK_THROWS_AS(forward(params, config, make_token_batch(rows)), ValidationError);
  TokenBatch bad = make_token_batch({{kClsId, 6, kSepId}});
  bad.attention_mask(0, 1) = 2;
  CHECK_THROWS_AS(forward(params, config, bad), ValidationError);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  const EncoderConfig config = tiny_config();
  const auto params = init_params<double>(config, 4);
  Rng rng(23);
  const TokenBatch batch = random_batch(config, 2, 6, rng);
  const ForwardCache<double> cache =
      forward_cache(params, config, batch, LogitsMode::kFull, nullptr, false, nullptr);
  auto grads = zeros_like(params);
  const MatrixD dlogits = MatrixD::Zero(cache.logits.rows(), cache.logits.cols());
  const MatrixD dpooled = MatrixD::Zero(cache.batch_size, config.hidden_dim);
  backward(params, config, cache, dlogits, dpooled, grads);
  for_each_tensor(grads, [&](const std::string&, const MatrixD& g) {
    if (g.size() != 0) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  });
}

TEST_CASE("analytic gradients match central finite differences") {
  // T=8, V=50, L=2, d=16, h=2, f=32 in double precision; an arbitrary linear
  // functional of labeled logits and pooled vectors stands in for the loss.
  const EncoderConfig config = tiny_config();
  auto params = init_params<double>(config, 11);
  Rng rng(71);
  const TokenBatch batch = random_batch(config, 2, 8, rng);
  IndexMatrix labels = IndexMatrix::Constant(batch.token_ids.rows(), batch.token_ids.cols(), -1);
  int labeled = 0;
  for (Eigen::Index b = 0; b < batch.token_ids.rows(); ++b) {
    for (Eigen::Index t = 0; t < batch.token_ids.cols(); ++t) {
      if (batch.attention_mask(b, t) == 1 && batch.token_ids(b, t) >= kNumSpecialTokens &&
          rng.bernoulli(0.4)) {
        labels(b, t) = batch.token_ids(b, t);
        ++labeled;
      }
    }
  }
  REQUIRE(labeled > 0);

  MatrixD logit_w(labeled, config.vocab_size);
  for (Eigen::Index i = 0; i < logit_w.rows(); ++i) {
    for (Eigen::Index j = 0; j < logit_w.cols(); ++j) logit_w(i, j) = rng.normal() * 0.1;
  }
  MatrixD pooled_w(batch.token_ids.rows(), config.hidden_dim);
  for (Eigen::Index i = 0; i < pooled_w.rows(); ++i) {
    for (Eigen::Index j = 0; j < pooled_w.cols(); ++j) pooled_w(i, j) = rng.normal() * 0.1;
  }

  const ForwardCache<double> cache =
      forward_cache(params, config, batch, LogitsMode::kLabeled, &labels, false, nullptr);
  auto grads = zeros_like(params);
  backward(params, config, cache, logit_w, pooled_w, grads);

  const double eps = 1e-4;
  std::vector<std::pair<std::string, MatrixD*>> tensors;
  for_each_tensor(params, [&](const std::string& name, MatrixD& t) {
    if (t.size() != 0) tensors.emplace_back(name, &t);
  });
  std::vector<const MatrixD*> grad_list;
  for_each_tensor(grads, [&](const std::string&, const MatrixD& g) { grad_list.push_back(&g); });

  Rng pick(5);
  std::size_t tensor_index = 0;
  for_each_tensor(params, [&](const std::string& name, MatrixD& tensor) {
    const MatrixD& grad = *grad_list[tensor_index++];
    if (tensor.size() == 0) return;
    const int samples = std::min<int>(20, static_cast<int>(tensor.size()));
    for (int s = 0; s < samples; ++s) {
      const Eigen::Index idx = static_cast<Eigen::Index>(pick.index_below(static_cast<std::size_t>(tensor.size())));
      const double saved = tensor.data()[idx];
      tensor.data()[idx] = saved + eps;
      const double up = probe_loss(params, config, batch, &labels, logit_w, pooled_w);
      tensor.data()[idx] = saved - eps;
      const double down = probe_loss(params, config, batch, &labels, logit_w, pooled_w);
      tensor.data()[idx] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grad.data()[idx];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      INFO("tensor ", name, " flat index ", idx);
      CHECK(std::abs(numeric - analytic) / scale < 1e-4);
    }
  });
}

TEST_CASE("tied and untied output heads give different embedding gradients") {
  EncoderConfig tied_config = tiny_config();
  EncoderConfig untied_config = tiny_config();
  untied_config.tie_mlm_head = false;

  auto tied_params = init_params<double>(tied_config, 21);
  auto untied_params = init_params<double>(untied_config, 21);
  // Same encoder weights; the untied head gets a copy of the embeddings so
  // both models compute identical logits.
  untied_params.mlm_output = tied_params.token_embeddings;

  Rng rng(3);
  const TokenBatch batch = random_batch(tied_config, 2, 6, rng);
  IndexMatrix labels = IndexMatrix::Constant(batch.token_ids.rows(), batch.token_ids.cols(), -1);
  labels(0, 1) = batch.token_ids(0, 1);

  const ForwardCache<double> tied_cache =
      forward_cache(tied_params, tied_config, batch, LogitsMode::kLabeled, &labels, false, nullptr);
  const ForwardCache<double> untied_cache = forward_cache(untied_params, untied_config, batch,
                                                          LogitsMode::kLabeled, &labels, false,
                                                          nullptr);
  CHECK((tied_cache.logits - untied_cache.logits).cwiseAbs().maxCoeff() < 1e-12);

  MatrixD dlogits = MatrixD::Constant(1, tied_config.vocab_size, 0.01);
  auto tied_grads = zeros_like(tied_params);
  auto untied_grads = zeros_like(untied_params);
  backward(tied_params, tied_config, tied_cache, dlogits, MatrixD(), tied_grads);
  backward(untied_params, untied_config, untied_cache, dlogits, MatrixD(), untied_grads);

  // The tied gradient accumulates the head contribution on top of the
  // embedding-lookup contribution; untied splits them.
  const MatrixD tied_total = tied_grads.token_embeddings;
  const MatrixD untied_sum = untied_grads.token_embeddings + untied_grads.mlm_output;
  CHECK((tied_total - untied_sum).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((tied_total - untied_grads.token_embeddings).cwiseAbs().maxCoeff() > 1e-9);
}
