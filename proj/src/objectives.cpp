#include "xlit/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "xlit/errors.hpp"

namespace xlit {

TokenBatch make_token_batch(const std::vector<std::vector<int>>& rows) {
  if (rows.empty()) throw ValidationError("make_token_batch: no rows");
  Eigen::Index max_len = 0;
  for (const auto& row : rows) {
    if (row.empty()) throw ValidationError("make_token_batch: empty row");
    max_len = std::max(max_len, static_cast<Eigen::Index>(row.size()));
  }
  TokenBatch batch;
  batch.token_ids = IndexMatrix::Constant(static_cast<Eigen::Index>(rows.size()), max_len, kPadId);
  batch.attention_mask = IndexMatrix::Zero(static_cast<Eigen::Index>(rows.size()), max_len);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (std::size_t t = 0; t < rows[b].size(); ++t) {
      batch.token_ids(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) = rows[b][t];
      batch.attention_mask(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) = 1;
    }
  }
  return batch;
}

std::vector<int> wrap_sentence(const std::vector<int>& ids, int max_seq_len) {
  const std::size_t budget = static_cast<std::size_t>(std::max(max_seq_len - 2, 1));
  std::vector<int> out;
  out.reserve(std::min(ids.size(), budget) + 2);
  out.push_back(kClsId);
  out.insert(out.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), budget)));
  out.push_back(kSepId);
  return out;
}

std::vector<int> build_tlm_input(const std::vector<int>& original_ids,
                                 const std::vector<int>& transliteration_ids, int max_seq_len) {
  if (original_ids.empty() || transliteration_ids.empty()) {
    throw ValidationError("build_tlm_input: both segments must be non-empty");
  }
  std::size_t keep_a = original_ids.size();
  std::size_t keep_b = transliteration_ids.size();
  const std::size_t budget = static_cast<std::size_t>(std::max(max_seq_len - 3, 2));
  if (keep_a + keep_b > budget) {
    const double total = static_cast<double>(keep_a + keep_b);
    keep_a = static_cast<std::size_t>(
        std::lround(static_cast<double>(budget) * static_cast<double>(keep_a) / total));
    keep_a = std::clamp<std::size_t>(keep_a, 1, budget - 1);
    keep_b = budget - keep_a;
  }
  std::vector<int> out;
  out.reserve(keep_a + keep_b + 3);
  out.push_back(kClsId);
  out.insert(out.end(), original_ids.begin(), original_ids.begin() + static_cast<std::ptrdiff_t>(keep_a));
  out.push_back(kSepId);
  out.insert(out.end(), transliteration_ids.begin(),
             transliteration_ids.begin() + static_cast<std::ptrdiff_t>(keep_b));
  out.push_back(kSepId);
  return out;
}

namespace {

bool maskable_id(int id) { return id != kPadId && id != kClsId && id != kSepId; }

}  // namespace

MaskedBatch apply_mlm_masking(const TokenBatch& batch, double mask_rate, Rng& rng,
                              const MaskingOptions& options) {
  if (mask_rate <= 0.0 || mask_rate >= 1.0) {
    throw ValidationError("apply_mlm_masking: mask_rate must be in (0,1)");
  }
  const Eigen::Index rows = batch.token_ids.rows();
  const Eigen::Index cols = batch.token_ids.cols();
  MaskedBatch out;
  out.batch.token_ids = batch.token_ids;
  out.batch.attention_mask = batch.attention_mask;
  out.labels = IndexMatrix::Constant(rows, cols, -1);
  out.mask_rate = mask_rate;
  for (Eigen::Index b = 0; b < rows; ++b) {
    std::vector<Eigen::Index> maskable;
    std::vector<Eigen::Index> selected;
    for (Eigen::Index t = 0; t < cols; ++t) {
      if (batch.attention_mask(b, t) != 1) continue;
      if (!maskable_id(batch.token_ids(b, t))) continue;
      maskable.push_back(t);
      if (rng.bernoulli(mask_rate)) selected.push_back(t);
    }
    if (maskable.empty()) {
      throw ValidationError("apply_mlm_masking: sequence " + std::to_string(b) +
                            " has no maskable position");
    }
    if (selected.empty()) {
      selected.push_back(maskable[rng.index_below(maskable.size())]);
    }
    for (const Eigen::Index t : selected) {
      out.labels(b, t) = batch.token_ids(b, t);
      if (!options.bert_style) {
        out.batch.token_ids(b, t) = kMaskId;
      } else {
        if (options.vocab_size <= kNumSpecialTokens) {
          throw ValidationError("apply_mlm_masking: bert_style needs a vocab_size");
        }
        const double roll = rng.next_double();
        if (roll < 0.8) {
          out.batch.token_ids(b, t) = kMaskId;
        } else if (roll < 0.9) {
          out.batch.token_ids(b, t) =
              kNumSpecialTokens +
              static_cast<int>(rng.index_below(
                  static_cast<std::uint64_t>(options.vocab_size - kNumSpecialTokens)));
        }
        // else keep the original token
      }
    }
  }
  return out;
}

template <class S>
double softmax_xent(const Matrix<S>& logits, const std::vector<int>& gold, Matrix<S>& dlogits) {
  if (logits.rows() == 0) throw ValidationError("softmax_xent: no labeled positions");
  if (static_cast<std::size_t>(logits.rows()) != gold.size()) {
    throw ValidationError("softmax_xent: gold size does not match logits rows");
  }
  const S inv_n = static_cast<S>(1.0 / static_cast<double>(logits.rows()));
  dlogits.resize(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int g = gold[static_cast<std::size_t>(i)];
    if (g < 0 || g >= logits.cols()) {
      throw ValidationError("softmax_xent: gold id out of range");
    }
    const S row_max = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - row_max).eval();
    const S log_z = std::log(shifted.exp().sum());
    loss -= static_cast<double>(shifted(gold[static_cast<std::size_t>(i)]) - log_z);
    dlogits.row(i) = ((shifted - log_z).exp() * inv_n).matrix();
    dlogits(i, gold[static_cast<std::size_t>(i)]) -= inv_n;
  }
  return loss / static_cast<double>(logits.rows());
}

template <class S>
LossResult<S> mlm_loss(const EncoderParameters<S>& params, const EncoderConfig& config,
                       const MaskedBatch& masked, bool train_mode, Rng* rng) {
  Eigen::Index labeled = 0;
  for (Eigen::Index b = 0; b < masked.labels.rows(); ++b) {
    for (Eigen::Index t = 0; t < masked.labels.cols(); ++t) {
      if (masked.labels(b, t) >= 0) ++labeled;
    }
  }
  if (labeled == 0) throw ValidationError("mlm_loss: batch has no labeled positions");

  const ForwardCache<S> cache = forward_cache(params, config, masked.batch, LogitsMode::kLabeled,
                                              &masked.labels, train_mode, rng);
  std::vector<int> gold;
  gold.reserve(static_cast<std::size_t>(labeled));
  for (Eigen::Index b = 0; b < masked.labels.rows(); ++b) {
    for (Eigen::Index t = 0; t < masked.labels.cols(); ++t) {
      if (masked.labels(b, t) >= 0) gold.push_back(masked.labels(b, t));
    }
  }
  Matrix<S> dlogits;
  LossResult<S> result;
  result.loss = softmax_xent(cache.logits, gold, dlogits);
  result.grads = zeros_like(params);
  backward(params, config, cache, dlogits, Matrix<S>(), result.grads);
  return result;
}

template <class S>
TcmResult<S> tcm_loss(const ContrastiveBatch<S>& batch, bool symmetric) {
  const Eigen::Index b_size = batch.pooled_original.rows();
  if (b_size < 2) throw ValidationError("tcm_loss: batch size must be at least 2 (no negatives)");
  if (batch.pooled_transliteration.rows() != b_size ||
      batch.pooled_original.cols() != batch.pooled_transliteration.cols()) {
    throw ValidationError("tcm_loss: pooled matrices must have matching shapes");
  }
  if (!(batch.temperature > 0.0)) throw ValidationError("tcm_loss: temperature must be positive");

  Matrix<S> u_hat = batch.pooled_original;
  Matrix<S> w_hat = batch.pooled_transliteration;
  Vector<S> u_norm(b_size);
  Vector<S> w_norm(b_size);
  for (Eigen::Index i = 0; i < b_size; ++i) {
    u_norm(i) = u_hat.row(i).norm();
    w_norm(i) = w_hat.row(i).norm();
    if (!(u_norm(i) > S(0)) || !(w_norm(i) > S(0))) {
      throw ValidationError("tcm_loss: zero-norm pooled vector at row " + std::to_string(i));
    }
    u_hat.row(i) /= u_norm(i);
    w_hat.row(i) /= w_norm(i);
  }

  Matrix<S> scores;
  scores.noalias() = u_hat * w_hat.transpose();
  scores /= static_cast<S>(batch.temperature);

  // Row-direction: original i against all transliterations.
  Matrix<S> d_scores = Matrix<S>::Zero(b_size, b_size);
  double loss = 0.0;
  const S inv_b = static_cast<S>(1.0 / static_cast<double>(b_size));
  const double direction_weight = symmetric ? 0.5 : 1.0;
  {
    for (Eigen::Index i = 0; i < b_size; ++i) {
      const S row_max = scores.row(i).maxCoeff();
      const auto shifted = (scores.row(i).array() - row_max).eval();
      const S log_z = std::log(shifted.exp().sum());
      loss -= direction_weight * static_cast<double>(shifted(i) - log_z) / static_cast<double>(b_size);
      d_scores.row(i) +=
          ((shifted - log_z).exp() * inv_b * static_cast<S>(direction_weight)).matrix();
      d_scores(i, i) -= inv_b * static_cast<S>(direction_weight);
    }
  }
  if (symmetric) {
    for (Eigen::Index j = 0; j < b_size; ++j) {
      const S col_max = scores.col(j).maxCoeff();
      const auto shifted = (scores.col(j).array() - col_max).eval();
      const S log_z = std::log(shifted.exp().sum());
      loss -= 0.5 * static_cast<double>(shifted(j) - log_z) / static_cast<double>(b_size);
      d_scores.col(j) += ((shifted - log_z).exp() * inv_b * S(0.5)).matrix();
      d_scores(j, j) -= inv_b * S(0.5);
    }
  }
  d_scores /= static_cast<S>(batch.temperature);

  TcmResult<S> result;
  result.loss = loss;
  Matrix<S> du_hat;
  du_hat.noalias() = d_scores * w_hat;
  Matrix<S> dw_hat;
  dw_hat.noalias() = d_scores.transpose() * u_hat;
  result.d_original.resize(b_size, u_hat.cols());
  result.d_transliteration.resize(b_size, u_hat.cols());
  for (Eigen::Index i = 0; i < b_size; ++i) {
    const S u_dot = du_hat.row(i).dot(u_hat.row(i));
    result.d_original.row(i) = (du_hat.row(i) - u_dot * u_hat.row(i)) / u_norm(i);
    const S w_dot = dw_hat.row(i).dot(w_hat.row(i));
    result.d_transliteration.row(i) = (dw_hat.row(i) - w_dot * w_hat.row(i)) / w_norm(i);
  }
  return result;
}

template <class S>
LossResult<S> tlm_loss(const EncoderParameters<S>& params, const EncoderConfig& config,
                       const TokenBatch& tlm_batch, double mask_rate, Rng& rng, bool train_mode,
                       const MaskingOptions& options) {
  const MaskedBatch masked = apply_mlm_masking(tlm_batch, mask_rate, rng, options);
  return mlm_loss(params, config, masked, train_mode, train_mode ? &rng : nullptr);
}

double variant_loss(int variant, std::optional<double> mlm, std::optional<double> tcm,
                    std::optional<double> tlm) {
  if (variant < 1 || variant > 5) {
    throw ValidationError("variant_loss: variant must be in 1..5");
  }
  if (!mlm.has_value()) throw ValidationError("variant_loss: MLM component required");
  double total = *mlm;
  if (variant_uses_tcm(variant)) {
    if (!tcm.has_value()) {
      throw ValidationError("variant_loss: TCM component required for variant " +
                            std::to_string(variant));
    }
    total += *tcm;
  }
  if (variant_uses_tlm(variant)) {
    if (!tlm.has_value()) {
      throw ValidationError("variant_loss: TLM component required for variant " +
                            std::to_string(variant));
    }
    total += *tlm;
  }
  return total;
}

bool variant_uses_tcm(int variant) { return variant == 3 || variant == 5; }
bool variant_uses_tlm(int variant) { return variant == 4 || variant == 5; }
bool variant_uses_transliterations(int variant) { return variant != 1; }

template double softmax_xent<float>(const Matrix<float>&, const std::vector<int>&, Matrix<float>&);
template double softmax_xent<double>(const Matrix<double>&, const std::vector<int>&,
                                     Matrix<double>&);
template LossResult<float> mlm_loss<float>(const EncoderParameters<float>&, const EncoderConfig&,
                                           const MaskedBatch&, bool, Rng*);
template LossResult<double> mlm_loss<double>(const EncoderParameters<double>&,
                                             const EncoderConfig&, const MaskedBatch&, bool, Rng*);
template TcmResult<float> tcm_loss<float>(const ContrastiveBatch<float>&, bool);
template TcmResult<double> tcm_loss<double>(const ContrastiveBatch<double>&, bool);
template LossResult<float> tlm_loss<float>(const EncoderParameters<float>&, const EncoderConfig&,
                                           const TokenBatch&, double, Rng&, bool,
                                           const MaskingOptions&);
template LossResult<double> tlm_loss<double>(const EncoderParameters<double>&,
                                             const EncoderConfig&, const TokenBatch&, double, Rng&,
                                             bool, const MaskingOptions&);

}  // namespace xlit
