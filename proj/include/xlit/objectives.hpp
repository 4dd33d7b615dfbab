#pragma once

#include <optional>
#include <vector>

#include "xlit/encoder.hpp"
#include "xlit/tokenizer.hpp"

namespace xlit {

/// Pads variable-length id rows with PAD and builds the 0/1 attention mask.
TokenBatch make_token_batch(const std::vector<std::vector<int>>& rows);

/// CLS + ids + SEP, truncating ids to fit max_seq_len.
std::vector<int> wrap_sentence(const std::vector<int>& ids, int max_seq_len);

/// CLS + original + SEP + transliteration + SEP. When the concatenation
/// exceeds max_seq_len both sides are truncated proportionally to their
/// lengths. Both sides must be non-empty.
std::vector<int> build_tlm_input(const std::vector<int>& original_ids,
                                 const std::vector<int>& transliteration_ids, int max_seq_len);

struct MaskedBatch {
  TokenBatch batch;    // input ids after MASK substitution
  IndexMatrix labels;  // original id at masked positions, -1 elsewhere
  double mask_rate = 0.0;
};

struct MaskingOptions {
  /// Replace every selected position with MASK. When bert_style is set,
  /// selected positions get MASK 80% of the time, a random piece 10%, and the
  /// original token 10% (ablation switch; off by default). Random replacement
  /// draws from [kNumSpecialTokens, vocab_size).
  bool bert_style = false;
  int vocab_size = 0;
};

/// Independently selects each maskable position (attended, not PAD/CLS/SEP)
/// with probability mask_rate; forces one masked position per sequence when
/// sampling selects none. Throws when a sequence has no maskable position.
MaskedBatch apply_mlm_masking(const TokenBatch& batch, double mask_rate, Rng& rng,
                              const MaskingOptions& options = {});

/// Mean cross-entropy over rows of `logits` against `gold` ids; writes the
/// upstream gradient into `dlogits`. Numerically stable log-softmax.
template <class S>
double softmax_xent(const Matrix<S>& logits, const std::vector<int>& gold, Matrix<S>& dlogits);

template <class S>
struct LossResult {
  double loss = 0.0;
  EncoderParameters<S> grads;
};

/// Masked-language-model loss: mean cross-entropy over labeled positions
/// only, with exact gradients for every parameter.
template <class S>
LossResult<S> mlm_loss(const EncoderParameters<S>& params, const EncoderConfig& config,
                       const MaskedBatch& masked, bool train_mode = false, Rng* rng = nullptr);

template <class S>
struct ContrastiveBatch {
  Matrix<S> pooled_original;         // B x d, row i pairs with row i of the other side
  Matrix<S> pooled_transliteration;  // B x d
  double temperature = 0.1;
};

template <class S>
struct TcmResult {
  double loss = 0.0;
  Matrix<S> d_original;
  Matrix<S> d_transliteration;
};

/// In-batch contrastive loss over cosine similarities divided by the
/// temperature, against the diagonal pairing. Symmetric by default: the mean
/// of the original->transliteration and transliteration->original directions.
template <class S>
TcmResult<S> tcm_loss(const ContrastiveBatch<S>& batch, bool symmetric = true);

/// MLM over concatenated (original, transliteration) rows: masking covers
/// both segments, attention spans the whole concatenation.
template <class S>
LossResult<S> tlm_loss(const EncoderParameters<S>& params, const EncoderConfig& config,
                       const TokenBatch& tlm_batch, double mask_rate, Rng& rng,
                       bool train_mode = false, const MaskingOptions& options = {});

/// Unweighted loss sum for the five model variants: 1 and 2 use MLM alone,
/// 3 adds TCM, 4 adds TLM, 5 adds both. Missing required components are
/// rejected; extra components are ignored.
double variant_loss(int variant, std::optional<double> mlm, std::optional<double> tcm,
                    std::optional<double> tlm);

bool variant_uses_tcm(int variant);
bool variant_uses_tlm(int variant);
bool variant_uses_transliterations(int variant);  // false only for variant 1

}  // namespace xlit
