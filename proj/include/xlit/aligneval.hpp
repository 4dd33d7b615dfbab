#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xlit/corpus.hpp"
#include "xlit/encoder.hpp"
#include "xlit/tokenizer.hpp"
#include "xlit/types.hpp"

namespace xlit {

/// The four similarity types, in report order.
enum SimilarityType : int {
  kTransliterationSim = 0,        // sim(s, r_s)
  kTranslationSim = 1,            // sim(s, t)
  kTranslitTranslationSim = 2,    // sim(r_s, t)
  kTranslitTranslitSim = 3,       // sim(r_s, r_t)
  kNumSimilarityTypes = 4,
};

extern const char* const kSimilarityNames[kNumSimilarityTypes];

/// Segments, wraps with CLS/SEP, and encodes sentences in eval mode, mean
/// pooling at the configured layer. Rows are returned in double precision for
/// the similarity math.
MatrixD encode_sentences(const EncoderParameters<float>& params, const EncoderConfig& config,
                         const UnigramVocabulary& vocab, const std::vector<std::string>& sentences,
                         int batch_rows = 64);

struct EncodedSet {
  MatrixD vectors;  // N x d
  std::string source;
  std::int64_t checkpoint_step = -1;
  std::vector<std::size_t> excluded;  // zero-norm rows, flagged and skipped downstream
};

EncodedSet encode_set(const EncoderParameters<float>& params, const EncoderConfig& config,
                      const UnigramVocabulary& vocab, const std::vector<std::string>& sentences,
                      std::string source, std::int64_t checkpoint_step = -1);

/// dot(u,v) / (|u||v|); rejects zero vectors.
double cosine(const VectorD& u, const VectorD& v);

/// Seeded permutation with no fixed points (n >= 2).
std::vector<std::size_t> seeded_derangement(std::size_t n, std::uint64_t seed);

inline constexpr double kHistogramBinWidth = 0.05;
inline constexpr int kHistogramBins = 40;  // [-1, 1]

struct SimilarityReport {
  std::string direction;
  std::int64_t checkpoint_step = -1;
  std::array<std::vector<double>, kNumSimilarityTypes> matched;  // per-pair values
  std::array<std::vector<double>, kNumSimilarityTypes> random_pairs;
  std::array<double, kNumSimilarityTypes> matched_mean{};
  std::array<double, kNumSimilarityTypes> random_mean{};
  std::array<double, kNumSimilarityTypes> gap{};  // matched - random
  std::array<std::array<std::int64_t, kHistogramBins>, kNumSimilarityTypes> hist_matched{};
  std::array<std::array<std::int64_t, kHistogramBins>, kNumSimilarityTypes> hist_random{};
};

struct SimilarityOptions {
  std::uint64_t seed = 1;
  /// Average over every non-matched pair instead of one seeded derangement.
  bool exhaustive_random = false;
};

/// Per-index similarities of the four types plus deranged random baselines.
/// The four sets must be index-aligned with equal N >= 2.
SimilarityReport four_similarities(const EncodedSet& enc_s, const EncodedSet& enc_t,
                                   const EncodedSet& enc_rs, const EncodedSet& enc_rt,
                                   const SimilarityOptions& options = {});

struct RetrievalReport {
  std::string direction;
  std::map<int, double> accuracy;  // k -> top-k accuracy
  double weak_alignment_rate = 0.0;
};

/// Ranks targets per query by descending cosine, ties broken by ascending
/// index; the gold match of query i is target i.
RetrievalReport retrieval_topk(const MatrixD& queries, const MatrixD& targets,
                               const std::vector<int>& ks = {1, 5, 10});

/// Fraction of queries whose gold similarity strictly exceeds every other.
double weak_alignment_rate(const MatrixD& queries, const MatrixD& targets);

struct DynamicsRow {
  std::int64_t step = 0;
  std::array<double, kNumSimilarityTypes> matched_mean{};
  std::array<double, kNumSimilarityTypes> random_mean{};
  std::array<double, kNumSimilarityTypes> gap{};
};

/// four_similarities per checkpoint, ordered by step.
std::vector<DynamicsRow> dynamics(
    const std::vector<std::pair<std::int64_t, const EncoderParameters<float>*>>& checkpoints,
    const ParallelEvalSet& eval, const EncoderConfig& config, const UnigramVocabulary& vocab,
    const SimilarityOptions& options = {});

/// Trains a linear softmax head on fixed features by full-batch gradient
/// descent. Returns weights [classes x (d+1)], the last column a bias.
MatrixD train_linear_probe(const MatrixD& features, const std::vector<int>& labels,
                           int num_classes, int iterations = 500, double lr = 0.1);

double probe_accuracy(const MatrixD& weights, const MatrixD& features,
                      const std::vector<int>& labels);

struct ProbeTask {
  std::vector<std::string> train_texts;
  std::vector<int> train_labels;
  std::vector<std::string> in_language_texts;
  std::vector<int> in_language_labels;
  std::vector<std::string> crosslingual_texts;
  std::vector<int> crosslingual_labels;
};

struct ProbeReport {
  double train_accuracy = 0.0;
  double in_language_accuracy = 0.0;
  double crosslingual_accuracy = 0.0;
  double in_language_majority = 0.0;
  double crosslingual_majority = 0.0;
};

/// Freezes the encoder, extracts pooled features, fits the linear head on the
/// training language, and reports in-language and crosslingual accuracy.
ProbeReport transfer_probe(const EncoderParameters<float>& params, const EncoderConfig& config,
                           const UnigramVocabulary& vocab, const ProbeTask& task,
                           int iterations = 500, double lr = 0.1);

}  // namespace xlit
