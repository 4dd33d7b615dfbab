#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xlit {

/// Reserved token ids. Piece ids start at kNumSpecialTokens.
enum SpecialToken : int {
  kPadId = 0,
  kUnkId = 1,
  kMaskId = 2,
  kClsId = 3,
  kSepId = 4,
  kNumSpecialTokens = 5,
};

/// Word-boundary marker prefixed to word-initial pieces.
inline constexpr char32_t kBoundaryMarker = 0x2581;  // '▁'

/// Log-probability assigned to a single uncovered character. Any segmentation
/// using a real piece beats one using UNK.
inline constexpr double kUnkLogProb = -1e4;

struct UnigramVocabulary {
  /// Non-special pieces, ordered by descending log-probability (ties broken
  /// by the piece string). Piece i has token id kNumSpecialTokens + i.
  std::vector<std::pair<std::string, double>> pieces;
  /// Whether text is pre-split on whitespace with marker-prefixed words.
  bool word_marker = true;

  std::size_t size() const { return kNumSpecialTokens + pieces.size(); }
  int piece_id(std::string_view piece) const;
  const std::string& piece_text(int id) const;
  double piece_log_prob(int id) const;

  /// Checks: probabilities of non-special pieces sum to 1 within 1e-6, no
  /// duplicate or empty pieces, all log-probabilities finite and negative.
  void validate() const;

  /// Must be called after pieces change; builds the lookup index.
  void finalize();

  // lookup index (built by finalize)
  std::unordered_map<std::u32string, int> index;
  std::size_t max_piece_chars = 0;

  std::string to_json() const;
  static UnigramVocabulary from_json(std::string_view json_text);
  static UnigramVocabulary load(const std::string& path);
  void save(const std::string& path) const;
};

struct TrainOptions {
  std::size_t max_piece_length = 8;     // codepoints, seed substrings
  std::size_t seed_size_factor = 8;     // seed candidates ~ factor * vocab_size
  int em_iterations_per_round = 2;
  double prune_fraction = 0.2;          // of prunable pieces per round
  int final_em_iterations = 2;
  bool word_marker = true;              // false: treat each corpus string as one unit
};

struct TrainDiagnostics {
  /// (piece count, corpus log-likelihood) per E-step, in order. Entries with
  /// equal piece counts belong to the same EM run and must be non-decreasing.
  std::vector<std::pair<std::size_t, double>> em_trace;
};

/// Trains a unigram language-model vocabulary: seed from frequent substrings
/// plus all characters, run EM, prune lowest-utility pieces until vocab_size
/// (which counts the special tokens) is reached. Single characters seen in
/// training are never pruned. Deterministic.
UnigramVocabulary train_unigram(const std::vector<std::string>& corpus, std::size_t vocab_size,
                                std::uint64_t seed, const TrainOptions& options = {},
                                TrainDiagnostics* diagnostics = nullptr);

/// Viterbi maximum-log-probability segmentation. Characters without coverage
/// map to UNK. Never fails.
std::vector<int> segment(std::string_view text, const UnigramVocabulary& vocab);

/// Summed log-probability of `ids` under the vocabulary (UNK scores
/// kUnkLogProb). Specials other than UNK score 0.
double segmentation_score(const std::vector<int>& ids, const UnigramVocabulary& vocab);

struct OverlapReport {
  std::size_t shared_types = 0;
  std::size_t total_types = 0;
  double ratio = 0.0;
};

/// Token-type overlap between two corpora under one vocabulary: shared piece
/// ids over union of piece ids, sampling up to sample_size sentences per side
/// (seeded, a function of the seed and each side's size only, so the report is
/// symmetric in its corpus arguments). Special ids are not counted as types.
OverlapReport lexical_overlap(const std::vector<std::string>& texts_a,
                              const std::vector<std::string>& texts_b,
                              const UnigramVocabulary& vocab, std::size_t sample_size,
                              std::uint64_t seed);

}  // namespace xlit
