#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "xlit/romanizer.hpp"

namespace xlit {

/// Sentences longer than this many whitespace tokens are truncated at load.
inline constexpr std::size_t kMaxSentenceTokens = 64;

struct SentenceRecord {
  std::size_t id = 0;  // 0-based position within its corpus
  std::string lang;
  std::string script;
  std::string text;  // NFC-normalized, trimmed, non-empty
};

/// Index-aligned original-script and Latin-transliteration sentence lists.
struct PairedCorpus {
  std::vector<SentenceRecord> originals;
  std::vector<SentenceRecord> transliterations;
};

/// Aligned evaluation quadruples: source sentences, their translations, and
/// both transliterations.
struct ParallelEvalSet {
  std::vector<std::string> s;
  std::vector<std::string> t;
  std::vector<std::string> r_s;
  std::vector<std::string> r_t;
  std::string direction;  // e.g. "B->A": which language plays s

  std::size_t size() const { return s.size(); }
  void validate() const;  // equal lengths, N >= 2

  /// Returns the set with the roles of the two languages exchanged.
  ParallelEvalSet swapped() const;
};

struct SynthPairSpec {
  std::size_t lexicon_size = 3000;
  std::size_t sentence_count = 20000;
  std::size_t parallel_count = 1000;
  double cognate_rate = 0.7;
  double perturbation_rate = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Everything generate_synth_pair produces. Language A writes a Latin-like
/// ASCII alphabet; language B writes a private-use codepoint block related to
/// A by a fixed bijective character cipher. Digits are shared by both scripts.
struct SynthPair {
  PairedCorpus corpus_a;
  PairedCorpus corpus_b;
  ParallelEvalSet eval;          // direction "B->A": s is language B
  RuleTable cipher_inverse;      // script B -> Latin
  RuleTable latin_identity;      // declared table for corpus A (pass-through)
  std::vector<std::string> lexicon_a;  // content stems; index i translates index i of lexicon_b
  std::vector<std::string> lexicon_b;
  std::vector<std::string> function_words_a;
  std::vector<std::string> function_words_b;
  std::vector<int> eval_labels;  // topic labels with label parity across languages
};

std::vector<SentenceRecord> load_corpus(const std::string& path, const std::string& lang,
                                        const std::string& script);

/// Transliterates every original line-by-line. The result satisfies the
/// PairedCorpus pairing invariant under `rules`.
PairedCorpus build_paired_corpus(const std::vector<SentenceRecord>& originals,
                                 const RuleTable& rules);

/// Deterministic function of the spec: equal specs give equal outputs.
SynthPair generate_synth_pair(const SynthPairSpec& spec);

/// Parallel eval file formats: one TSV with columns s, t, r_s, r_t, or four
/// side-by-side files with matching line counts.
ParallelEvalSet load_eval_tsv(const std::string& path, const std::string& direction = "B->A");
ParallelEvalSet load_eval_files(const std::string& s_path, const std::string& t_path,
                                const std::string& rs_path, const std::string& rt_path,
                                const std::string& direction = "B->A");
void save_eval_tsv(const ParallelEvalSet& eval, const std::string& path);

/// Whitespace-token type overlap between two record lists. Used for the
/// stem-level overlap analyses of the synthetic generator.
struct StemOverlap {
  std::size_t shared = 0;
  std::size_t total = 0;
  double ratio = 0.0;
};
StemOverlap stem_overlap(const std::vector<SentenceRecord>& a,
                         const std::vector<SentenceRecord>& b);

/// Number of distinct topic classes assigned by the synthetic generator.
inline constexpr int kSynthProbeClasses = 4;

}  // namespace xlit
