#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "xlit/corpus.hpp"
#include "xlit/errors.hpp"
#include "xlit/io_util.hpp"
#include "xlit/rng.hpp"
#include "xlit/tokenizer.hpp"

using namespace xlit;

namespace {

// Exhaustive segmentation enumeration over a piece list. Pieces are plain
// ASCII here, so byte == codepoint.
void enumerate_segmentations(const std::string& text, std::size_t pos,
                             const std::vector<std::pair<std::string, double>>& pieces,
                             std::vector<int>& current,
                             std::vector<std::vector<int>>& out) {
  if (pos == text.size()) {
    out.push_back(current);
    return;
  }
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const std::string& p = pieces[i].first;
    if (text.compare(pos, p.size(), p) == 0) {
      current.push_back(static_cast<int>(i));
      enumerate_segmentations(text, pos + p.size(), pieces, current, out);
      current.pop_back();
    }
  }
}

// Exact EM on one string by full enumeration: posterior-weighted expected
// counts, renormalize. Mirrors one E+M step of the unigram trainer.
std::vector<double> brute_force_em_step(const std::string& text,
                                        const std::vector<std::pair<std::string, double>>& pieces,
                                        const std::vector<double>& probs) {
  std::vector<std::vector<int>> segmentations;
  std::vector<int> current;
  enumerate_segmentations(text, 0, pieces, current, segmentations);
  REQUIRE(!segmentations.empty());
  std::vector<double> expected(pieces.size(), 0.0);
  double z = 0.0;
  std::vector<double> weights;
  for (const auto& seg : segmentations) {
    double w = 1.0;
    for (const int id : seg) w *= probs[static_cast<std::size_t>(id)];
    weights.push_back(w);
    z += w;
  }
  for (std::size_t s = 0; s < segmentations.size(); ++s) {
    for (const int id : segmentations[s]) {
      expected[static_cast<std::size_t>(id)] += weights[s] / z;
    }
  }
  double total = 0.0;
  for (const double e : expected) total += std::max(e, 1e-15);
  std::vector<double> next(pieces.size());
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    next[i] = std::max(expected[i], 1e-15) / total;
  }
  return next;
}

UnigramVocabulary make_vocab(std::vector<std::pair<std::string, double>> pieces,
                             bool word_marker = false) {
  double total = 0.0;
  for (const auto& [text, w] : pieces) total += w;
  for (auto& [text, w] : pieces) w = std::log(w / total);
  UnigramVocabulary vocab;
  vocab.pieces = std::move(pieces);
  vocab.word_marker = word_marker;
  vocab.validate();
  vocab.finalize();
  return vocab;
}

}  // namespace

TEST_CASE("em on 'aaaa' matches the enumeration oracle and favors 'aa'") {
  // Raw mode with pieces capped at 2 chars gives the candidate set {a, aa}.
  // The trainer runs 2 EM iterations, hits the target size, then 2 final
  // iterations; the oracle replays the same schedule by full enumeration
  // starting from the trainer's count*length seed weights.
  TrainOptions options;
  options.word_marker = false;
  options.max_piece_length = 2;
  options.em_iterations_per_round = 2;
  options.final_em_iterations = 2;
  TrainDiagnostics diag;
  const UnigramVocabulary vocab =
      train_unigram({"aaaa"}, kNumSpecialTokens + 2, 1, options, &diag);

  REQUIRE(vocab.pieces.size() == 2);
  std::map<std::string, double> got;
  for (const auto& [text, logp] : vocab.pieces) got[text] = std::exp(logp);

  // Oracle: seed weights a -> count 4, aa -> count 3 * len 2 = 6.
  std::vector<std::pair<std::string, double>> pieces = {{"a", 0.0}, {"aa", 0.0}};
  std::vector<double> probs = {4.0 / 10.0, 6.0 / 10.0};
  for (int it = 0; it < 4; ++it) probs = brute_force_em_step("aaaa", pieces, probs);

  CHECK(got.at("a") == doctest::Approx(probs[0]).epsilon(1e-9));
  CHECK(got.at("aa") == doctest::Approx(probs[1]).epsilon(1e-9));
  CHECK(got.at("aa") > got.at("a"));
}

TEST_CASE("per-iteration corpus log-likelihood is non-decreasing") {
  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::string> corpus;
    const char* alphabet = "abc";
    for (int s = 0; s < 30; ++s) {
      std::string line;
      const std::size_t words = 1 + rng.index_below(5);
      for (std::size_t w = 0; w < words; ++w) {
        if (w > 0) line.push_back(' ');
        const std::size_t len = 1 + rng.index_below(6);
        for (std::size_t c = 0; c < len; ++c) {
          line.push_back(alphabet[rng.index_below(3)]);
        }
      }
      corpus.push_back(line);
    }
    TrainDiagnostics diag;
    train_unigram(corpus, 40, 1, {}, &diag);
    REQUIRE(diag.em_trace.size() >= 2);
    for (std::size_t i = 1; i < diag.em_trace.size(); ++i) {
      if (diag.em_trace[i].first == diag.em_trace[i - 1].first) {
        CHECK(diag.em_trace[i].second >= diag.em_trace[i - 1].second - 1e-9);
      }
    }
  }
}

TEST_CASE("training is deterministic") {
  const std::vector<std::string> corpus = {"abab baba", "aab bba", "abba"};
  const UnigramVocabulary one = train_unigram(corpus, 20, 7);
  const UnigramVocabulary two = train_unigram(corpus, 20, 7);
  REQUIRE(one.pieces.size() == two.pieces.size());
  for (std::size_t i = 0; i < one.pieces.size(); ++i) {
    CHECK(one.pieces[i].first == two.pieces[i].first);
    CHECK(one.pieces[i].second == two.pieces[i].second);
  }
}

TEST_CASE("vocab_size below character coverage is rejected") {
  CHECK_THROWS_AS(train_unigram({"abcdefgh"}, kNumSpecialTokens + 3, 1), ValidationError);
}

TEST_CASE("segment: single-piece text returns that piece id") {
  const UnigramVocabulary vocab = make_vocab({{"ab", 2.0}, {"a", 1.0}, {"b", 1.0}});
  const std::vector<int> ids = segment("ab", vocab);
  REQUIRE(ids.size() == 1);
  CHECK(vocab.piece_text(ids[0]) == "ab");
}

TEST_CASE("segment maps uncovered characters to UNK") {
  const UnigramVocabulary vocab = make_vocab({{"a", 1.0}, {"b", 1.0}});
  const std::vector<int> ids = segment("axb", vocab);
  REQUIRE(ids.size() == 3);
  CHECK(ids[1] == kUnkId);
  CHECK(ids[0] != kUnkId);
  CHECK(ids[2] != kUnkId);
}

TEST_CASE("viterbi equals exhaustive enumeration on random cases") {
  Rng rng(2024);
  const char* alphabet = "abc";
  int checked_paths = 0;
  for (int trial = 0; trial < 300; ++trial) {
    // Random vocabulary: the three single chars plus up to 3 longer pieces.
    std::vector<std::pair<std::string, double>> pieces = {
        {"a", 0.05 + rng.next_double()}, {"b", 0.05 + rng.next_double()},
        {"c", 0.05 + rng.next_double()}};
    const std::size_t extra = rng.index_below(4);
    for (std::size_t e = 0; e < extra; ++e) {
      const std::size_t len = 2 + rng.index_below(2);
      std::string p;
      for (std::size_t c = 0; c < len; ++c) p.push_back(alphabet[rng.index_below(3)]);
      bool duplicate = false;
      for (const auto& [text, w] : pieces) duplicate = duplicate || text == p;
      if (!duplicate) pieces.emplace_back(p, 0.05 + rng.next_double());
    }
    const UnigramVocabulary vocab = make_vocab(pieces);

    std::string text;
    const std::size_t len = 1 + rng.index_below(12);
    for (std::size_t c = 0; c < len; ++c) text.push_back(alphabet[rng.index_below(3)]);

    const std::vector<int> got = segment(text, vocab);
    const double got_score = segmentation_score(got, vocab);

    std::vector<std::vector<int>> all;
    std::vector<int> current;
    enumerate_segmentations(text, 0, vocab.pieces, current, all);
    REQUIRE(!all.empty());
    double best = -1e300;
    double second = -1e300;
    std::vector<int> best_seg;
    for (const auto& seg : all) {
      double score = 0.0;
      for (const int id : seg) score += vocab.pieces[static_cast<std::size_t>(id)].second;
      if (score > best) {
        second = best;
        best = score;
        best_seg = seg;
      } else if (score > second) {
        second = score;
      }
    }
    CHECK(got_score == doctest::Approx(best).epsilon(1e-12));
    if (best - second > 1e-6) {  // unique argmax: paths must agree exactly
      REQUIRE(got.size() == best_seg.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(vocab.piece_text(got[i]) ==
              vocab.pieces[static_cast<std::size_t>(best_seg[i])].first);
      }
      ++checked_paths;
    }
  }
  CHECK(checked_paths > 100);
}

TEST_CASE("vocabulary json round-trip revalidates") {
  const std::vector<std::string> corpus = {"mama tata", "ma ta ma"};
  const UnigramVocabulary vocab = train_unigram(corpus, 16, 1);
  const std::string json_text = vocab.to_json();
  const UnigramVocabulary loaded = UnigramVocabulary::from_json(json_text);
  REQUIRE(loaded.pieces.size() == vocab.pieces.size());
  CHECK(loaded.word_marker == vocab.word_marker);
  const std::vector<int> a = segment("mama", vocab);
  const std::vector<int> b = segment("mama", loaded);
  CHECK(a == b);

  CHECK_THROWS_AS(UnigramVocabulary::from_json("{\"pieces\": [[\"a\", 0.5]]}"), ValidationError);
  CHECK_THROWS_AS(UnigramVocabulary::from_json("not json"), ValidationError);
  // Probabilities that do not sum to 1 are rejected on load.
  CHECK_THROWS_AS(UnigramVocabulary::from_json(
                      "{\"pieces\": [[\"a\", -0.1], [\"b\", -0.1]], \"specials\": {}}"),
                  ValidationError);
}

TEST_CASE("overlap: identical corpora give ratio 1") {
  const std::vector<std::string> corpus = {"ab ba", "aab"};
  const UnigramVocabulary vocab = train_unigram(corpus, 12, 1);
  const OverlapReport report = lexical_overlap(corpus, corpus, vocab, 100, 1);
  CHECK(report.ratio == 1.0);
  CHECK(report.shared_types == report.total_types);
}

TEST_CASE("overlap bounds and symmetry") {
  const std::vector<std::string> a = {"ab ba ca", "aa bb"};
  const std::vector<std::string> b = {"ba ba", "cc ab aa"};
  const UnigramVocabulary vocab = train_unigram({"ab ba ca aa bb cc"}, 20, 1);
  const OverlapReport fwd = lexical_overlap(a, b, vocab, 100, 3);
  const OverlapReport bwd = lexical_overlap(b, a, vocab, 100, 3);
  CHECK(fwd.ratio >= 0.0);
  CHECK(fwd.ratio <= 1.0);
  CHECK(fwd.ratio == bwd.ratio);
  CHECK(fwd.shared_types == bwd.shared_types);

  // Sampling stays symmetric when the corpora are larger than the sample.
  std::vector<std::string> big_a, big_b;
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    big_a.push_back(rng.bernoulli(0.5) ? "ab ba" : "ca aa");
    big_b.push_back(rng.bernoulli(0.5) ? "bb cc" : "ab aa");
  }
  const OverlapReport f2 = lexical_overlap(big_a, big_b, vocab, 20, 9);
  const OverlapReport b2 = lexical_overlap(big_b, big_a, vocab, 20, 9);
  CHECK(f2.ratio == b2.ratio);
}

TEST_CASE("transliterated synthetic pair overlaps more than the original") {
  SynthPairSpec spec;
  spec.lexicon_size = 300;
  spec.sentence_count = 800;
  spec.parallel_count = 50;
  spec.cognate_rate = 0.8;
  spec.perturbation_rate = 0.1;
  spec.seed = 4;
  const SynthPair pair = generate_synth_pair(spec);
  std::vector<std::string> a_orig, b_orig, a_latn, b_latn;
  for (const auto& rec : pair.corpus_a.originals) a_orig.push_back(rec.text);
  for (const auto& rec : pair.corpus_b.originals) b_orig.push_back(rec.text);
  for (const auto& rec : pair.corpus_a.transliterations) a_latn.push_back(rec.text);
  for (const auto& rec : pair.corpus_b.transliterations) b_latn.push_back(rec.text);
  std::vector<std::string> train_texts = a_orig;
  train_texts.insert(train_texts.end(), b_orig.begin(), b_orig.end());
  const UnigramVocabulary vocab = train_unigram(train_texts, 600, 1);

  const OverlapReport original = lexical_overlap(a_orig, b_orig, vocab, 10000, 1);
  const OverlapReport transliterated = lexical_overlap(a_latn, b_latn, vocab, 10000, 1);
  CHECK(transliterated.ratio > original.ratio);
}

TEST_CASE("word marker keeps word-initial and internal pieces distinct") {
  const std::vector<std::string> corpus = {"abc abc abc", "xabc xabc"};
  const UnigramVocabulary vocab = train_unigram(corpus, 24, 1);
  const std::vector<int> ids = segment("abc xabc", vocab);
  CHECK(ids.size() >= 2);
  // Every word-initial piece begins with the marker.
  const std::string first = vocab.piece_text(ids[0]);
  CHECK(first.rfind("\xE2\x96\x81", 0) == 0);
}
