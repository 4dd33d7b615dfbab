#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include "xlit/corpus.hpp"
#include "xlit/errors.hpp"
#include "xlit/io_util.hpp"
#include "xlit/romanizer.hpp"
#include "xlit/utf8.hpp"

using namespace xlit;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& content) {
    path = std::string("corpus_test_tmp_") + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + ".txt";
    write_file(path, content);
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_corpus skips empty lines and normalizes") {
  TempFile f("abc\n\n  \nde\xCC\x81" "f\n");  // second line empty, third whitespace, e+acute
  const auto records = load_corpus(f.path, "x", "latn");
  REQUIRE(records.size() == 2);
  CHECK(records[0].id == 0);
  CHECK(records[0].text == "abc");
  CHECK(records[1].id == 1);
  CHECK(records[1].text == "déf");
}

TEST_CASE("load_corpus on empty file") {
  TempFile f("");
  CHECK(load_corpus(f.path, "x", "latn").empty());
}

TEST_CASE("load_corpus errors") {
  CHECK_THROWS_AS(load_corpus("does_not_exist_anywhere.txt", "x", "latn"), IoError);
  TempFile f("ok\nbad\xFFline\n");
  CHECK_THROWS_WITH_AS(load_corpus(f.path, "x", "latn"), doctest::Contains("byte offset"),
                       EncodingError);
}

TEST_CASE("load_corpus truncates overlong sentences") {
  std::string line;
  for (int i = 0; i < 70; ++i) line += "w" + std::to_string(i) + " ";
  TempFile f(line + "\n");
  const auto records = load_corpus(f.path, "x", "latn");
  REQUIRE(records.size() == 1);
  CHECK(split_whitespace(records[0].text).size() == kMaxSentenceTokens);
}

TEST_CASE("build_paired_corpus pairs line by line") {
  std::vector<SentenceRecord> originals = {{0, "x", "cyrl", "мама"}, {1, "x", "cyrl", "папа"}};
  const RuleTable table = parse_rules("м\tm\nа\ta\nп\tp\n", "mini");
  const PairedCorpus paired = build_paired_corpus(originals, table);
  REQUIRE(paired.transliterations.size() == 2);
  CHECK(paired.transliterations[0].text == "mama");
  CHECK(paired.transliterations[1].text == "papa");
  CHECK(paired.transliterations[0].script == "latn");
  CHECK_THROWS_AS(build_paired_corpus({}, table), ValidationError);
}

TEST_CASE("latin text without diacritics passes through the strip table") {
  std::vector<SentenceRecord> originals = {{0, "x", "latn", "plain words 42"}};
  const RuleTable strip =
      load_rules(std::string(XLIT_DATA_DIR) + "/rules/latin_strip.tsv");
  CHECK(build_paired_corpus(originals, strip).transliterations[0].text == "plain words 42");
}

TEST_CASE("mixed-script line rewrites only mapped graphemes") {
  // Independent oracle: apply the single-char rules grapheme by grapheme.
  const RuleTable table = parse_rules("м\tm\nа\ta\nя\tya\n", "mini");
  const std::string input = "мaма-я ok";
  std::string expected;
  for (const char32_t cp : decode_utf8(input)) {
    std::string ch;
    append_utf8(ch, cp);
    bool mapped = false;
    for (const auto& [source, target] : table.rules()) {
      if (source == ch) {
        expected += target;
        mapped = true;
        break;
      }
    }
    if (!mapped) expected += ch;
  }
  CHECK(transliterate(input, table) == expected);
  CHECK(transliterate(input, table) == "mama-ya ok");
}

TEST_CASE("paired corpus round-trip under the declared tables") {
  SynthPairSpec spec;
  spec.lexicon_size = 120;
  spec.sentence_count = 200;
  spec.parallel_count = 30;
  spec.seed = 3;
  const SynthPair pair = generate_synth_pair(spec);
  for (std::size_t i = 0; i < pair.corpus_b.originals.size(); ++i) {
    CHECK(transliterate(pair.corpus_b.originals[i].text, pair.cipher_inverse) ==
          pair.corpus_b.transliterations[i].text);
  }
  for (std::size_t i = 0; i < pair.corpus_a.originals.size(); ++i) {
    CHECK(transliterate(pair.corpus_a.originals[i].text, pair.latin_identity) ==
          pair.corpus_a.transliterations[i].text);
  }
}

TEST_CASE("generator determinism") {
  SynthPairSpec spec;
  spec.lexicon_size = 150;
  spec.sentence_count = 300;
  spec.parallel_count = 40;
  spec.seed = 11;
  const SynthPair one = generate_synth_pair(spec);
  const SynthPair two = generate_synth_pair(spec);
  REQUIRE(one.corpus_a.originals.size() == two.corpus_a.originals.size());
  for (std::size_t i = 0; i < one.corpus_a.originals.size(); ++i) {
    CHECK(one.corpus_a.originals[i].text == two.corpus_a.originals[i].text);
    CHECK(one.corpus_b.originals[i].text == two.corpus_b.originals[i].text);
  }
  CHECK(one.eval.s == two.eval.s);
  CHECK(one.eval.t == two.eval.t);
  CHECK(one.eval_labels == two.eval_labels);
}

TEST_CASE("full cognates without perturbation decipher to the A translations") {
  SynthPairSpec spec;
  spec.lexicon_size = 100;
  spec.sentence_count = 150;
  spec.parallel_count = 25;
  spec.cognate_rate = 1.0;
  spec.perturbation_rate = 0.0;
  spec.seed = 5;
  const SynthPair pair = generate_synth_pair(spec);
  for (std::size_t i = 0; i < pair.eval.size(); ++i) {
    CHECK(pair.eval.r_s[i] == pair.eval.t[i]);
  }
}

TEST_CASE("zero cognate rate keeps stem overlap under the documented ceiling") {
  SynthPairSpec spec;
  spec.lexicon_size = 400;
  spec.sentence_count = 800;
  spec.parallel_count = 50;
  spec.cognate_rate = 0.0;
  spec.seed = 9;
  const SynthPair pair = generate_synth_pair(spec);
  // Shared whitespace-token types are limited to the 10 designed function
  // words plus digit tokens; content stems never overlap at rate 0.
  const StemOverlap overlap =
      stem_overlap(pair.corpus_a.transliterations, pair.corpus_b.transliterations);
  CHECK(overlap.ratio < 0.08);

  std::set<std::string> types_a, types_b;
  for (const auto& rec : pair.corpus_a.transliterations) {
    for (const std::string& tok : split_whitespace(rec.text)) types_a.insert(tok);
  }
  for (const auto& rec : pair.corpus_b.transliterations) {
    for (const std::string& tok : split_whitespace(rec.text)) types_b.insert(tok);
  }
  const std::set<std::string> funcs(pair.function_words_a.begin(), pair.function_words_a.end());
  for (const std::string& type : types_a) {
    if (!types_b.count(type)) continue;
    const bool all_digits = std::all_of(type.begin(), type.end(),
                                        [](char c) { return c >= '0' && c <= '9'; });
    CHECK((funcs.count(type) > 0 || all_digits));
  }

  std::set<std::string> a_stems(pair.lexicon_a.begin(), pair.lexicon_a.end());
  for (const std::string& b_stem : pair.lexicon_b) {
    CHECK(a_stems.count(transliterate(b_stem, pair.cipher_inverse)) == 0);
  }
}

TEST_CASE("eval sentences never appear in the training corpora") {
  SynthPairSpec spec;
  spec.lexicon_size = 60;  // small lexicon makes collisions likely a priori
  spec.sentence_count = 2000;
  spec.parallel_count = 100;
  spec.seed = 21;
  const SynthPair pair = generate_synth_pair(spec);
  std::set<std::string> train_a, train_b;
  for (const auto& rec : pair.corpus_a.originals) train_a.insert(rec.text);
  for (const auto& rec : pair.corpus_b.originals) train_b.insert(rec.text);
  for (const std::string& s : pair.eval.t) CHECK(train_a.count(s) == 0);
  for (const std::string& s : pair.eval.s) CHECK(train_b.count(s) == 0);
}

TEST_CASE("stem-level overlap is monotone in cognate_rate") {
  double previous = -1.0;
  for (const double rate : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    SynthPairSpec spec;
    spec.lexicon_size = 300;
    spec.sentence_count = 600;
    spec.parallel_count = 40;
    spec.cognate_rate = rate;
    spec.perturbation_rate = 0.1;
    spec.seed = 17;
    const SynthPair pair = generate_synth_pair(spec);
    const StemOverlap overlap =
        stem_overlap(pair.corpus_a.transliterations, pair.corpus_b.transliterations);
    CHECK(overlap.ratio >= previous);
    previous = overlap.ratio;
  }
  CHECK(previous > 0.3);  // at rate 1.0 most stems coincide
}

TEST_CASE("spec validation") {
  SynthPairSpec spec;
  spec.cognate_rate = 1.5;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.cognate_rate = 0.5;
  spec.parallel_count = spec.sentence_count + 1;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("eval TSV round-trip") {
  SynthPairSpec spec;
  spec.lexicon_size = 80;
  spec.sentence_count = 100;
  spec.parallel_count = 20;
  spec.seed = 2;
  const SynthPair pair = generate_synth_pair(spec);
  TempFile f("");
  save_eval_tsv(pair.eval, f.path);
  const ParallelEvalSet loaded = load_eval_tsv(f.path);
  CHECK(loaded.s == pair.eval.s);
  CHECK(loaded.t == pair.eval.t);
  CHECK(loaded.r_s == pair.eval.r_s);
  CHECK(loaded.r_t == pair.eval.r_t);

  const ParallelEvalSet swapped = loaded.swapped();
  CHECK(swapped.s == pair.eval.t);
  CHECK(swapped.r_s == pair.eval.r_t);
  CHECK(swapped.direction == "A->B");
}
