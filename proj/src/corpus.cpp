#include "xlit/corpus.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "xlit/errors.hpp"
#include "xlit/io_util.hpp"
#include "xlit/rng.hpp"
#include "xlit/utf8.hpp"

namespace xlit {

void ParallelEvalSet::validate() const {
  if (s.size() != t.size() || s.size() != r_s.size() || s.size() != r_t.size()) {
    throw ValidationError("parallel eval set: the four lists must have equal length");
  }
  if (s.size() < 2) throw ValidationError("parallel eval set: need at least 2 sentence pairs");
}

ParallelEvalSet ParallelEvalSet::swapped() const {
  ParallelEvalSet out;
  out.s = t;
  out.t = s;
  out.r_s = r_t;
  out.r_t = r_s;
  const std::size_t arrow = direction.find("->");
  if (arrow != std::string::npos) {
    out.direction = direction.substr(arrow + 2) + "->" + direction.substr(0, arrow);
  } else {
    out.direction = direction + " (swapped)";
  }
  return out;
}

void SynthPairSpec::validate() const {
  if (lexicon_size == 0 || sentence_count == 0 || parallel_count == 0) {
    throw ValidationError("synth spec: lexicon_size, sentence_count, parallel_count must be positive");
  }
  if (cognate_rate < 0.0 || cognate_rate > 1.0) {
    throw ValidationError("synth spec: cognate_rate must be in [0,1]");
  }
  if (perturbation_rate < 0.0 || perturbation_rate > 1.0) {
    throw ValidationError("synth spec: perturbation_rate must be in [0,1]");
  }
  if (parallel_count > sentence_count) {
    throw ValidationError("synth spec: parallel_count must not exceed sentence_count");
  }
}

std::vector<SentenceRecord> load_corpus(const std::string& path, const std::string& lang,
                                        const std::string& script) {
  const std::vector<std::string> lines = read_lines(path);
  std::vector<SentenceRecord> records;
  records.reserve(lines.size());
  for (const std::string& raw : lines) {
    const std::string_view trimmed = trim(raw);
    if (trimmed.empty()) continue;
    std::string text = nfc_compose(trimmed);
    text = truncate_tokens(text, kMaxSentenceTokens);
    SentenceRecord rec;
    rec.id = records.size();
    rec.lang = lang;
    rec.script = script;
    rec.text = std::move(text);
    records.push_back(std::move(rec));
  }
  return records;
}

PairedCorpus build_paired_corpus(const std::vector<SentenceRecord>& originals,
                                 const RuleTable& rules) {
  if (originals.empty()) throw ValidationError("build_paired_corpus: originals must be non-empty");
  PairedCorpus out;
  out.originals = originals;
  out.transliterations.reserve(originals.size());
  for (const SentenceRecord& rec : originals) {
    SentenceRecord tr;
    tr.id = rec.id;
    tr.lang = rec.lang;
    tr.script = "latn";
    tr.text = transliterate(rec.text, rules);
    out.transliterations.push_back(std::move(tr));
  }
  return out;
}

namespace {

constexpr char32_t kCipherBase = 0xE000;  // private use area
constexpr int kAlphabetSize = 26;
constexpr double kFunctionWordProb = 0.25;
constexpr double kDigitTokenProb = 0.05;
constexpr std::size_t kMinSentenceWords = 4;
constexpr std::size_t kMaxSentenceWords = 12;

const char* kConsonants = "bcdfghjklmnprstvz";
const char* kVowels = "aeiou";

std::string random_stem(Rng& rng) {
  const std::size_t len = 3 + rng.index_below(4);  // 3..6 characters
  std::string out;
  out.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    if (i % 2 == 0) {
      out.push_back(kConsonants[rng.index_below(17)]);
    } else {
      out.push_back(kVowels[rng.index_below(5)]);
    }
  }
  return out;
}

std::string encipher(const std::string& latin) {
  std::string out;
  for (const char c : latin) {
    if (c >= 'a' && c <= 'z') {
      append_utf8(out, kCipherBase + static_cast<char32_t>(c - 'a'));
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string perturb_ciphered(const std::string& ciphered, double rate, Rng& rng) {
  std::vector<char32_t> cps = decode_utf8(ciphered);
  for (char32_t& cp : cps) {
    if (cp >= kCipherBase && cp < kCipherBase + kAlphabetSize && rng.bernoulli(rate)) {
      char32_t replacement = kCipherBase + static_cast<char32_t>(rng.index_below(kAlphabetSize));
      while (replacement == cp) {
        replacement = kCipherBase + static_cast<char32_t>(rng.index_below(kAlphabetSize));
      }
      cp = replacement;
    }
  }
  return encode_utf8(cps);
}

enum class ItemKind { kStem, kFunc, kDigit };
struct SkeletonItem {
  ItemKind kind;
  std::size_t index;   // stem or function-word index
  std::string digits;  // for kDigit
};
using Skeleton = std::vector<SkeletonItem>;

Skeleton draw_skeleton(Rng& rng, std::size_t lexicon_size) {
  const std::size_t len = kMinSentenceWords + rng.index_below(kMaxSentenceWords - kMinSentenceWords + 1);
  Skeleton items;
  items.reserve(len);
  bool has_stem = false;
  for (std::size_t i = 0; i < len; ++i) {
    const double roll = rng.next_double();
    if (roll < kDigitTokenProb) {
      const std::size_t digits = 1 + rng.index_below(3);
      std::string num;
      for (std::size_t d = 0; d < digits; ++d) {
        num.push_back(static_cast<char>('0' + rng.index_below(10)));
      }
      items.push_back({ItemKind::kDigit, 0, std::move(num)});
    } else if (roll < kDigitTokenProb + kFunctionWordProb) {
      items.push_back({ItemKind::kFunc, rng.index_below(10), {}});
    } else {
      items.push_back({ItemKind::kStem, rng.index_below(lexicon_size), {}});
      has_stem = true;
    }
  }
  if (!has_stem) items[0] = {ItemKind::kStem, rng.index_below(lexicon_size), {}};
  return items;
}

std::string render(const Skeleton& sk, const std::vector<std::string>& stems,
                   const std::vector<std::string>& funcs) {
  std::string out;
  for (std::size_t i = 0; i < sk.size(); ++i) {
    if (i > 0) out.push_back(' ');
    switch (sk[i].kind) {
      case ItemKind::kStem: out += stems[sk[i].index]; break;
      case ItemKind::kFunc: out += funcs[sk[i].index]; break;
      case ItemKind::kDigit: out += sk[i].digits; break;
    }
  }
  return out;
}

int skeleton_label(const Skeleton& sk) {
  int counts[kSynthProbeClasses] = {0};
  for (const SkeletonItem& item : sk) {
    if (item.kind == ItemKind::kStem) {
      counts[item.index % static_cast<std::size_t>(kSynthProbeClasses)]++;
    }
  }
  int best = 0;
  for (int c = 1; c < kSynthProbeClasses; ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return best;
}

SentenceRecord make_record(std::size_t id, std::string lang, std::string script, std::string text) {
  SentenceRecord rec;
  rec.id = id;
  rec.lang = std::move(lang);
  rec.script = std::move(script);
  rec.text = std::move(text);
  return rec;
}

}  // namespace

SynthPair generate_synth_pair(const SynthPairSpec& spec) {
  spec.validate();
  SynthPair out;

  // Lexicon of language A: distinct pronounceable ASCII stems.
  Rng lex_rng(derive_seed(spec.seed, 1));
  std::unordered_set<std::string> taken_a;
  out.lexicon_a.reserve(spec.lexicon_size);
  while (out.lexicon_a.size() < spec.lexicon_size) {
    std::string stem = random_stem(lex_rng);
    if (taken_a.insert(stem).second) out.lexicon_a.push_back(std::move(stem));
  }

  // Function words: short, shared across the pair modulo the cipher.
  Rng func_rng(derive_seed(spec.seed, 2));
  std::unordered_set<std::string> taken_func;
  while (out.function_words_a.size() < 10) {
    std::string w;
    w.push_back(kConsonants[func_rng.index_below(17)]);
    w.push_back(kVowels[func_rng.index_below(5)]);
    if (taken_a.count(w) || !taken_func.insert(w).second) continue;
    out.function_words_a.push_back(w);
  }
  for (const std::string& w : out.function_words_a) {
    out.function_words_b.push_back(encipher(w));
  }

  // Lexicon of language B. Each index i draws both a cognate candidate (the
  // enciphered, perturbed form of A's stem i) and a fresh candidate from its
  // own derived stream; cognate_rate then selects which one index i uses.
  // This keeps every candidate independent of the rate, so raising the rate
  // only ever converts fresh stems into cognates.
  const auto cognate_count =
      static_cast<std::size_t>(spec.cognate_rate * static_cast<double>(spec.lexicon_size) + 0.5);
  std::vector<std::string> cognate_candidates(spec.lexicon_size);
  for (std::size_t i = 0; i < spec.lexicon_size; ++i) {
    Rng stem_rng(derive_seed(spec.seed, 1000 + i));
    cognate_candidates[i] = perturb_ciphered(encipher(out.lexicon_a[i]), spec.perturbation_rate, stem_rng);
  }
  std::unordered_set<std::string> fresh_reject = taken_a;
  for (const std::string& c : cognate_candidates) {
    std::string latin;
    for (const char32_t cp : decode_utf8(c)) {
      latin.push_back(cp >= kCipherBase && cp < kCipherBase + kAlphabetSize
                          ? static_cast<char>('a' + (cp - kCipherBase))
                          : static_cast<char>(cp));
    }
    fresh_reject.insert(latin);
  }
  std::vector<std::string> fresh_candidates(spec.lexicon_size);
  for (std::size_t i = 0; i < spec.lexicon_size; ++i) {
    Rng fresh_rng(derive_seed(spec.seed, 2000000 + i));
    std::string stem = random_stem(fresh_rng);
    while (fresh_reject.count(stem)) stem = random_stem(fresh_rng);
    fresh_reject.insert(stem);
    fresh_candidates[i] = encipher(stem);
  }
  out.lexicon_b.resize(spec.lexicon_size);
  for (std::size_t i = 0; i < spec.lexicon_size; ++i) {
    out.lexicon_b[i] = i < cognate_count ? cognate_candidates[i] : fresh_candidates[i];
  }

  // Inverse cipher rule table, script B back to Latin.
  {
    std::vector<std::pair<std::string, std::string>> rules;
    for (int i = 0; i < kAlphabetSize; ++i) {
      std::string source;
      append_utf8(source, kCipherBase + static_cast<char32_t>(i));
      rules.emplace_back(std::move(source), std::string(1, static_cast<char>('a' + i)));
    }
    out.cipher_inverse = RuleTable("synth_cipher_inverse", std::move(rules), Fallback::kPassThrough);
  }
  out.latin_identity = RuleTable("identity", {}, Fallback::kPassThrough);

  // Training corpora: independent sentences per language (not parallel).
  Rng sent_rng_a(derive_seed(spec.seed, 3));
  Rng sent_rng_b(derive_seed(spec.seed, 4));
  std::unordered_set<std::string> train_a_set;
  std::unordered_set<std::string> train_b_set;
  for (std::size_t i = 0; i < spec.sentence_count; ++i) {
    const Skeleton sk = draw_skeleton(sent_rng_a, spec.lexicon_size);
    std::string text = render(sk, out.lexicon_a, out.function_words_a);
    train_a_set.insert(text);
    out.corpus_a.originals.push_back(make_record(i, "synthA", "latn", std::move(text)));
  }
  for (std::size_t i = 0; i < spec.sentence_count; ++i) {
    const Skeleton sk = draw_skeleton(sent_rng_b, spec.lexicon_size);
    std::string text = render(sk, out.lexicon_b, out.function_words_b);
    train_b_set.insert(text);
    out.corpus_b.originals.push_back(make_record(i, "synthB", "synthb", std::move(text)));
  }
  for (const SentenceRecord& rec : out.corpus_a.originals) {
    out.corpus_a.transliterations.push_back(
        make_record(rec.id, rec.lang, "latn", transliterate(rec.text, out.latin_identity)));
  }
  for (const SentenceRecord& rec : out.corpus_b.originals) {
    out.corpus_b.transliterations.push_back(
        make_record(rec.id, rec.lang, "latn", transliterate(rec.text, out.cipher_inverse)));
  }

  // Held-out parallel sentences, disjoint from both training corpora and
  // duplicate-free so retrieval gold labels are unambiguous.
  Rng eval_rng(derive_seed(spec.seed, 5));
  std::unordered_set<std::string> eval_a_set;
  std::unordered_set<std::string> eval_b_set;
  out.eval.direction = "B->A";
  while (out.eval.s.size() < spec.parallel_count) {
    const Skeleton sk = draw_skeleton(eval_rng, spec.lexicon_size);
    std::string a_text = render(sk, out.lexicon_a, out.function_words_a);
    std::string b_text = render(sk, out.lexicon_b, out.function_words_b);
    if (train_a_set.count(a_text) || train_b_set.count(b_text) || eval_a_set.count(a_text) ||
        eval_b_set.count(b_text)) {
      continue;
    }
    eval_a_set.insert(a_text);
    eval_b_set.insert(b_text);
    out.eval.r_s.push_back(transliterate(b_text, out.cipher_inverse));
    out.eval.r_t.push_back(transliterate(a_text, out.latin_identity));
    out.eval.s.push_back(std::move(b_text));
    out.eval.t.push_back(std::move(a_text));
    out.eval_labels.push_back(skeleton_label(sk));
  }
  return out;
}

ParallelEvalSet load_eval_tsv(const std::string& path, const std::string& direction) {
  ParallelEvalSet eval;
  eval.direction = direction;
  std::size_t line_no = 0;
  for (const std::string& raw : read_lines(path)) {
    ++line_no;
    if (trim(raw).empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = raw.find('\t', start);
      if (tab == std::string::npos) {
        cols.push_back(raw.substr(start));
        break;
      }
      cols.push_back(raw.substr(start, tab - start));
      start = tab + 1;
    }
    if (cols.size() != 4) {
      throw ValidationError("eval file '" + path + "' line " + std::to_string(line_no) +
                            ": expected 4 tab-separated columns, got " +
                            std::to_string(cols.size()));
    }
    eval.s.push_back(nfc_compose(trim(cols[0])));
    eval.t.push_back(nfc_compose(trim(cols[1])));
    eval.r_s.push_back(nfc_compose(trim(cols[2])));
    eval.r_t.push_back(nfc_compose(trim(cols[3])));
  }
  eval.validate();
  return eval;
}

ParallelEvalSet load_eval_files(const std::string& s_path, const std::string& t_path,
                                const std::string& rs_path, const std::string& rt_path,
                                const std::string& direction) {
  ParallelEvalSet eval;
  eval.direction = direction;
  const auto load = [](const std::string& path) {
    std::vector<std::string> out;
    for (const std::string& raw : read_lines(path)) {
      if (!trim(raw).empty()) out.push_back(nfc_compose(trim(raw)));
    }
    return out;
  };
  eval.s = load(s_path);
  eval.t = load(t_path);
  eval.r_s = load(rs_path);
  eval.r_t = load(rt_path);
  eval.validate();
  return eval;
}

void save_eval_tsv(const ParallelEvalSet& eval, const std::string& path) {
  eval.validate();
  std::string out;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    out += eval.s[i];
    out.push_back('\t');
    out += eval.t[i];
    out.push_back('\t');
    out += eval.r_s[i];
    out.push_back('\t');
    out += eval.r_t[i];
    out.push_back('\n');
  }
  write_file(path, out);
}

StemOverlap stem_overlap(const std::vector<SentenceRecord>& a,
                         const std::vector<SentenceRecord>& b) {
  std::unordered_set<std::string> types_a;
  std::unordered_set<std::string> types_b;
  for (const SentenceRecord& rec : a) {
    for (std::string& tok : split_whitespace(rec.text)) types_a.insert(std::move(tok));
  }
  for (const SentenceRecord& rec : b) {
    for (std::string& tok : split_whitespace(rec.text)) types_b.insert(std::move(tok));
  }
  StemOverlap out;
  for (const std::string& t : types_a) {
    if (types_b.count(t)) ++out.shared;
  }
  out.total = types_a.size() + types_b.size() - out.shared;
  out.ratio = out.total == 0 ? 0.0 : static_cast<double>(out.shared) / static_cast<double>(out.total);
  return out;
}

}  // namespace xlit
