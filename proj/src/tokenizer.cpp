#include "xlit/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "xlit/errors.hpp"
#include "xlit/io_util.hpp"
#include "xlit/rng.hpp"
#include "xlit/utf8.hpp"

namespace xlit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

std::u32string to_u32(std::string_view utf8) {
  const std::vector<char32_t> cps = decode_utf8(utf8);
  return std::u32string(cps.begin(), cps.end());
}

std::string to_utf8(const std::u32string& s) {
  std::string out;
  for (const char32_t cp : s) append_utf8(out, cp);
  return out;
}

/// Word types with counts, in a deterministic order.
std::vector<std::pair<std::u32string, std::int64_t>> collect_units(
    const std::vector<std::string>& corpus, bool word_marker) {
  std::map<std::u32string, std::int64_t> counts;
  for (const std::string& line : corpus) {
    if (word_marker) {
      for (const std::string& word : split_whitespace(line)) {
        std::u32string unit;
        unit.push_back(kBoundaryMarker);
        unit += to_u32(word);
        counts[unit] += 1;
      }
    } else if (!line.empty()) {
      counts[to_u32(line)] += 1;
    }
  }
  return {counts.begin(), counts.end()};
}

struct Candidate {
  std::u32string text;
  double weight = 0.0;  // running probability estimate (unnormalized in seed phase)
};

/// Lattice EM over one unit set with the current piece inventory. Returns the
/// corpus log-likelihood computed with the entering probabilities and fills
/// expected counts.
double e_step(const std::vector<std::pair<std::u32string, std::int64_t>>& units,
              const std::unordered_map<std::u32string, std::size_t>& piece_index,
              const std::vector<double>& log_probs, std::size_t max_len,
              std::vector<double>& expected) {
  std::fill(expected.begin(), expected.end(), 0.0);
  double total_ll = 0.0;
  std::vector<double> alpha;
  std::vector<double> beta;
  for (const auto& [unit, count] : units) {
    const std::size_t n = unit.size();
    alpha.assign(n + 1, kNegInf);
    beta.assign(n + 1, kNegInf);
    alpha[0] = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t lo = j > max_len ? j - max_len : 0;
      for (std::size_t i = lo; i < j; ++i) {
        if (alpha[i] == kNegInf) continue;
        const auto it = piece_index.find(unit.substr(i, j - i));
        if (it == piece_index.end()) continue;
        alpha[j] = log_sum_exp(alpha[j], alpha[i] + log_probs[it->second]);
      }
    }
    beta[n] = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      const std::size_t hi = std::min(n, i + max_len);
      for (std::size_t j = i + 1; j <= hi; ++j) {
        if (beta[j] == kNegInf) continue;
        const auto it = piece_index.find(unit.substr(i, j - i));
        if (it == piece_index.end()) continue;
        beta[i] = log_sum_exp(beta[i], beta[j] + log_probs[it->second]);
      }
    }
    const double z = alpha[n];
    if (z == kNegInf) {
      throw ValidationError("unigram trainer: unit lost coverage during training");
    }
    total_ll += static_cast<double>(count) * z;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] == kNegInf) continue;
      const std::size_t hi = std::min(n, i + max_len);
      for (std::size_t j = i + 1; j <= hi; ++j) {
        if (beta[j] == kNegInf) continue;
        const auto it = piece_index.find(unit.substr(i, j - i));
        if (it == piece_index.end()) continue;
        expected[it->second] += static_cast<double>(count) *
                                std::exp(alpha[i] + log_probs[it->second] + beta[j] - z);
      }
    }
  }
  return total_ll;
}

/// Viterbi log-probability of `text` over the pieces, optionally excluding
/// one piece index. Unknown gaps are impossible here because single chars are
/// always present.
double viterbi_score_excluding(const std::u32string& text,
                               const std::unordered_map<std::u32string, std::size_t>& piece_index,
                               const std::vector<double>& log_probs, std::size_t max_len,
                               std::size_t excluded) {
  const std::size_t n = text.size();
  std::vector<double> best(n + 1, kNegInf);
  best[0] = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t lo = j > max_len ? j - max_len : 0;
    for (std::size_t i = lo; i < j; ++i) {
      if (best[i] == kNegInf) continue;
      const auto it = piece_index.find(text.substr(i, j - i));
      if (it == piece_index.end() || it->second == excluded) continue;
      best[j] = std::max(best[j], best[i] + log_probs[it->second]);
    }
  }
  return best[n];
}

}  // namespace

int UnigramVocabulary::piece_id(std::string_view piece) const {
  const auto it = index.find(to_u32(piece));
  return it == index.end() ? kUnkId : it->second;
}

const std::string& UnigramVocabulary::piece_text(int id) const {
  static const std::string kSpecialNames[kNumSpecialTokens] = {"[PAD]", "[UNK]", "[MASK]",
                                                               "[CLS]", "[SEP]"};
  if (id < kNumSpecialTokens) return kSpecialNames[id];
  return pieces[static_cast<std::size_t>(id - kNumSpecialTokens)].first;
}

double UnigramVocabulary::piece_log_prob(int id) const {
  if (id < kNumSpecialTokens) return id == kUnkId ? kUnkLogProb : 0.0;
  return pieces[static_cast<std::size_t>(id - kNumSpecialTokens)].second;
}

void UnigramVocabulary::validate() const {
  double prob_sum = 0.0;
  std::set<std::string> seen;
  for (const auto& [text, logp] : pieces) {
    if (text.empty()) throw ValidationError("vocabulary: empty piece");
    if (!seen.insert(text).second) throw ValidationError("vocabulary: duplicate piece '" + text + "'");
    if (!std::isfinite(logp) || logp > 0.0) {
      throw ValidationError("vocabulary: piece '" + text + "' has invalid log-probability");
    }
    prob_sum += std::exp(logp);
  }
  if (!pieces.empty() && std::abs(prob_sum - 1.0) > 1e-6) {
    throw ValidationError("vocabulary: piece probabilities sum to " + format_double(prob_sum) +
                          ", expected 1");
  }
}

void UnigramVocabulary::finalize() {
  index.clear();
  max_piece_chars = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const std::u32string key = to_u32(pieces[i].first);
    index.emplace(key, static_cast<int>(kNumSpecialTokens + i));
    max_piece_chars = std::max(max_piece_chars, key.size());
  }
}

std::string UnigramVocabulary::to_json() const {
  nlohmann::ordered_json j;
  j["pieces"] = nlohmann::ordered_json::array();
  for (const auto& [text, logp] : pieces) {
    j["pieces"].push_back(nlohmann::ordered_json::array({text, logp}));
  }
  j["specials"] = {{"pad", kPadId}, {"unk", kUnkId}, {"mask", kMaskId},
                   {"cls", kClsId}, {"sep", kSepId}};
  j["word_marker"] = word_marker;
  return j.dump(2) + "\n";
}

UnigramVocabulary UnigramVocabulary::from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("vocabulary JSON parse error: ") + e.what());
  }
  if (!j.contains("pieces") || !j["pieces"].is_array()) {
    throw ValidationError("vocabulary JSON: missing 'pieces' array");
  }
  UnigramVocabulary vocab;
  vocab.word_marker = j.value("word_marker", true);
  for (const auto& entry : j["pieces"]) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() || !entry[1].is_number()) {
      throw ValidationError("vocabulary JSON: each piece must be [string, number]");
    }
    vocab.pieces.emplace_back(entry[0].get<std::string>(), entry[1].get<double>());
  }
  vocab.validate();
  vocab.finalize();
  return vocab;
}

UnigramVocabulary UnigramVocabulary::load(const std::string& path) {
  return from_json(read_file(path));
}

void UnigramVocabulary::save(const std::string& path) const { write_file(path, to_json()); }

UnigramVocabulary train_unigram(const std::vector<std::string>& corpus, std::size_t vocab_size,
                                std::uint64_t seed, const TrainOptions& options,
                                TrainDiagnostics* diagnostics) {
  (void)seed;  // the trainer is fully deterministic; the seed is recorded by callers
  if (corpus.empty()) throw ValidationError("train_unigram: corpus must be non-empty");
  const auto units = collect_units(corpus, options.word_marker);
  if (units.empty()) throw ValidationError("train_unigram: corpus has no usable text");

  // Character inventory (never pruned) and substring candidates.
  std::set<char32_t> char_set;
  for (const auto& [unit, count] : units) {
    (void)count;
    for (const char32_t c : unit) char_set.insert(c);
  }
  if (vocab_size < char_set.size() + kNumSpecialTokens) {
    throw ValidationError("train_unigram: vocab_size " + std::to_string(vocab_size) +
                          " too small for character coverage (" +
                          std::to_string(char_set.size() + kNumSpecialTokens) + " required)");
  }
  const std::size_t target_pieces = vocab_size - kNumSpecialTokens;

  std::map<std::u32string, std::int64_t> substring_counts;
  for (const auto& [unit, count] : units) {
    const std::size_t n = unit.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t max_j = std::min(n, i + options.max_piece_length);
      for (std::size_t j = i + 2; j <= max_j; ++j) {
        substring_counts[unit.substr(i, j - i)] += count;
      }
    }
  }
  // Keep the best seed substrings by count * length.
  std::vector<std::pair<std::u32string, std::int64_t>> ranked(substring_counts.begin(),
                                                              substring_counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    const std::int64_t sa = a.second * static_cast<std::int64_t>(a.first.size());
    const std::int64_t sb = b.second * static_cast<std::int64_t>(b.first.size());
    if (sa != sb) return sa > sb;
    return a.first < b.first;
  });
  const std::size_t seed_cap =
      std::max(target_pieces * options.seed_size_factor, char_set.size() + 16);
  if (ranked.size() > seed_cap) ranked.resize(seed_cap);

  std::vector<std::u32string> piece_text;
  std::vector<double> weights;
  std::vector<bool> is_char;
  for (const char32_t c : char_set) {
    piece_text.push_back(std::u32string(1, c));
    is_char.push_back(true);
    weights.push_back(1.0);
  }
  for (const auto& [text, count] : ranked) {
    if (text.size() == 1) continue;
    piece_text.push_back(text);
    is_char.push_back(false);
    // Seed weight = count * length, the same score used for seed ranking.
    weights.push_back(static_cast<double>(count) * static_cast<double>(text.size()));
  }
  // Character weights from raw frequencies.
  {
    std::map<char32_t, double> char_counts;
    for (const auto& [unit, count] : units) {
      for (const char32_t c : unit) char_counts[c] += static_cast<double>(count);
    }
    for (std::size_t i = 0; i < piece_text.size(); ++i) {
      if (is_char[i]) weights[i] = char_counts[piece_text[i][0]];
    }
  }

  auto normalize = [&](std::vector<double>& w) {
    // Floor keeps never-used pieces finite until they are pruned; summing the
    // floored values keeps the result a proper distribution.
    double total = 0.0;
    for (const double x : w) total += std::max(x, 1e-15);
    std::vector<double> log_probs(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      log_probs[i] = std::log(std::max(w[i], 1e-15) / total);
    }
    return log_probs;
  };

  std::size_t max_len = 1;
  for (const auto& t : piece_text) max_len = std::max(max_len, t.size());

  auto rebuild_index = [&]() {
    std::unordered_map<std::u32string, std::size_t> idx;
    idx.reserve(piece_text.size() * 2);
    for (std::size_t i = 0; i < piece_text.size(); ++i) idx.emplace(piece_text[i], i);
    return idx;
  };

  std::vector<double> log_probs = normalize(weights);
  std::vector<double> expected(piece_text.size());

  auto run_em = [&](int iterations) {
    auto idx = rebuild_index();
    for (int it = 0; it < iterations; ++it) {
      expected.assign(piece_text.size(), 0.0);
      const double ll = e_step(units, idx, log_probs, max_len, expected);
      if (diagnostics) diagnostics->em_trace.emplace_back(piece_text.size(), ll);
      log_probs = normalize(expected);
    }
  };

  while (true) {
    run_em(options.em_iterations_per_round);
    if (piece_text.size() <= target_pieces) break;

    // Utility of a piece: expected count times how much worse its own string
    // segments without it. Characters are never pruned.
    auto idx = rebuild_index();
    std::vector<std::pair<double, std::size_t>> utilities;
    std::size_t prunable = 0;
    for (std::size_t i = 0; i < piece_text.size(); ++i) {
      if (is_char[i]) continue;
      ++prunable;
      const double alt = viterbi_score_excluding(piece_text[i], idx, log_probs, max_len, i);
      const double utility =
          alt == kNegInf ? std::numeric_limits<double>::max()
                         : std::max(expected[i], 0.0) * (log_probs[i] - alt);
      utilities.emplace_back(utility, i);
    }
    const std::size_t excess = piece_text.size() - target_pieces;
    std::size_t prune_n = std::max<std::size_t>(
        1, static_cast<std::size_t>(static_cast<double>(prunable) * options.prune_fraction));
    prune_n = std::min(prune_n, excess);
    prune_n = std::min(prune_n, prunable);
    if (prune_n == 0) break;
    std::stable_sort(utilities.begin(), utilities.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return piece_text[a.second] < piece_text[b.second];
    });
    std::vector<bool> drop(piece_text.size(), false);
    for (std::size_t k = 0; k < prune_n; ++k) drop[utilities[k].second] = true;

    std::vector<std::u32string> new_text;
    std::vector<double> new_weights;
    std::vector<bool> new_is_char;
    for (std::size_t i = 0; i < piece_text.size(); ++i) {
      if (drop[i]) continue;
      new_text.push_back(std::move(piece_text[i]));
      new_weights.push_back(std::max(expected[i], 1e-15));
      new_is_char.push_back(is_char[i]);
    }
    piece_text = std::move(new_text);
    is_char = std::move(new_is_char);
    log_probs = normalize(new_weights);
    expected.assign(piece_text.size(), 0.0);
    max_len = 1;
    for (const auto& t : piece_text) max_len = std::max(max_len, t.size());
  }

  run_em(options.final_em_iterations);

  UnigramVocabulary vocab;
  vocab.word_marker = options.word_marker;
  std::vector<std::size_t> order(piece_text.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (log_probs[a] != log_probs[b]) return log_probs[a] > log_probs[b];
    return piece_text[a] < piece_text[b];
  });
  for (const std::size_t i : order) {
    vocab.pieces.emplace_back(to_utf8(piece_text[i]), log_probs[i]);
  }
  vocab.validate();
  vocab.finalize();
  return vocab;
}

namespace {

void viterbi_unit(const std::u32string& unit, const UnigramVocabulary& vocab,
                  std::vector<int>& out) {
  const std::size_t n = unit.size();
  const std::size_t max_len = std::max<std::size_t>(vocab.max_piece_chars, 1);
  std::vector<double> best(n + 1, kNegInf);
  std::vector<int> back_id(n + 1, -1);
  std::vector<std::size_t> back_pos(n + 1, 0);
  best[0] = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t lo = j > max_len ? j - max_len : 0;
    for (std::size_t i = lo; i < j; ++i) {
      if (best[i] == kNegInf) continue;
      const auto it = vocab.index.find(unit.substr(i, j - i));
      if (it == vocab.index.end()) continue;
      const double score = best[i] + vocab.piece_log_prob(it->second);
      if (score > best[j]) {
        best[j] = score;
        back_id[j] = it->second;
        back_pos[j] = i;
      }
    }
    // UNK edge covers exactly one character.
    if (best[j - 1] != kNegInf && best[j - 1] + kUnkLogProb > best[j]) {
      best[j] = best[j - 1] + kUnkLogProb;
      back_id[j] = kUnkId;
      back_pos[j] = j - 1;
    }
  }
  std::vector<int> reversed;
  std::size_t pos = n;
  while (pos > 0) {
    reversed.push_back(back_id[pos]);
    pos = back_pos[pos];
  }
  out.insert(out.end(), reversed.rbegin(), reversed.rend());
}

}  // namespace

std::vector<int> segment(std::string_view text, const UnigramVocabulary& vocab) {
  std::vector<int> out;
  if (vocab.word_marker) {
    for (const std::string& word : split_whitespace(text)) {
      std::u32string unit;
      unit.push_back(kBoundaryMarker);
      unit += to_u32(word);
      viterbi_unit(unit, vocab, out);
    }
  } else {
    if (!text.empty()) viterbi_unit(to_u32(text), vocab, out);
  }
  return out;
}

double segmentation_score(const std::vector<int>& ids, const UnigramVocabulary& vocab) {
  double score = 0.0;
  for (const int id : ids) score += vocab.piece_log_prob(id);
  return score;
}

OverlapReport lexical_overlap(const std::vector<std::string>& texts_a,
                              const std::vector<std::string>& texts_b,
                              const UnigramVocabulary& vocab, std::size_t sample_size,
                              std::uint64_t seed) {
  if (texts_a.empty() || texts_b.empty()) {
    throw ValidationError("lexical_overlap: both corpora must be non-empty");
  }
  auto type_set = [&](const std::vector<std::string>& texts) {
    std::vector<std::size_t> indices(texts.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    if (texts.size() > sample_size) {
      // Sample indices as a function of (seed, side size) only, so swapping
      // the corpus arguments swaps the samples and the report is symmetric.
      Rng rng(derive_seed(seed, texts.size()));
      for (std::size_t i = 0; i < sample_size; ++i) {
        const std::size_t j = i + rng.index_below(indices.size() - i);
        std::swap(indices[i], indices[j]);
      }
      indices.resize(sample_size);
    }
    std::set<int> types;
    for (const std::size_t i : indices) {
      for (const int id : segment(texts[i], vocab)) {
        if (id >= kNumSpecialTokens) types.insert(id);
      }
    }
    return types;
  };
  const std::set<int> types_a = type_set(texts_a);
  const std::set<int> types_b = type_set(texts_b);
  OverlapReport report;
  for (const int id : types_a) {
    if (types_b.count(id)) ++report.shared_types;
  }
  report.total_types = types_a.size() + types_b.size() - report.shared_types;
  report.ratio = report.total_types == 0
                     ? 1.0
                     : static_cast<double>(report.shared_types) / static_cast<double>(report.total_types);
  return report;
}

}  // namespace xlit
