#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace xlit {

enum class Fallback {
  kPassThrough,  // unmapped characters are copied to the output
  kDrop,         // unmapped characters are omitted
};

/// An ordered rewrite table. Matching is left-to-right, longest source
/// sequence first; among sources of equal length the earlier rule wins.
/// Targets are restricted to Latin letters, ASCII digits, punctuation, and
/// space.
class RuleTable {
 public:
  RuleTable() = default;
  RuleTable(std::string name, std::vector<std::pair<std::string, std::string>> rules,
            Fallback fallback = Fallback::kPassThrough);

  const std::string& name() const { return name_; }
  Fallback fallback() const { return fallback_; }
  const std::vector<std::pair<std::string, std::string>>& rules() const { return rules_; }
  std::size_t max_target_chars() const { return max_target_chars_; }

  /// Longest match starting at byte `pos`; returns rule index or npos.
  std::size_t match_at(std::string_view text, std::size_t pos) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::string>> rules_;
  Fallback fallback_ = Fallback::kPassThrough;
  std::vector<std::size_t> source_lengths_;  // distinct source byte lengths, descending
  std::unordered_map<std::string, std::size_t> by_source_;
  std::size_t max_target_chars_ = 0;
};

/// Parses a rule table from TSV text: "source<TAB>target" per line, '#'
/// comment lines and blank lines skipped. Validates RuleTable invariants and
/// names the offending line on failure.
RuleTable parse_rules(std::string_view tsv, std::string name,
                      Fallback fallback = Fallback::kPassThrough);

RuleTable load_rules(const std::string& path, Fallback fallback = Fallback::kPassThrough);

/// Applies `rules` to NFC text, left to right. Deterministic and total.
std::string transliterate(std::string_view text, const RuleTable& rules);

}  // namespace xlit
