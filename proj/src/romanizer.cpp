#include "xlit/romanizer.hpp"

#include <algorithm>

#include "xlit/errors.hpp"
#include "xlit/io_util.hpp"
#include "xlit/utf8.hpp"

namespace xlit {

RuleTable::RuleTable(std::string name, std::vector<std::pair<std::string, std::string>> rules,
                     Fallback fallback)
    : name_(std::move(name)), rules_(std::move(rules)), fallback_(fallback) {
  by_source_.reserve(rules_.size());
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const auto& [source, target] = rules_[i];
    if (source.empty()) {
      throw ValidationError("rule table '" + name_ + "': rule " + std::to_string(i + 1) +
                            " has an empty source");
    }
    if (!is_valid_utf8(source)) {
      throw ValidationError("rule table '" + name_ + "': rule " + std::to_string(i + 1) +
                            " has a malformed source");
    }
    for (const char32_t c : decode_utf8(target)) {
      if (!is_latin_target_char(c)) {
        throw ValidationError("rule table '" + name_ + "': rule " + std::to_string(i + 1) +
                              " target contains a non-Latin character");
      }
    }
    if (!by_source_.emplace(source, i).second) {
      throw ValidationError("rule table '" + name_ + "': duplicate source in rule " +
                            std::to_string(i + 1));
    }
    max_target_chars_ = std::max(max_target_chars_, decode_utf8(target).size());
  }
  for (const auto& [source, idx] : by_source_) {
    (void)idx;
    if (std::find(source_lengths_.begin(), source_lengths_.end(), source.size()) ==
        source_lengths_.end()) {
      source_lengths_.push_back(source.size());
    }
  }
  std::sort(source_lengths_.rbegin(), source_lengths_.rend());
}

std::size_t RuleTable::match_at(std::string_view text, std::size_t pos) const {
  for (const std::size_t len : source_lengths_) {
    if (pos + len > text.size()) continue;
    const auto it = by_source_.find(std::string(text.substr(pos, len)));
    if (it != by_source_.end()) return it->second;
  }
  return npos;
}

RuleTable parse_rules(std::string_view tsv, std::string name, Fallback fallback) {
  std::vector<std::pair<std::string, std::string>> rules;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= tsv.size()) {
    std::size_t end = tsv.find('\n', start);
    if (end == std::string_view::npos) end = tsv.size();
    std::string_view line = tsv.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') {
      if (start > tsv.size()) break;
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ValidationError("rule file '" + name + "' line " + std::to_string(line_no) +
                            ": expected source<TAB>target");
    }
    std::string source(line.substr(0, tab));
    std::string target(line.substr(tab + 1));
    for (const auto& [prev_source, prev_target] : rules) {
      (void)prev_target;
      if (prev_source == source) {
        throw ValidationError("rule file '" + name + "' line " + std::to_string(line_no) +
                              ": duplicate source '" + source + "'");
      }
    }
    for (const char32_t c : decode_utf8(target)) {
      if (!is_latin_target_char(c)) {
        throw ValidationError("rule file '" + name + "' line " + std::to_string(line_no) +
                              ": target contains a non-Latin character");
      }
    }
    rules.emplace_back(std::move(source), std::move(target));
    if (start > tsv.size()) break;
  }
  return RuleTable(std::move(name), std::move(rules), fallback);
}

RuleTable load_rules(const std::string& path, Fallback fallback) {
  return parse_rules(read_file(path), path, fallback);
}

std::string transliterate(std::string_view text, const RuleTable& rules) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t rule = rules.match_at(text, pos);
    if (rule != RuleTable::npos) {
      const auto& [source, target] = rules.rules()[rule];
      out += target;
      pos += source.size();
      continue;
    }
    const std::size_t char_start = pos;
    decode_utf8_at(text, pos);
    if (rules.fallback() == Fallback::kPassThrough) {
      out.append(text.substr(char_start, pos - char_start));
    }
  }
  return out;
}

}  // namespace xlit
