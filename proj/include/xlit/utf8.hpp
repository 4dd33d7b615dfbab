#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace xlit {

/// Decodes one UTF-8 codepoint at byte offset `pos`. Returns the codepoint and
/// advances `pos` past it. Throws EncodingError naming the byte offset on
/// malformed input (overlong forms, stray continuation bytes, surrogates).
char32_t decode_utf8_at(std::string_view s, std::size_t& pos);

/// Full-string decode. Throws EncodingError with the offending byte offset.
std::vector<char32_t> decode_utf8(std::string_view s);

/// Returns false instead of throwing.
bool is_valid_utf8(std::string_view s);

void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

/// Canonical composition over a curated table: precomposed Latin letters with
/// their combining diacritics, plus the Cyrillic breve/diaeresis letters and a
/// few Arabic madda/hamza forms. Sequences outside the table pass through
/// unchanged; no canonical reordering is attempted.
std::string nfc_compose(std::string_view s);

/// Strips ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

/// Splits on runs of ASCII whitespace; no empty tokens.
std::vector<std::string> split_whitespace(std::string_view s);

/// Truncates to at most `max_tokens` whitespace-separated tokens, rejoined
/// with single spaces. Fewer tokens pass through as-is (not rejoined).
std::string truncate_tokens(std::string_view s, std::size_t max_tokens);

inline bool is_ascii_letter(char32_t c) {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
}
inline bool is_ascii_digit(char32_t c) { return c >= U'0' && c <= U'9'; }
inline bool is_ascii_punct(char32_t c) {
  return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) ||
         (c >= 0x5b && c <= 0x60) || (c >= 0x7b && c <= 0x7e);
}

/// True when c is acceptable in a romanizer target: Latin letter, ASCII digit,
/// ASCII punctuation, or space.
inline bool is_latin_target_char(char32_t c) {
  return c == U' ' || is_ascii_letter(c) || is_ascii_digit(c) || is_ascii_punct(c);
}

}  // namespace xlit
