#include "xlit/utf8.hpp"

#include <array>
#include <unordered_map>

#include "xlit/errors.hpp"

namespace xlit {

namespace {

[[noreturn]] void bad_byte(std::size_t offset, const char* why) {
  throw EncodingError("invalid UTF-8 at byte offset " + std::to_string(offset) + ": " + why);
}

}  // namespace

char32_t decode_utf8_at(std::string_view s, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  const std::size_t start = pos;
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int len;
  char32_t cp;
  if ((b0 & 0xe0) == 0xc0) {
    len = 2;
    cp = b0 & 0x1f;
  } else if ((b0 & 0xf0) == 0xe0) {
    len = 3;
    cp = b0 & 0x0f;
  } else if ((b0 & 0xf8) == 0xf0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    bad_byte(start, "invalid lead byte");
  }
  if (start + static_cast<std::size_t>(len) > s.size()) bad_byte(start, "truncated sequence");
  for (int i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[start + static_cast<std::size_t>(i)]);
    if ((b & 0xc0) != 0x80) bad_byte(start + static_cast<std::size_t>(i), "expected continuation byte");
    cp = (cp << 6) | (b & 0x3f);
  }
  static constexpr std::array<char32_t, 5> kMin = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[static_cast<std::size_t>(len)]) bad_byte(start, "overlong encoding");
  if (cp >= 0xd800 && cp <= 0xdfff) bad_byte(start, "surrogate codepoint");
  if (cp > 0x10ffff) bad_byte(start, "codepoint out of range");
  pos = start + static_cast<std::size_t>(len);
  return cp;
}

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t pos = 0;
  while (pos < s.size()) out.push_back(decode_utf8_at(s, pos));
  return out;
}

bool is_valid_utf8(std::string_view s) {
  try {
    std::size_t pos = 0;
    while (pos < s.size()) decode_utf8_at(s, pos);
    return true;
  } catch (const EncodingError&) {
    return false;
  }
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
  std::string out;
  out.reserve(cps.size() * 2);
  for (const char32_t cp : cps) append_utf8(out, cp);
  return out;
}

namespace {

// (base << 21 | mark) -> precomposed. Covers the Latin letters used by the
// shipped diacritic tables, Cyrillic breve/diaeresis letters, and Arabic
// alef forms.
const std::unordered_map<std::uint64_t, char32_t>& composition_table() {
  static const auto* table = [] {
    auto* t = new std::unordered_map<std::uint64_t, char32_t>();
    auto add = [&](char32_t base, char32_t mark, char32_t composed) {
      (*t)[(static_cast<std::uint64_t>(base) << 21) | mark] = composed;
    };
    struct MarkSet {
      char32_t mark;
      const char* pairs;  // alternating base, composed as UTF-8? kept as arrays below instead
    };
    // grave U+0300
    const std::pair<char32_t, char32_t> grave[] = {{U'a', 0xe0},  {U'e', 0xe8},  {U'i', 0xec},
                                                   {U'o', 0xf2},  {U'u', 0xf9},  {U'A', 0xc0},
                                                   {U'E', 0xc8},  {U'I', 0xcc},  {U'O', 0xd2},
                                                   {U'U', 0xd9},  {U'n', 0x1f9}, {U'N', 0x1f8}};
    for (auto [b, c] : grave) add(b, 0x300, c);
    // acute U+0301
    const std::pair<char32_t, char32_t> acute[] = {
        {U'a', 0xe1},  {U'e', 0xe9},  {U'i', 0xed},  {U'o', 0xf3},  {U'u', 0xfa},  {U'y', 0xfd},
        {U'c', 0x107}, {U'l', 0x13a}, {U'n', 0x144}, {U'r', 0x155}, {U's', 0x15b}, {U'z', 0x17a},
        {U'A', 0xc1},  {U'E', 0xc9},  {U'I', 0xcd},  {U'O', 0xd3},  {U'U', 0xda},  {U'Y', 0xdd},
        {U'C', 0x106}, {U'L', 0x139}, {U'N', 0x143}, {U'R', 0x154}, {U'S', 0x15a}, {U'Z', 0x179},
        {0x433, 0x453}, {0x413, 0x403}, {0x43a, 0x45c}, {0x41a, 0x40c}};
    for (auto [b, c] : acute) add(b, 0x301, c);
    // circumflex U+0302
    const std::pair<char32_t, char32_t> circ[] = {{U'a', 0xe2}, {U'e', 0xea}, {U'i', 0xee},
                                                  {U'o', 0xf4}, {U'u', 0xfb}, {U'A', 0xc2},
                                                  {U'E', 0xca}, {U'I', 0xce}, {U'O', 0xd4},
                                                  {U'U', 0xdb}};
    for (auto [b, c] : circ) add(b, 0x302, c);
    // tilde U+0303
    const std::pair<char32_t, char32_t> tilde[] = {{U'a', 0xe3}, {U'n', 0xf1}, {U'o', 0xf5},
                                                   {U'A', 0xc3}, {U'N', 0xd1}, {U'O', 0xd5}};
    for (auto [b, c] : tilde) add(b, 0x303, c);
    // macron U+0304
    const std::pair<char32_t, char32_t> macron[] = {{U'a', 0x101}, {U'e', 0x113}, {U'i', 0x12b},
                                                    {U'o', 0x14d}, {U'u', 0x16b}, {U'A', 0x100},
                                                    {U'E', 0x112}, {U'I', 0x12a}, {U'O', 0x14c},
                                                    {U'U', 0x16a}};
    for (auto [b, c] : macron) add(b, 0x304, c);
    // breve U+0306
    const std::pair<char32_t, char32_t> breve[] = {{U'a', 0x103},  {U'g', 0x11f},  {U'A', 0x102},
                                                   {U'G', 0x11e},  {0x438, 0x439}, {0x418, 0x419},
                                                   {0x443, 0x45e}, {0x423, 0x40e}};
    for (auto [b, c] : breve) add(b, 0x306, c);
    // dot above U+0307
    const std::pair<char32_t, char32_t> dot[] = {{U'z', 0x17c}, {U'Z', 0x17b}, {U'e', 0x117},
                                                 {U'E', 0x116}, {U'c', 0x10b}, {U'C', 0x10a}};
    for (auto [b, c] : dot) add(b, 0x307, c);
    // diaeresis U+0308
    const std::pair<char32_t, char32_t> diaeresis[] = {
        {U'a', 0xe4},   {U'e', 0xeb},   {U'i', 0xef},   {U'o', 0xf6},   {U'u', 0xfc},
        {U'y', 0xff},   {U'A', 0xc4},   {U'E', 0xcb},   {U'I', 0xcf},   {U'O', 0xd6},
        {U'U', 0xdc},   {0x435, 0x451}, {0x415, 0x401}, {0x456, 0x457}, {0x406, 0x407}};
    for (auto [b, c] : diaeresis) add(b, 0x308, c);
    // ring above U+030A
    add(U'a', 0x30a, 0xe5);
    add(U'A', 0x30a, 0xc5);
    add(U'u', 0x30a, 0x16f);
    add(U'U', 0x30a, 0x16e);
    // caron U+030C
    const std::pair<char32_t, char32_t> caron[] = {{U'c', 0x10d}, {U'd', 0x10f}, {U'e', 0x11b},
                                                   {U'n', 0x148}, {U'r', 0x159}, {U's', 0x161},
                                                   {U't', 0x165}, {U'z', 0x17e}, {U'C', 0x10c},
                                                   {U'D', 0x10e}, {U'E', 0x11a}, {U'N', 0x147},
                                                   {U'R', 0x158}, {U'S', 0x160}, {U'T', 0x164},
                                                   {U'Z', 0x17d}};
    for (auto [b, c] : caron) add(b, 0x30c, c);
    // cedilla U+0327
    const std::pair<char32_t, char32_t> cedilla[] = {{U'c', 0xe7},  {U'C', 0xc7},
                                                     {U's', 0x15f}, {U'S', 0x15e},
                                                     {U't', 0x163}, {U'T', 0x162}};
    for (auto [b, c] : cedilla) add(b, 0x327, c);
    // ogonek U+0328
    const std::pair<char32_t, char32_t> ogonek[] = {{U'a', 0x105}, {U'e', 0x119},
                                                    {U'A', 0x104}, {U'E', 0x118},
                                                    {U'u', 0x173}, {U'U', 0x172}};
    for (auto [b, c] : ogonek) add(b, 0x328, c);
    // Arabic alef with madda / hamza above / hamza below
    add(0x627, 0x653, 0x622);
    add(0x627, 0x654, 0x623);
    add(0x627, 0x655, 0x625);
    add(0x648, 0x654, 0x624);
    add(0x64a, 0x654, 0x626);
    return t;
  }();
  return *table;
}

}  // namespace

std::string nfc_compose(std::string_view s) {
  const auto& table = composition_table();
  std::vector<char32_t> cps = decode_utf8(s);
  std::vector<char32_t> out;
  out.reserve(cps.size());
  for (const char32_t cp : cps) {
    if (!out.empty()) {
      const auto it = table.find((static_cast<std::uint64_t>(out.back()) << 21) | cp);
      if (it != table.end()) {
        out.back() = it->second;
        continue;
      }
    }
    out.push_back(cp);
  }
  return encode_utf8(out);
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
  };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == '\n')) ++i;
    std::size_t j = i;
    while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\r' || s[j] == '\n')) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string truncate_tokens(std::string_view s, std::size_t max_tokens) {
  const std::vector<std::string> tokens = split_whitespace(s);
  if (tokens.size() <= max_tokens) return std::string(s);
  std::string out;
  for (std::size_t i = 0; i < max_tokens; ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace xlit
