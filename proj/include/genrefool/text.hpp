#pragma once

// Tokenization with byte spans, case handling and span-faithful edits.
//
// Word tokens are maximal runs of letters and digits, with apostrophes
// allowed between two such characters ("don't"). A token counts as a word
// only if it contains at least one letter, so "5" is emitted as a non-word
// token. Every other non-space code point becomes its own non-word token.
// Whitespace is never part of a token.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "genrefool/error.hpp"

namespace genrefool {

namespace utf8 {

struct Decoded {
  char32_t cp;
  std::size_t len;
};

// Invalid sequences decode to U+FFFD with length 1 so spans stay byte exact.
inline Decoded decode(std::string_view s, std::size_t i) noexcept {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) return {b0, 1};
  if ((b0 & 0xE0) == 0xC0 && b0 >= 0xC2) {
    const int c1 = cont(1);
    if (c1 >= 0) return {static_cast<char32_t>(((b0 & 0x1F) << 6) | c1), 2};
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      const char32_t cp = ((b0 & 0x0F) << 12) | (c1 << 6) | c2;
      if (cp >= 0x800 && (cp < 0xD800 || cp > 0xDFFF)) return {cp, 3};
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      const char32_t cp = ((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3;
      if (cp >= 0x10000 && cp <= 0x10FFFF) return {cp, 4};
    }
  }
  return {0xFFFD, 1};
}

inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace utf8

namespace unicode {

inline bool is_space(char32_t c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f' ||
         c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) ||
         c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

inline bool is_digit(char32_t c) noexcept { return c >= '0' && c <= '9'; }

// Alphabetic ranges for the scripts the toolkit targets (Latin, Greek,
// Cyrillic) plus the main blocks of a few others. Not a full UCD table.
inline bool is_letter(char32_t c) noexcept {
  if (c < 0x80) return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
  if (c == 0xAA || c == 0xB5 || c == 0xBA) return true;
  if (c >= 0xC0 && c <= 0x24F) return c != 0xD7 && c != 0xF7;
  if (c >= 0x250 && c <= 0x2AF) return true;   // IPA
  if (c >= 0x370 && c <= 0x3FF) return c != 0x375 && c != 0x37E && c != 0x384 && c != 0x385 && c != 0x387;
  if (c >= 0x400 && c <= 0x52F) return !(c >= 0x482 && c <= 0x489);
  if (c >= 0x531 && c <= 0x587) return true;   // Armenian
  if (c >= 0x5D0 && c <= 0x5EA) return true;   // Hebrew
  if (c >= 0x620 && c <= 0x64A) return true;   // Arabic
  if (c >= 0x1E00 && c <= 0x1FFF) return true; // Latin/Greek extended
  if (c >= 0x3040 && c <= 0x30FF) return true; // kana
  if (c >= 0x4E00 && c <= 0x9FFF) return true; // CJK
  if (c >= 0xAC00 && c <= 0xD7A3) return true; // Hangul
  return false;
}

inline bool is_apostrophe(char32_t c) noexcept { return c == '\'' || c == 0x2019; }

inline char32_t to_lower(char32_t c) noexcept {
  if (c >= 'A' && c <= 'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c == 0x178) return 0xFF;
  if (c >= 0x100 && c <= 0x17F && c != 0x130 && c != 0x138 && c != 0x178 && c != 0x149 && c != 0x17F) {
    const bool even_upper = !((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E));
    if (even_upper ? (c % 2 == 0) : (c % 2 == 1)) return c + 1;
    return c;
  }
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  if (c >= 0x460 && c <= 0x4FF && c % 2 == 0 && !(c >= 0x482 && c <= 0x489)) return c + 1;
  return c;
}

inline char32_t to_upper(char32_t c) noexcept {
  if (c >= 'a' && c <= 'z') return c - 32;
  if (c >= 0xE0 && c <= 0xFE && c != 0xF7) return c - 32;
  if (c == 0xFF) return 0x178;
  if (c >= 0x100 && c <= 0x17F && c != 0x131 && c != 0x138 && c != 0x178 && c != 0x149 && c != 0x17F) {
    const bool even_upper = !((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E));
    if (even_upper ? (c % 2 == 1) : (c % 2 == 0)) return c - 1;
    return c;
  }
  if (c >= 0x3B1 && c <= 0x3CB && c != 0x3C2) return c - 32;
  if (c >= 0x430 && c <= 0x44F) return c - 32;
  if (c >= 0x450 && c <= 0x45F) return c - 80;
  if (c >= 0x461 && c <= 0x4FF && c % 2 == 1 && !(c >= 0x482 && c <= 0x489)) return c - 1;
  return c;
}

inline bool is_upper(char32_t c) noexcept { return to_lower(c) != c; }
inline bool is_lower(char32_t c) noexcept { return to_upper(c) != c; }

}  // namespace unicode

template <typename Fn>
std::string map_codepoints(std::string_view s, Fn&& fn) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto d = utf8::decode(s, i);
    if (d.cp == 0xFFFD && d.len == 1 && static_cast<unsigned char>(s[i]) >= 0x80) {
      out.push_back(s[i]);  // keep invalid bytes verbatim
    } else {
      utf8::append(out, fn(d.cp));
    }
    i += d.len;
  }
  return out;
}

inline std::string to_lower(std::string_view s) { return map_codepoints(s, unicode::to_lower); }
inline std::string to_upper(std::string_view s) { return map_codepoints(s, unicode::to_upper); }

inline std::string_view trim(std::string_view s) noexcept {
  std::size_t b = 0, e = s.size();
  while (b < e) {
    const auto d = utf8::decode(s, b);
    if (!unicode::is_space(d.cp)) break;
    b += d.len;
  }
  while (e > b) {
    std::size_t start = e - 1;
    while (start > b && (static_cast<unsigned char>(s[start]) & 0xC0) == 0x80) --start;
    const auto d = utf8::decode(s, start);
    if (!unicode::is_space(d.cp)) break;
    e = start;
  }
  return s.substr(b, e - b);
}

struct Token {
  std::string surface;
  std::size_t start = 0;  // byte offset
  std::size_t end = 0;    // one past the last byte
  bool is_word = false;
  std::string lower;

  bool operator==(const Token&) const = default;
};

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  auto word_char = [](char32_t c) { return unicode::is_letter(c) || unicode::is_digit(c); };

  std::size_t i = 0;
  while (i < text.size()) {
    const auto d = utf8::decode(text, i);
    if (unicode::is_space(d.cp)) {
      i += d.len;
      continue;
    }
    Token tok;
    tok.start = i;
    if (word_char(d.cp)) {
      bool has_letter = unicode::is_letter(d.cp);
      std::size_t j = i + d.len;
      while (j < text.size()) {
        const auto n = utf8::decode(text, j);
        if (word_char(n.cp)) {
          has_letter = has_letter || unicode::is_letter(n.cp);
          j += n.len;
          continue;
        }
        if (unicode::is_apostrophe(n.cp) && j + n.len < text.size()) {
          const auto after = utf8::decode(text, j + n.len);
          if (word_char(after.cp)) {
            j += n.len;
            continue;
          }
        }
        break;
      }
      tok.end = j;
      tok.is_word = has_letter;
    } else {
      tok.end = i + d.len;
      tok.is_word = false;
    }
    tok.surface = std::string(text.substr(tok.start, tok.end - tok.start));
    tok.lower = to_lower(tok.surface);
    tokens.push_back(std::move(tok));
    i = tokens.back().end;
  }
  return tokens;
}

inline std::size_t count_words(const std::vector<Token>& tokens) noexcept {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const Token& t) { return t.is_word; }));
}

struct TokenEdit {
  std::size_t index;
  std::string surface;
};

// Rewrites the byte range of each edited token, leaving every other byte
// untouched. Edits are applied right-to-left so earlier offsets stay valid.
inline std::string replace_tokens(std::string_view text, const std::vector<Token>& tokens,
                                  std::vector<TokenEdit> edits) {
  std::sort(edits.begin(), edits.end(),
            [](const TokenEdit& a, const TokenEdit& b) { return a.index > b.index; });
  for (std::size_t i = 0; i < edits.size(); ++i) {
    if (edits[i].index >= tokens.size())
      throw Error("token index " + std::to_string(edits[i].index) + " out of range (" +
                  std::to_string(tokens.size()) + " tokens)");
    if (i > 0 && edits[i].index == edits[i - 1].index)
      throw Error("duplicate edit for token " + std::to_string(edits[i].index));
    if (edits[i].surface.empty()) throw Error("empty replacement surface");
  }
  std::string out(text);
  for (const auto& e : edits) {
    const Token& t = tokens[e.index];
    out.replace(t.start, t.end - t.start, e.surface);
  }
  return out;
}

inline std::string replace_tokens(std::string_view text, std::vector<TokenEdit> edits) {
  return replace_tokens(text, tokenize(text), std::move(edits));
}

// Removes a token plus one adjacent whitespace character, so that deleting
// a word never leaves a doubled space behind.
inline std::string delete_token(std::string_view text, const Token& tok) {
  std::size_t b = tok.start, e = tok.end;
  auto ascii_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  if (b > 0 && ascii_space(text[b - 1])) {
    --b;
  } else if (e < text.size() && ascii_space(text[e])) {
    ++e;
  }
  std::string out;
  out.reserve(text.size() - (e - b));
  out.append(text.substr(0, b));
  out.append(text.substr(e));
  return out;
}

// Carries the casing pattern of `original` onto `replacement`: all-caps
// (two or more cased letters, none lowercase) upper-cases it, a leading
// capital capitalizes it, anything else leaves it as is.
inline std::string match_case(std::string_view original, std::string_view replacement) {
  std::size_t uppers = 0, lowers = 0;
  bool first_upper = false, seen_first = false;
  for (std::size_t i = 0; i < original.size();) {
    const auto d = utf8::decode(original, i);
    if (unicode::is_upper(d.cp)) ++uppers;
    if (unicode::is_lower(d.cp)) ++lowers;
    if (!seen_first && unicode::is_letter(d.cp)) {
      seen_first = true;
      first_upper = unicode::is_upper(d.cp);
    }
    i += d.len;
  }
  if (uppers >= 2 && lowers == 0) return to_upper(replacement);
  if (first_upper && !replacement.empty()) {
    const auto d = utf8::decode(replacement, 0);
    std::string out;
    utf8::append(out, unicode::to_upper(d.cp));
    out.append(replacement.substr(d.len));
    return out;
  }
  return std::string(replacement);
}

class StopWordList {
 public:
  StopWordList() = default;
  StopWordList(std::unordered_set<std::string> words, std::string language)
      : words_(std::move(words)), language_(std::move(language)) {}

  // Lookup is exact on the case-folded form.
  bool contains(std::string_view lower) const { return words_.count(std::string(lower)) > 0; }
  std::size_t size() const noexcept { return words_.size(); }
  const std::string& language() const noexcept { return language_; }

 private:
  std::unordered_set<std::string> words_;
  std::string language_;
};

// One word per line, '#' starts a comment, blank lines ignored.
inline StopWordList parse_stopwords(std::istream& in, std::string language) {
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto w = trim(line);
    if (!w.empty()) words.insert(to_lower(w));
  }
  return StopWordList(std::move(words), std::move(language));
}

inline StopWordList load_stopwords(const std::string& path, std::string language = "custom") {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stop-word file " + path);
  return parse_stopwords(in, std::move(language));
}

}  // namespace genrefool
