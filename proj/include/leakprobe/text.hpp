#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Byte-level text helpers shared by the corpus and PII modules. Everything
// here treats whitespace and case as ASCII; non-ASCII bytes are word bytes.
namespace leakprobe::text {

inline bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

/// Bytes that glue into a token for whole-token matching: ASCII letters and
/// digits, plus every byte of a multi-byte UTF-8 sequence.
inline bool is_word_byte(unsigned char c) { return is_alpha(c) || is_digit(c) || c >= 0x80; }

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string to_lower_ascii(std::string_view s);
std::string_view trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);

bool is_valid_utf8(std::string_view s);
std::size_t utf8_length(std::string_view s);

/// Byte offset of each code point start, followed by s.size(). Size is
/// utf8_length(s) + 1. Requires valid UTF-8.
std::vector<std::size_t> utf8_offsets(std::string_view s);

/// Substring covering code points [start, end).
std::string_view utf8_slice(std::string_view s, std::size_t start, std::size_t end);

/// Byte spans of whitespace-delimited tokens.
std::vector<std::pair<std::size_t, std::size_t>> word_spans(std::string_view s);

std::size_t count_words(std::string_view s);

/// Number of maximal segments ending at '.', '!', '?' or end of text that
/// hold at least one whitespace-delimited word.
std::size_t count_sentences(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);

}  // namespace leakprobe::text
