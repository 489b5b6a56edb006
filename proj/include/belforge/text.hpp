#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace belforge::text {

std::string_view trim(std::string_view s);

// Collapses every whitespace run to one space and trims both ends.
std::string collapse_whitespace(std::string_view s);

// Splits on a single-character delimiter, keeping empty fields.
std::vector<std::string_view> split(std::string_view s, char delim);

// Splits on a multi-character delimiter, keeping empty fields.
std::vector<std::string_view> split(std::string_view s, std::string_view delim);

bool is_space(char c);

// UTF-8 decoding. Invalid bytes decode to U+FFFD one byte at a time, so the
// decoder never throws and always makes progress.
std::vector<char32_t> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(const std::u32string& cps);

// Simple case mapping for ASCII, Latin-1 Supplement and Latin Extended-A.
// Code points outside those blocks are returned unchanged.
char32_t to_lower(char32_t cp);
char32_t to_upper(char32_t cp);
bool is_upper(char32_t cp);
bool is_digit(char32_t cp);

std::string to_lower(std::string_view s);

// Lower-cases only the first code point.
std::string lower_first(std::string_view s);

// 64-bit FNV-1a over the raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

// Accepts `C` followed by exactly seven ASCII digits.
bool is_cui(std::string_view s);

// Accepts `T` followed by exactly three ASCII digits.
bool is_tui(std::string_view s);

// Accepts `Q` followed by one or more ASCII digits.
bool is_qid(std::string_view s);

// Whitespace-separated token count.
std::int64_t count_tokens(std::string_view s);

}  // namespace belforge::text
