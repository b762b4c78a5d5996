#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace qac::text {

/// Lowercase (ASCII), collapse whitespace runs to one space, trim both ends.
std::string normalize(std::string_view s);

/// Like normalize() but a trailing whitespace run survives as a single
/// space: "machine " is a meaningful prefix distinct from "machine".
std::string normalize_prefix(std::string_view s);

bool is_space(char c);

/// Byte offsets of every UTF-8 code point start, plus s.size() at the end.
/// Invalid lead bytes count as one-byte code points.
std::vector<std::size_t> codepoint_offsets(std::string_view s);

std::vector<std::string> split_codepoints(std::string_view s);

std::size_t codepoint_count(std::string_view s);

/// Whitespace-separated fields, no normalization.
std::vector<std::string> split_whitespace(std::string_view s);

/// Lowercased alphanumeric word runs; punctuation is a separator.
std::vector<std::string> words(std::string_view s);

/// Body split on '.', '?' or '!' followed by whitespace (or end of text).
/// Empty sentences are dropped; terminal punctuation stays with its sentence.
std::vector<std::string> split_sentences(std::string_view body);

/// The classic 127-word English stopword list.
const std::vector<std::string>& stopwords();
bool is_stopword(std::string_view word);

bool starts_with(std::string_view s, std::string_view prefix);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Backslash escapes for TSV fields: \\ \t \n \r.
std::string escape_field(std::string_view s);
std::string unescape_field(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace qac::text
