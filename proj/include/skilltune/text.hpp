#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace skilltune::text {

std::string normalize_newlines(std::string_view in);
std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);
std::vector<std::string_view> split_lines(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool contains_ci(std::string_view haystack, std::string_view needle);

/// Case-insensitive match of `needle` that starts at a word boundary. Needles
/// whose first character is punctuation (e.g. "->") match anywhere.
bool contains_word_prefix_ci(std::string_view haystack, std::string_view needle);

/// Caps `s` at `max_chars`, appending a marker when truncated.
std::string cap_with_marker(std::string_view s, std::size_t max_chars);

/// Replaces every occurrence of `from` with `to`.
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

}  // namespace skilltune::text
