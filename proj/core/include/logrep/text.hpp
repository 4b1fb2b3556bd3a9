#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace logrep::text {

/// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

/// Splits valid UTF-8 into one string per code point.
std::vector<std::string> split_codepoints(std::string_view utf8);

/// Splits on runs of ASCII whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view separator);

bool contains_digit(std::string_view s) noexcept;

bool is_blank(std::string_view s) noexcept;

}  // namespace logrep::text
