#pragma once

#include <string>
#include <string_view>

namespace logrep {

/// Text normalization applied to every log line before mining or encoding.
///
///  - camelCase boundaries become spaces. An all-caps run followed by a
///    lowercase letter breaks before its last capital, so "IOException"
///    yields "io exception".
///  - '.' and '-' with an ASCII letter on both sides become spaces.
///    "3.14", "10.0.0.1" and a lone "-" are kept.
///  - ASCII letters are lowercased, whitespace runs collapse to one space,
///    and the result is trimmed.
///
/// Everything else passes through unchanged.
std::string normalize_line(std::string_view raw);

}  // namespace logrep
