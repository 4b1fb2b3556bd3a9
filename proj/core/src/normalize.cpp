#include "logrep/normalize.hpp"

namespace logrep {
namespace {

bool is_upper(char c) noexcept { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) noexcept { return c >= 'a' && c <= 'z'; }
bool is_alpha(char c) noexcept { return is_upper(c) || is_lower(c); }
bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}
char to_lower(char c) noexcept { return is_upper(c) ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

std::string normalize_line(std::string_view raw) {
  // First pass marks boundaries with a space; second pass lowercases and
  // collapses whitespace.
  std::string split;
  split.reserve(raw.size() + raw.size() / 4);
  const std::size_t n = raw.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = raw[i];
    const char prev = i > 0 ? raw[i - 1] : '\0';
    const char next = i + 1 < n ? raw[i + 1] : '\0';
    if ((c == '.' || c == '-') && is_alpha(prev) && is_alpha(next)) {
      split += ' ';
      continue;
    }
    if (is_upper(c) && i > 0) {
      const bool lower_to_upper = is_lower(prev);
      const bool acronym_end = is_upper(prev) && is_lower(next);
      if (lower_to_upper || acronym_end) split += ' ';
    }
    split += c;
  }

  std::string out;
  out.reserve(split.size());
  bool pending_space = false;
  for (char c : split) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += to_lower(c);
  }
  return out;
}

}  // namespace logrep
