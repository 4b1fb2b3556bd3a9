#include "logrep/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "logrep/error.hpp"
#include "logrep/rng.hpp"
#include "logrep/text.hpp"

namespace logrep {
namespace {

const std::array<std::string, 5> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

constexpr std::string_view kHeaderTag = "#logrep-vocab";

bool starts_with(std::string_view s, std::string_view prefix) {
  return !prefix.empty() && s.substr(0, prefix.size()) == prefix;
}

std::size_t codepoint_count(std::string_view s) { return text::split_codepoints(s).size(); }

}  // namespace

std::span<const std::string> Vocabulary::special_tokens() { return kSpecials; }

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::string continuation_prefix)
    : prefix_(std::move(continuation_prefix)) {
  if (prefix_.empty()) throw InvalidArgument("continuation prefix must not be empty");
  tokens_.reserve(tokens.size() + kSpecials.size());
  tokens_.insert(tokens_.end(), kSpecials.begin(), kSpecials.end());
  for (auto& t : tokens) tokens_.push_back(std::move(t));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const std::string& t = tokens_[i];
    if (t.empty()) throw InvalidArgument("vocabulary token must not be empty");
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
      throw InvalidArgument("duplicate vocabulary token '" + t + "'");
    }
    if (i >= kSpecials.size()) {
      const std::string_view piece =
          starts_with(t, prefix_) ? std::string_view(t).substr(prefix_.size()) : t;
      max_piece_length_ = std::max(max_piece_length_, codepoint_count(piece));
    }
  }
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::is_continuation(TokenId id) const {
  return !is_special(id) && starts_with(token(id), prefix_) && token(id).size() > prefix_.size();
}

std::string Vocabulary::serialize() const {
  std::string out;
  out += kHeaderTag;
  out += " format_version=" + std::to_string(kFormatVersion);
  out += " continuation_prefix=" + prefix_ + "\n";
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  out << serialize();
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary Vocabulary::parse(std::string_view contents) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    lines.emplace_back(contents.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty() || !starts_with(lines[0], kHeaderTag)) {
    throw FormatError("vocabulary file lacks the '#logrep-vocab' header line");
  }
  std::string prefix;
  int version = -1;
  for (const auto& field : text::split_whitespace(lines[0])) {
    if (starts_with(field, "format_version=")) {
      version = std::stoi(field.substr(15));
    } else if (starts_with(field, "continuation_prefix=")) {
      prefix = field.substr(20);
    }
  }
  if (version != kFormatVersion) {
    throw FormatError("vocabulary format_version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  }
  if (prefix.empty()) throw FormatError("vocabulary header lacks continuation_prefix");
  if (lines.size() < 1 + kSpecials.size()) throw FormatError("vocabulary is truncated");
  for (std::size_t i = 0; i < kSpecials.size(); ++i) {
    if (lines[1 + i] != kSpecials[i]) {
      throw FormatError("vocabulary special token " + std::to_string(i) + " must be " +
                        kSpecials[i]);
    }
  }
  std::vector<std::string> tokens(lines.begin() + 1 + static_cast<std::ptrdiff_t>(kSpecials.size()),
                                  lines.end());
  try {
    return Vocabulary(std::move(tokens), prefix);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("invalid vocabulary: ") + e.what());
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::size_t minimum_vocab_size(std::span<const std::string> corpus) {
  std::set<std::string> chars;
  for (const auto& line : corpus) {
    for (const auto& word : text::split_whitespace(line)) {
      for (auto& cp : text::split_codepoints(word)) chars.insert(std::move(cp));
    }
  }
  return kSpecials.size() + 2 * chars.size();
}

Vocabulary train_vocab(std::span<const std::string> corpus, std::size_t target_size,
                       std::string continuation_prefix) {
  if (corpus.empty()) throw DataError("cannot train a vocabulary on an empty corpus");
  if (continuation_prefix.empty()) throw InvalidArgument("continuation prefix must not be empty");

  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : corpus) {
    for (auto& word : text::split_whitespace(line)) ++word_counts[std::move(word)];
  }
  if (word_counts.empty()) throw DataError("vocabulary corpus contains no words");

  // Symbols are interned; continuation symbols carry the prefix in their text.
  std::vector<std::string> symbols;
  std::unordered_map<std::string, std::uint32_t> symbol_ids;
  const auto intern = [&](const std::string& s) {
    auto [it, inserted] = symbol_ids.emplace(s, static_cast<std::uint32_t>(symbols.size()));
    if (inserted) symbols.push_back(s);
    return it->second;
  };

  std::set<std::string> chars;
  std::vector<std::vector<std::uint32_t>> words;
  std::vector<std::size_t> counts;
  for (const auto& [word, count] : word_counts) {
    std::vector<std::uint32_t> seq;
    const auto cps = text::split_codepoints(word);
    for (std::size_t i = 0; i < cps.size(); ++i) {
      chars.insert(cps[i]);
      seq.push_back(intern(i == 0 ? cps[i] : continuation_prefix + cps[i]));
    }
    words.push_back(std::move(seq));
    counts.push_back(count);
  }

  const std::size_t minimum = kSpecials.size() + 2 * chars.size();
  if (target_size < minimum) {
    throw InvalidArgument("target vocabulary size " + std::to_string(target_size) +
                          " is below the alphabet size plus specials (" +
                          std::to_string(minimum) + ")");
  }

  std::vector<std::string> inventory;
  std::set<std::string> present;
  for (const auto& c : chars) inventory.push_back(c);
  for (const auto& c : chars) inventory.push_back(continuation_prefix + c);
  present.insert(inventory.begin(), inventory.end());

  const auto strip = [&](const std::string& s) -> std::string_view {
    return starts_with(s, continuation_prefix) ? std::string_view(s).substr(continuation_prefix.size())
                                               : std::string_view(s);
  };

  while (kSpecials.size() + inventory.size() < target_size) {
    std::unordered_map<std::uint64_t, std::size_t> pair_counts;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& seq = words[w];
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        pair_counts[(static_cast<std::uint64_t>(seq[i]) << 32) | seq[i + 1]] += counts[w];
      }
    }

    bool found = false;
    std::uint64_t best_key = 0;
    std::size_t best_count = 0;
    std::string best_text;
    for (const auto& [key, count] : pair_counts) {
      const std::string& left = symbols[key >> 32];
      const std::string& right = symbols[key & 0xFFFFFFFFu];
      std::string merged = left + std::string(strip(right));
      // A word-initial piece must never look like a continuation piece.
      if (!starts_with(left, continuation_prefix) && starts_with(merged, continuation_prefix)) {
        continue;
      }
      bool better = !found || count > best_count;
      if (found && count == best_count) {
        const auto bare_a = strip(merged);
        const auto bare_b = strip(best_text);
        const bool cont_a = starts_with(merged, continuation_prefix);
        const bool cont_b = starts_with(best_text, continuation_prefix);
        if (bare_a != bare_b) {
          better = bare_a < bare_b;
        } else if (cont_a != cont_b) {
          better = !cont_a;
        } else {
          better = left < symbols[best_key >> 32];
        }
      }
      if (better) {
        found = true;
        best_key = key;
        best_count = count;
        best_text = std::move(merged);
      }
    }
    if (!found) break;

    const auto left = static_cast<std::uint32_t>(best_key >> 32);
    const auto right = static_cast<std::uint32_t>(best_key & 0xFFFFFFFFu);
    const std::uint32_t merged_id = intern(best_text);
    for (auto& seq : words) {
      std::vector<std::uint32_t> next;
      next.reserve(seq.size());
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i + 1 < seq.size() && seq[i] == left && seq[i + 1] == right) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(seq[i]);
        }
      }
      seq = std::move(next);
    }
    if (present.insert(best_text).second) inventory.push_back(best_text);
  }

  return Vocabulary(std::move(inventory), std::move(continuation_prefix));
}

std::vector<TokenId> tokenize(const Vocabulary& vocab, std::string_view text_in) {
  std::vector<TokenId> ids;
  const std::string& prefix = vocab.continuation_prefix();
  std::string key;
  for (const auto& word : text::split_whitespace(text_in)) {
    const auto cps = text::split_codepoints(word);
    std::size_t pos = 0;
    while (pos < cps.size()) {
      const std::size_t longest = std::min(vocab.max_piece_length(), cps.size() - pos);
      std::optional<TokenId> hit;
      std::size_t hit_len = 0;
      for (std::size_t len = longest; len >= 1 && !hit; --len) {
        key.clear();
        if (pos > 0) key = prefix;
        for (std::size_t k = pos; k < pos + len; ++k) key += cps[k];
        if (pos == 0 && starts_with(key, prefix)) continue;
        if (auto id = vocab.find(key); id && !vocab.is_special(*id)) {
          hit = id;
          hit_len = len;
        }
      }
      if (hit) {
        ids.push_back(*hit);
        pos += hit_len;
      } else {
        ids.push_back(Vocabulary::kUnk);
        ++pos;
      }
    }
  }
  return ids;
}

Encoding encode(const Vocabulary& vocab, std::string_view text_in, std::size_t max_len) {
  if (max_len < 2) throw InvalidArgument("max_len must be at least 2");
  const auto pieces = tokenize(vocab, text_in);
  const std::size_t body = std::min(pieces.size(), max_len - 2);
  Encoding enc;
  enc.ids.reserve(max_len);
  enc.ids.push_back(Vocabulary::kCls);
  enc.ids.insert(enc.ids.end(), pieces.begin(), pieces.begin() + static_cast<std::ptrdiff_t>(body));
  enc.ids.push_back(Vocabulary::kSep);
  enc.attention_mask.assign(enc.ids.size(), 1);
  enc.ids.resize(max_len, Vocabulary::kPad);
  enc.attention_mask.resize(max_len, 0);
  return enc;
}

std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  const std::size_t prefix_len = vocab.continuation_prefix().size();
  for (TokenId id : ids) {
    const std::string& tok = vocab.token(id);
    if (vocab.is_special(id)) continue;
    if (vocab.is_continuation(id)) {
      out.append(tok, prefix_len);
    } else {
      if (!out.empty()) out += ' ';
      out += tok;
    }
  }
  return out;
}

OovCounts oov_counts(const Vocabulary& vocab, std::span<const std::string> corpus) {
  if (corpus.empty()) throw DataError("cannot measure OOV rate on an empty corpus");
  OovCounts counts;
  for (const auto& line : corpus) {
    for (TokenId id : tokenize(vocab, line)) {
      ++counts.total;
      if (id == Vocabulary::kUnk) ++counts.unknown;
    }
  }
  return counts;
}

double oov_rate(const Vocabulary& vocab, std::span<const std::string> corpus) {
  return oov_counts(vocab, corpus).rate();
}

std::size_t MaskedBatch::selected_count() const {
  std::size_t n = 0;
  for (const auto& row : mlm_labels) {
    for (TokenId label : row) n += label != kIgnoreLabel;
  }
  return n;
}

MaskedBatch apply_mlm_mask(const Vocabulary& vocab, const TokenMatrix& input_ids,
                           double mask_prob, std::uint64_t seed) {
  MaskingOptions options;
  options.mask_prob = mask_prob;
  return apply_mlm_mask(vocab, input_ids, options, seed);
}

MaskedBatch apply_mlm_mask(const Vocabulary& vocab, const TokenMatrix& input_ids,
                           const MaskingOptions& options, std::uint64_t seed) {
  if (!(options.mask_prob > 0.0 && options.mask_prob < 1.0)) {
    throw InvalidArgument("mask_prob must lie in (0, 1)");
  }
  const auto vocab_size = static_cast<TokenId>(vocab.size());
  const std::size_t random_pool = vocab.size() - Vocabulary::kNumSpecial;
  Rng rng(seed);
  MaskedBatch batch;
  batch.input_ids = input_ids;
  batch.attention_mask.reserve(input_ids.size());
  batch.mlm_labels.reserve(input_ids.size());
  for (auto& row : batch.input_ids) {
    std::vector<std::uint8_t> attention(row.size());
    std::vector<TokenId> labels(row.size(), kIgnoreLabel);
    for (std::size_t i = 0; i < row.size(); ++i) {
      const TokenId id = row[i];
      if (id < 0 || id >= vocab_size) throw InvalidArgument("token id out of vocabulary range");
      attention[i] = id != Vocabulary::kPad;
      if (vocab.is_special(id)) continue;
      if (rng.uniform() >= options.mask_prob) continue;
      labels[i] = id;
      const double action = rng.uniform();
      if (action < options.replace_with_mask) {
        row[i] = Vocabulary::kMask;
      } else if (action < options.replace_with_mask + options.replace_with_random) {
        if (random_pool > 0) {
          row[i] = static_cast<TokenId>(Vocabulary::kNumSpecial + rng.below(random_pool));
        }
      }
    }
    batch.attention_mask.push_back(std::move(attention));
    batch.mlm_labels.push_back(std::move(labels));
  }
  return batch;
}

}  // namespace logrep
