#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace logrep {

using TokenId = std::int32_t;

/// Label value for positions that do not contribute to the MLM loss.
inline constexpr TokenId kIgnoreLabel = -100;

/// Subword inventory. Ids 0..4 are the special tokens; a token that starts
/// with the continuation prefix ("##" by default) only matches inside a word.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kMask = 4;
  static constexpr TokenId kNumSpecial = 5;
  static constexpr int kFormatVersion = 1;

  static std::span<const std::string> special_tokens();

  /// `tokens` excludes the specials; they are prepended. Throws on duplicates.
  explicit Vocabulary(std::vector<std::string> tokens, std::string continuation_prefix = "##");

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& continuation_prefix() const noexcept { return prefix_; }
  bool is_special(TokenId id) const noexcept { return id >= 0 && id < kNumSpecial; }
  bool is_continuation(TokenId id) const;
  /// Longest token length in code points, ignoring the continuation prefix.
  std::size_t max_piece_length() const noexcept { return max_piece_length_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Plain text: a header line declaring format version and continuation
  /// prefix, then one token per line with line order equal to id order.
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary parse(std::string_view contents);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.prefix_ == b.prefix_ && a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::string prefix_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_piece_length_ = 0;
};

/// Learns a subword inventory by repeated most-frequent adjacent-pair
/// merges, starting from every code point seen in the corpus in both its
/// word-initial and continuation form. Ties go to the merged string that
/// sorts first without its prefix, word-initial before continuation.
/// Stops at `target_size` tokens or when no pair is left to merge.
Vocabulary train_vocab(std::span<const std::string> corpus, std::size_t target_size,
                       std::string continuation_prefix = "##");

/// Smallest legal target size for `corpus`: 5 specials plus both forms of
/// every distinct code point.
std::size_t minimum_vocab_size(std::span<const std::string> corpus);

/// Greedy longest-match subword split of whitespace-separated words, with
/// one UNK per code point that no token covers. No specials added.
std::vector<TokenId> tokenize(const Vocabulary& vocab, std::string_view text);

struct Encoding {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> attention_mask;
};

/// [CLS] subwords [SEP], truncated to max_len with [SEP] kept as the last
/// real token, then padded with [PAD] to exactly max_len.
Encoding encode(const Vocabulary& vocab, std::string_view text, std::size_t max_len);

/// Drops specials, glues continuation pieces to the preceding piece and
/// joins words with single spaces. Throws on out-of-range ids.
std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids);

struct OovCounts {
  std::size_t unknown = 0;
  std::size_t total = 0;
  double rate() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(unknown) / static_cast<double>(total);
  }
};

/// UNK pieces over all non-special pieces (UNK included in the denominator).
/// Throws DataError when the corpus is empty.
OovCounts oov_counts(const Vocabulary& vocab, std::span<const std::string> corpus);
double oov_rate(const Vocabulary& vocab, std::span<const std::string> corpus);

using TokenMatrix = std::vector<std::vector<TokenId>>;

struct MaskedBatch {
  TokenMatrix input_ids;
  std::vector<std::vector<std::uint8_t>> attention_mask;
  TokenMatrix mlm_labels;

  std::size_t selected_count() const;
};

struct MaskingOptions {
  double mask_prob = 0.15;
  double replace_with_mask = 0.8;
  double replace_with_random = 0.1;
};

/// Selects each non-special position independently with probability
/// mask_prob. Selected positions become [MASK] (80%), a uniformly drawn
/// non-special token (10%) or stay as they are (10%); their original id is
/// written to mlm_labels, every other label is kIgnoreLabel.
MaskedBatch apply_mlm_mask(const Vocabulary& vocab, const TokenMatrix& input_ids,
                           double mask_prob, std::uint64_t seed);
MaskedBatch apply_mlm_mask(const Vocabulary& vocab, const TokenMatrix& input_ids,
                           const MaskingOptions& options, std::uint64_t seed);

}  // namespace logrep
