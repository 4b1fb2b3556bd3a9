#include <doctest.h>

#include <random>
#include <set>

#include "logrep/error.hpp"
#include "logrep/normalize.hpp"
#include "logrep/text.hpp"
#include "logrep/tokenizer.hpp"
#include "test_util.hpp"

using namespace logrep;

namespace {

std::vector<std::string> toy_corpus() {
  return {"packet responder terminating", "received block blk of size 67108864",
          "packet responder 1 for block terminating", "served block to 10.0.0.1",
          "exception in receive block"};
}

}  // namespace

TEST_CASE("vocab: merge order follows pair frequency and tie rule") {
  const std::vector<std::string> corpus{"aaab", "aaab"};
  const std::size_t base = minimum_vocab_size(corpus);
  CHECK(base == 5 + 2 * 2);
  const Vocabulary v = train_vocab(corpus, base + 2);
  REQUIRE(v.size() == base + 2);
  // All three pairs of "a ##a ##a ##b" occur twice; "aa" wins the tie as
  // the word-initial form, then "aaa" beats "ab" alphabetically.
  CHECK(v.token(static_cast<TokenId>(base)) == "aa");
  CHECK(v.token(static_cast<TokenId>(base + 1)) == "aaa");

  const Vocabulary chars = train_vocab(corpus, base);
  CHECK(chars.size() == base);
  for (std::size_t i = 5; i < chars.size(); ++i) {
    std::string t = chars.tokens()[i];
    if (t.rfind("##", 0) == 0) t = t.substr(2);
    CHECK(text::split_codepoints(t).size() == 1);
  }
  CHECK(train_vocab(corpus, base + 2) == v);
  CHECK_THROWS(train_vocab(corpus, base - 1));
  CHECK_THROWS(train_vocab(std::vector<std::string>{}, 100));
}

TEST_CASE("vocab: specials and uniqueness") {
  const auto specials = Vocabulary::special_tokens();
  REQUIRE(specials.size() == 5);
  const Vocabulary v = train_vocab(toy_corpus(), 80);
  for (TokenId i = 0; i < 5; ++i) CHECK(v.token(i) == specials[static_cast<std::size_t>(i)]);
  std::set<std::string> seen(v.tokens().begin(), v.tokens().end());
  CHECK(seen.size() == v.size());
  CHECK_THROWS(Vocabulary({"a", "a"}));
}

TEST_CASE("encode: layout, truncation and padding") {
  const Vocabulary v = train_vocab(toy_corpus(), 80);
  const Encoding empty = encode(v, "", 6);
  CHECK(empty.ids == std::vector<TokenId>{Vocabulary::kCls, Vocabulary::kSep, 0, 0, 0, 0});
  CHECK(empty.attention_mask == std::vector<std::uint8_t>{1, 1, 0, 0, 0, 0});

  const Encoding cut = encode(v, "packet responder terminating received block", 5);
  REQUIRE(cut.ids.size() == 5);
  CHECK(cut.ids.front() == Vocabulary::kCls);
  CHECK(cut.ids.back() == Vocabulary::kSep);
  CHECK_THROWS(encode(v, "x", 1));
}

TEST_CASE("encode: unseen characters become one UNK each") {
  const Vocabulary v = train_vocab(toy_corpus(), 80);
  const auto ids = tokenize(v, "block \xC3\xA9z\xC3\xA9 q");
  // 'é' twice and 'q' never occur in the corpus; 'z' does ("size").
  CHECK(std::count(ids.begin(), ids.end(), Vocabulary::kUnk) == 3);
}

TEST_CASE("decode: continuation join and specials") {
  const Vocabulary v({"pack", "##et", "x"});
  const TokenId pack = *v.find("pack"), et = *v.find("##et");
  const std::vector<TokenId> ids{Vocabulary::kCls, pack, et, Vocabulary::kSep};
  CHECK(decode(v, ids) == "packet");
  CHECK(decode(v, std::vector<TokenId>(4, Vocabulary::kPad)) == "");
  CHECK_THROWS(decode(v, std::vector<TokenId>{99}));
}

TEST_CASE("encode/decode round-trip on covered text") {
  const auto corpus = toy_corpus();
  const Vocabulary v = train_vocab(corpus, 120);
  std::vector<std::string> words;
  for (const auto& line : corpus) {
    for (auto& w : text::split_whitespace(line)) words.push_back(w);
  }
  std::mt19937_64 gen(5);
  for (int i = 0; i < 100; ++i) {
    std::string s;
    const std::size_t n = 1 + gen() % 8;
    for (std::size_t j = 0; j < n; ++j) s += (j ? " " : "") + words[gen() % words.size()];
    const Encoding e = encode(v, s, 256);
    CHECK(decode(v, e.ids) == s);
  }
}

TEST_CASE("tokenize is greedy longest match") {
  const Vocabulary v = train_vocab(toy_corpus(), 150);
  for (const auto& line : toy_corpus()) {
    for (const auto& word : text::split_whitespace(line)) {
      const auto ids = tokenize(v, word);
      std::size_t pos = 0;
      const auto cps = text::split_codepoints(word);
      for (std::size_t p = 0; p < ids.size(); ++p) {
        std::string piece = v.token(ids[p]);
        if (p > 0) piece = piece.substr(2);
        const std::size_t len = text::split_codepoints(piece).size();
        // No longer vocabulary entry starts here.
        std::string longer;
        for (std::size_t q = pos; q < cps.size(); ++q) {
          longer += cps[q];
          if (q - pos + 1 > len) CHECK_FALSE(v.find((p > 0 ? "##" : "") + longer).has_value());
        }
        pos += len;
      }
      CHECK(pos == cps.size());
    }
  }
}

TEST_CASE("oov rate") {
  const Vocabulary v = train_vocab(toy_corpus(), 80);
  CHECK(oov_rate(v, toy_corpus()) == 0.0);
  // 99 single-letter words that are in the vocabulary plus one unseen letter.
  std::string line;
  for (int i = 0; i < 99; ++i) line += "a ";
  line += "q";
  const std::vector<std::string> corpus{line};
  const OovCounts c = oov_counts(v, corpus);
  CHECK(c.unknown == 1);
  CHECK(c.total == 100);
  CHECK(c.rate() == doctest::Approx(0.01).epsilon(1e-15));
  CHECK_THROWS_AS(oov_rate(v, std::vector<std::string>{}), DataError);
}

TEST_CASE("mlm masking: invariants and determinism") {
  const Vocabulary v = train_vocab(toy_corpus(), 80);
  TokenMatrix ids;
  for (const auto& l : toy_corpus()) ids.push_back(encode(v, l, 24).ids);
  const MaskedBatch a = apply_mlm_mask(v, ids, 0.5, 11);
  const MaskedBatch b = apply_mlm_mask(v, ids, 0.5, 11);
  CHECK(a.input_ids == b.input_ids);
  CHECK(a.mlm_labels == b.mlm_labels);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    for (std::size_t c = 0; c < ids[r].size(); ++c) {
      if (v.is_special(ids[r][c])) {
        CHECK(a.mlm_labels[r][c] == kIgnoreLabel);
        CHECK(a.input_ids[r][c] == ids[r][c]);
      } else if (a.mlm_labels[r][c] == kIgnoreLabel) {
        CHECK(a.input_ids[r][c] == ids[r][c]);
      } else {
        CHECK(a.mlm_labels[r][c] == ids[r][c]);
      }
    }
  }
  const TokenMatrix only_specials{{Vocabulary::kCls, Vocabulary::kSep, Vocabulary::kPad}};
  const MaskedBatch none = apply_mlm_mask(v, only_specials, 0.9, 1);
  CHECK(none.input_ids == only_specials);
  CHECK(none.selected_count() == 0);
  CHECK_THROWS(apply_mlm_mask(v, ids, 0.0, 1));
  CHECK_THROWS(apply_mlm_mask(v, ids, 1.0, 1));
}

TEST_CASE("mlm masking: selection rate over 100k positions") {
  const Vocabulary v = train_vocab(toy_corpus(), 80);
  TokenMatrix ids(1000, std::vector<TokenId>(102, 10));
  for (auto& row : ids) {
    row.front() = Vocabulary::kCls;
    row.back() = Vocabulary::kSep;
  }
  const MaskedBatch m = apply_mlm_mask(v, ids, 0.15, 3);
  const double rate = static_cast<double>(m.selected_count()) / 100000.0;
  CHECK(std::abs(rate - 0.15) <= 0.015);
}
