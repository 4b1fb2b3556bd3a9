#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "logrep/checkpoint.hpp"
#include "logrep/error.hpp"
#include "logrep/pretrain.hpp"
#include "test_util.hpp"

using namespace logrep;

namespace {

PretrainOptions quick_options(std::uint64_t seed) {
  PretrainOptions o;
  o.epochs = 2;
  o.batch_size = 32;
  o.learning_rate = 1e-3;
  o.seed = seed;
  return o;
}

EncoderConfig quick_config(std::size_t vocab) {
  EncoderConfig c = EncoderConfig::tiny(vocab);
  c.hidden_size = 32;
  c.ff_size = 64;
  c.max_seq = 48;
  return c;
}

}  // namespace

TEST_CASE("perplexity from probabilities") {
  const std::vector<double> ones{1.0, 1.0, 1.0};
  CHECK(perplexity_from_probabilities(ones) == 1.0);
  const std::vector<double> halves{0.5, 0.5, 0.5, 0.5};
  CHECK(perplexity_from_probabilities(halves) == doctest::Approx(2.0).epsilon(1e-15));
  const std::vector<double> hand{0.5, 0.25, 0.125};
  const double root = perplexity_from_probabilities(hand);
  double nll = 0.0;
  for (double p : hand) nll -= std::log(p);
  CHECK(std::abs(root - 4.0) < 1e-10);
  CHECK(std::abs(std::exp(nll / 3.0) - root) < 1e-10);
}

TEST_CASE("select_checkpoint") {
  CHECK(select_checkpoint(std::vector<double>{3.0, 2.1, 2.4}) == 1);
  CHECK(select_checkpoint(std::vector<double>{5.0}) == 0);
  CHECK(select_checkpoint(std::vector<double>{2.0, 2.0}) == 0);
  CHECK_THROWS(select_checkpoint(std::vector<double>{}));
}

TEST_CASE("uniform head perplexity equals vocabulary size") {
  const auto f = testing::make_pretrain_fixture(4, 6, 200);
  const EncoderConfig c = quick_config(f.vocab.size());
  ModelParameters p = init_params(c, 1);
  p.mlm_w.setZero();
  p.mlm_b.setZero();
  const MaskedCorpus val = validation_corpus(f.vocab, c, f.val, quick_options(3));
  REQUIRE(val.masked_tokens > 0);
  CHECK(perplexity(p, c, val) == doctest::Approx(static_cast<double>(f.vocab.size())).epsilon(1e-12));
  const NllSum s = corpus_nll(p, c, val, 7);
  CHECK(s.count == val.masked_tokens);
  CHECK(std::abs(std::exp(s.mean()) - perplexity(p, c, val, 1000)) < 1e-9);
}

TEST_CASE("pretrain: direction, selection, consistency and determinism") {
  // 16 formats x 13 patterns: 208 templates.
  const auto f = testing::make_pretrain_fixture(13, 5, 300);
  const EncoderConfig c = quick_config(f.vocab.size());
  testing::TempDir dir("pretrain");
  PretrainOptions o = quick_options(5);
  o.checkpoint_dir = dir.path();
  const PretrainResult r = pretrain(f.vocab, c, init_params(c, 2), f.train, f.val, o);
  const auto& ev = r.report.evaluations;
  REQUIRE(ev.size() >= 3);
  CHECK(ev.front().step == 0);
  CHECK(std::isnan(ev.front().train_loss));
  CHECK(ev.back().val_perplexity < ev.front().val_perplexity);
  // Initial perplexity sits near the vocabulary size.
  CHECK(ev.front().val_perplexity > 0.5 * static_cast<double>(f.vocab.size()));
  CHECK(ev.front().val_perplexity < 2.0 * static_cast<double>(f.vocab.size()));

  std::vector<double> losses;
  for (const auto& e : ev) {
    losses.push_back(e.val_loss);
    CHECK(std::abs(e.val_perplexity - std::exp(e.val_loss)) <= 1e-9 * e.val_perplexity);
    CHECK(std::filesystem::exists(dir / e.checkpoint));
  }
  CHECK(r.report.selected == select_checkpoint(losses));
  CHECK(r.report.epochs.size() == 2);

  // The returned best parameters reproduce the selected validation loss.
  const MaskedCorpus val = validation_corpus(f.vocab, c, f.val, o);
  CHECK(std::abs(corpus_nll(r.best, c, val).mean() - ev[r.report.selected].val_loss) < 1e-12);
  const Checkpoint stored = load_checkpoint(dir / ev[r.report.selected].checkpoint);
  CHECK(std::abs(corpus_nll(stored.params, c, val).mean() - ev[r.report.selected].val_loss) < 1e-12);

  PretrainOptions o2 = quick_options(5);
  const PretrainResult again = pretrain(f.vocab, c, init_params(c, 2), f.train, f.val, o2);
  REQUIRE(again.report.evaluations.size() == ev.size());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    CHECK(again.report.evaluations[i].val_loss == ev[i].val_loss);
  }
  CHECK(again.last.token_embedding == r.last.token_embedding);
}

TEST_CASE("pretrain: argument errors") {
  const auto f = testing::make_pretrain_fixture(2, 4, 120);
  const EncoderConfig c = quick_config(f.vocab.size());
  PretrainOptions o = quick_options(1);
  const std::vector<std::string> empty;
  CHECK_THROWS_AS(pretrain(f.vocab, c, init_params(c, 1), empty, f.val, o), DataError);
  CHECK_THROWS_AS(pretrain(f.vocab, quick_config(f.vocab.size() + 1), init_params(c, 1), f.train, f.val, o),
                  InvalidArgument);
  ModelParameters poisoned = init_params(c, 1);
  poisoned.mlm_b(5) = std::nan("");
  CHECK_THROWS_AS(pretrain(f.vocab, c, poisoned, f.train, f.val, o), NumericError);
}
