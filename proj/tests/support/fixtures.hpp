#pragma once

// Small synthetic corpora shared by the training-related tests.

#include <string>
#include <vector>

#include "logrep/corpus.hpp"
#include "logrep/normalize.hpp"
#include "logrep/synthetic.hpp"
#include "logrep/tokenizer.hpp"

namespace logrep::testing {

struct PretrainFixture {
  SyntheticCorpus corpus;
  std::vector<std::string> train;  // raw text
  std::vector<std::string> val;
  Vocabulary vocab{{}};
};

inline PretrainFixture make_pretrain_fixture(std::size_t patterns, std::size_t lines_per_pattern,
                                             std::size_t vocab_size, std::uint64_t seed = 1) {
  PretrainFixture f;
  f.corpus = gen_synthetic_corpus(default_benchmark_spec(patterns, lines_per_pattern), seed);
  const CorpusSplit split = assemble_pretraining_split(f.corpus.sources, 0.8, seed + 1);
  f.train = raw_texts(split.train);
  f.val = raw_texts(split.validation);
  std::vector<std::string> normalized;
  for (const auto& t : f.train) normalized.push_back(normalize_line(t));
  f.vocab = train_vocab(normalized, vocab_size);
  return f;
}

}  // namespace logrep::testing
