#include <benchmark/benchmark.h>

#include "logrep/normalize.hpp"
#include "logrep/synthetic.hpp"
#include "logrep/tokenizer.hpp"

namespace {

using namespace logrep;

std::vector<std::string> sample_lines(std::size_t patterns, std::size_t per_pattern) {
  const auto corpus = gen_synthetic_corpus(default_benchmark_spec(patterns, per_pattern), 1);
  std::vector<std::string> out;
  for (const auto& s : corpus.sources) {
    for (const auto& l : s.lines) out.push_back(l.raw_text);
  }
  return out;
}

void BM_NormalizeLine(benchmark::State& state) {
  const auto lines = sample_lines(20, 4);
  std::size_t bytes = 0;
  for (const auto& l : lines) bytes += l.size();
  for (auto _ : state) {
    for (const auto& l : lines) benchmark::DoNotOptimize(normalize_line(l));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * lines.size()));
}
BENCHMARK(BM_NormalizeLine);

void BM_TrainVocab(benchmark::State& state) {
  std::vector<std::string> normalized;
  for (const auto& l : sample_lines(20, 4)) normalized.push_back(normalize_line(l));
  for (auto _ : state) benchmark::DoNotOptimize(train_vocab(normalized, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_TrainVocab)->Arg(300)->Arg(600)->Unit(benchmark::kMillisecond);

void BM_Encode(benchmark::State& state) {
  std::vector<std::string> normalized;
  for (const auto& l : sample_lines(20, 4)) normalized.push_back(normalize_line(l));
  const Vocabulary vocab = train_vocab(normalized, 600);
  for (auto _ : state) {
    for (const auto& l : normalized) benchmark::DoNotOptimize(encode(vocab, l, 128));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * normalized.size()));
}
BENCHMARK(BM_Encode);

}  // namespace
