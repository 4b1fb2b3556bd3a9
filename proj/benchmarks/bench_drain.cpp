#include <benchmark/benchmark.h>

#include "logrep/synthetic.hpp"
#include "logrep/template_miner.hpp"

namespace {

using namespace logrep;

void BM_MineSources(benchmark::State& state) {
  const auto corpus = gen_synthetic_corpus(
      default_benchmark_spec(static_cast<std::size_t>(state.range(0)), 16), 1);
  std::size_t lines = 0;
  for (const auto& s : corpus.sources) lines += s.lines.size();
  for (auto _ : state) benchmark::DoNotOptimize(mine_sources(corpus.sources));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * lines));
}
BENCHMARK(BM_MineSources)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_MatchLine(benchmark::State& state) {
  const auto corpus = gen_synthetic_corpus(default_benchmark_spec(40, 16), 1);
  const auto templates = mine(corpus.sources[0].lines);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& line = corpus.sources[0].lines[i++ % corpus.sources[0].lines.size()];
    benchmark::DoNotOptimize(match(templates, line));
  }
}
BENCHMARK(BM_MatchLine);

}  // namespace
