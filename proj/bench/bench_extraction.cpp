// Serial vs OpenMP extraction over a synthetic corpus. Arg is the number of
// emails; the gazetteer and patterns are the ones a real run would use.
#include <benchmark/benchmark.h>

#include <map>

#include "leakprobe/pii.hpp"
#include "support/synthetic.hpp"

using namespace leakprobe;

namespace {

struct Fixture {
  synth::Corpus corpus;
  pii::Gazetteer gazetteer;
  pii::PatternSet patterns = pii::PatternSet::defaults();
  std::vector<std::string_view> texts;

  explicit Fixture(std::size_t n) : corpus(synth::make_corpus(n, n * 3, 99)), gazetteer(corpus.gazetteer()) {
    for (const auto& r : corpus.records) texts.emplace_back(r.body);
  }
};

const Fixture& fixture(std::size_t n) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Fixture(n)).first;
  return it->second;
}

template <auto Kernel>
void extract(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(Kernel(f.texts, f.gazetteer, f.patterns, pii::Provenance::FineTunedGenerations));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.texts.size()));
}

template <auto Kernel>
void ground_truth(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(f.corpus.records, f.gazetteer, f.patterns));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.corpus.records.size()));
}

}  // namespace

BENCHMARK(extract<pii::extract_set_serial>)->Name("extract/serial")->Arg(200)->Arg(2000);
BENCHMARK(extract<pii::extract_set>)->Name("extract/openmp")->Arg(200)->Arg(2000);
BENCHMARK(ground_truth<pii::build_ground_truth_serial>)->Name("ground_truth/serial")->Arg(200)->Arg(2000);
BENCHMARK(ground_truth<pii::build_ground_truth>)->Name("ground_truth/openmp")->Arg(200)->Arg(2000);

BENCHMARK_MAIN();
