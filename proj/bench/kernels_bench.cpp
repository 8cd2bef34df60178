// Serial reference kernels against their OpenMP counterparts.
//   ./kernels_bench --benchmark_filter=Permutation

#include <benchmark/benchmark.h>

#include <fmt/format.h>

#include "guiseprobe/backend.hpp"
#include "guiseprobe/corpus.hpp"
#include "guiseprobe/kernels.hpp"

namespace {

using namespace guiseprobe;

std::vector<std::string> Texts(std::size_t n, const char* form) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format(fmt::runtime(form), i));
  return out;
}

BackendPtr Oracle() {
  BackendDescriptor d;
  d.id = "bench";
  d.family = "bench";
  d.version = "1";
  d.parameter_count = 1;
  PlantedBiasSpec spec;
  spec.plants = {MarkerBias{"finna", {{"lazy", 0.7}, {"stupid", 0.5}}}};
  spec.jitter_sd = 0.3;
  spec.jitter_seed = 1;
  return MakePlantedBiasOracle(d, spec);
}

const TokenSet& Adjectives() {
  static const TokenSet tokens =
      LoadTokenSet(DefaultDataDir() / "adjectives.txt", TokenKind::kAdjectives, "adjectives");
  return tokens;
}

const PromptTemplate kPrompt{"covert_trait/0", "The person says: `` {t} '' The person is",
                             Battery::kCovertTrait, ArticleRule::kNone};

void BM_FetchSerial(benchmark::State& state) {
  auto backend = Oracle();
  const auto texts = Texts(static_cast<std::size_t>(state.range(0)), "she finna help them {}");
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        kernels::serial::FetchProbabilities(*backend, kPrompt, texts, Adjectives().tokens));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FetchOpenMP(benchmark::State& state) {
  auto backend = Oracle();
  const auto texts = Texts(static_cast<std::size_t>(state.range(0)), "she finna help them {}");
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        kernels::FetchProbabilities(*backend, kPrompt, texts, Adjectives().tokens));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

struct Grids {
  kernels::ProbabilityGrid treatment;
  kernels::ProbabilityGrid control;
};

Grids MakeGrids(std::size_t n) {
  auto backend = Oracle();
  return {kernels::FetchProbabilities(*backend, kPrompt, Texts(n, "she finna help them {}"),
                                      Adjectives().tokens),
          kernels::FetchProbabilities(*backend, kPrompt, Texts(n, "she's gonna help them {}"),
                                      Adjectives().tokens)};
}

void BM_MatchedSerial(benchmark::State& state) {
  const auto g = MakeGrids(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::MatchedEstimates(g.treatment, g.control));
  }
}

void BM_MatchedOpenMP(benchmark::State& state) {
  const auto g = MakeGrids(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::MatchedEstimates(g.treatment, g.control));
  }
}

void BM_UnmatchedSerial(benchmark::State& state) {
  const auto g = MakeGrids(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::UnmatchedEstimates(g.treatment, g.control));
  }
}

void BM_UnmatchedOpenMP(benchmark::State& state) {
  const auto g = MakeGrids(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::UnmatchedEstimates(g.treatment, g.control));
  }
}

const std::vector<std::size_t> kHuman = {17, 13, 20, 29, 34};

void BM_PermutationSerial(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::PermutationMapSamples(
        37, kHuman, static_cast<std::size_t>(state.range(0)), 1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PermutationOpenMP(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::PermutationMapSamples(
        37, kHuman, static_cast<std::size_t>(state.range(0)), 1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_FetchSerial)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FetchOpenMP)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MatchedSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MatchedOpenMP)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_UnmatchedSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_UnmatchedOpenMP)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_PermutationSerial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PermutationOpenMP)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
