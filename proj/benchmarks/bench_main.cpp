#include <benchmark/benchmark.h>

#include "polarsim/engine.hpp"
#include "polarsim/llmclient.hpp"
#include "polarsim/socialnet.hpp"

using namespace polarsim;

namespace {

SimulationConfig bench_config(std::size_t n, int workers) {
  SimulationConfig c;
  c.n_agents = n;
  c.seed = 1;
  c.workers = workers;
  c.brain.mock = *mock_preset("homophilic");
  return c;
}

void BM_MockStep(benchmark::State& state) {
  const auto c = bench_config(static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(1)));
  Engine engine(c, std::make_shared<MockBrain>(c.brain.mock));
  const auto w0 = engine.initialize();
  for (auto _ : state) {
    state.PauseTiming();
    auto w = w0;
    state.ResumeTiming();
    benchmark::DoNotOptimize(engine.step(w));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MockStep)->Args({1000, 1})->Args({1000, 4})->Args({5000, 4})->Unit(benchmark::kMillisecond);

void BM_GraphMetrics(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomStream rng(3);
  const auto g = make_initial_graph(NetworkSpec{}, n, rng);
  RandomStream orng(4);
  const auto opinions = sample_initial_opinions(OpinionDistribution::paper_default(), n, orng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(modularity_by_camp(g, opinions));
    benchmark::DoNotOptimize(assortativity(g, opinions));
    benchmark::DoNotOptimize(homophily_index(g, opinions));
    benchmark::DoNotOptimize(average_clustering(g));
  }
}
BENCHMARK(BM_GraphMetrics)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_ExtractJson(benchmark::State& state) {
  const std::string reply =
      "Sure, here is my answer.\n```json\n{\"decision\": \"yes\", \"explain\": \"we agree on {most} things\"}\n```\n";
  for (auto _ : state) benchmark::DoNotOptimize(extract_json(reply, {"decision", "explain"}));
}
BENCHMARK(BM_ExtractJson);

}  // namespace

BENCHMARK_MAIN();
