#include <benchmark/benchmark.h>

#include <map>
#include <string>

#include "collapse/cases.hpp"
#include "collapse/geometry.hpp"
#include "collapse/instanton.hpp"
#include "collapse/sweep.hpp"

using namespace collapse;

namespace {

const ExperimentSpec& spec(const char* name) {
    static std::map<std::string, ExperimentSpec> cache;
    auto it = cache.find(name);
    if (it == cache.end()) it = cache.emplace(name, builtin_experiment(name)).first;
    return it->second;
}

void BM_InstantonTwoBus(benchmark::State& state) {
    const ModelPtr m = build_two_bus();
    const Uncertainty& u = spec("gaussian_2bus").uncertainty;
    for (auto _ : state) benchmark::DoNotOptimize(find_instanton(*m, u));
}
BENCHMARK(BM_InstantonTwoBus);

void BM_InstantonFiveBus(benchmark::State& state) {
    const ModelPtr m = resolve_model("five_bus");
    const Uncertainty& u = spec("gaussian_5bus").uncertainty;
    for (auto _ : state) benchmark::DoNotOptimize(find_instanton(*m, u));
}
BENCHMARK(BM_InstantonFiveBus)->Unit(benchmark::kMillisecond);

void BM_InstantonMixtureTwoBus(benchmark::State& state) {
    const ModelPtr m = build_two_bus();
    const Uncertainty& u = spec("gmm_2bus").uncertainty;
    for (auto _ : state) benchmark::DoNotOptimize(find_instanton(*m, u));
}
BENCHMARK(BM_InstantonMixtureTwoBus);

void BM_GeometryFiveBus(benchmark::State& state) {
    const ModelPtr m = resolve_model("five_bus");
    const InstantonSolution s = find_instanton(*m, spec("gaussian_5bus").uncertainty);
    for (auto _ : state) benchmark::DoNotOptimize(compute_geometry(*m, s));
}
BENCHMARK(BM_GeometryFiveBus);

// Direct MC throughput; the argument is the sample count.
void BM_MonteCarloTwoBus(benchmark::State& state) {
    const auto& g = std::get<GaussianModel>(spec("gaussian_2bus").uncertainty);
    const CollapseClassifier c = CollapseClassifier::analytic_two_bus();
    SamplingOptions o;
    o.samples = static_cast<std::size_t>(state.range(0));
    o.seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(monte_carlo(g, c, o));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MonteCarloTwoBus)->Arg(1 << 14)->Arg(1 << 17)->Unit(benchmark::kMillisecond);

void BM_MonteCarloFiveBusPowerFlow(benchmark::State& state) {
    const ExperimentSpec& s = spec("gaussian_5bus");
    const ModelPtr m = resolve_model(s.model);
    const CollapseClassifier c = make_classifier(s.classifier, m, mean(s.uncertainty));
    SamplingOptions o;
    o.samples = static_cast<std::size_t>(state.range(0));
    o.seed = 1;
    for (auto _ : state) benchmark::DoNotOptimize(monte_carlo(s.uncertainty, c, o));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MonteCarloFiveBusPowerFlow)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_SweepLdtOnly(benchmark::State& state) {
    SweepOptions o;
    o.compute_reference = false;
    for (auto _ : state) benchmark::DoNotOptimize(run_sweep(spec("gmm_2bus"), o));
}
BENCHMARK(BM_SweepLdtOnly)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
