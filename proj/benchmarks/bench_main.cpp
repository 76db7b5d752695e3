#include <benchmark/benchmark.h>

#include "dgcl/dot_transform.hpp"
#include "dgcl/objectives.hpp"
#include "dgcl/pipeline.hpp"
#include "dgcl/synthgen.hpp"

using namespace dgcl;

namespace {

Tensor noise(std::size_t r, std::size_t c, Rng& rng) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

}  // namespace

static void Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    Tensor a = noise(n, n, rng), b = noise(n, n, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(Matmul)->RangeMultiplier(2)->Range(16, 256)->Complexity();

static void DotForwardBatch(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const std::size_t batch = 32, L = 4;
    Rng rng(2);
    auto p = init_dot({.m = m, .heads = 4, .readout_init = ReadoutInit::gaussian}, rng);
    Tensor rows = noise(batch, m, rng);
    std::vector<Tensor> protos;
    for (std::size_t i = 0; i < batch; ++i) protos.push_back(noise(L, m, rng));
    std::vector<const Tensor*> ptrs;
    for (const auto& t : protos) ptrs.push_back(&t);
    for (auto _ : state) benchmark::DoNotOptimize(dot_forward_batch(p, rows, ptrs));
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(DotForwardBatch)->Arg(32)->Arg(64)->Arg(128);

// forward + backward of the contrastive objective on one minibatch
static void DotLossStep(benchmark::State& state) {
    const std::size_t m = 32, L = 3, anchors = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    auto p = init_dot({.m = m, .heads = 4, .readout_init = ReadoutInit::gaussian}, rng);
    Tensor r = noise(1, m, rng), R = noise(L, m, rng);
    for (auto _ : state) {
        Graph g;
        auto nodes = add_parameters(g, p, true);
        NodeId acc = g.leaf(Tensor(1, m));
        for (std::size_t i = 0; i < anchors; ++i) acc = g.add(acc, dot_forward(g, nodes, p, g.leaf(r), g.leaf(R)));
        NodeId loss = g.sum(g.normalize_rows(acc));
        benchmark::DoNotOptimize(g.backward(loss));
    }
}
BENCHMARK(DotLossStep)->Arg(8)->Arg(32);

static void Episode(benchmark::State& state) {
    SynthConfig sc;
    sc.seed = 0;
    FeatureBank bank = generate(sc);
    EpisodeConfig cfg;
    cfg.no_dot = state.range(0) == 0;
    for (auto _ : state) benchmark::DoNotOptimize(run_episode(bank, cfg).accuracy);
}
BENCHMARK(Episode)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->Iterations(2);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
