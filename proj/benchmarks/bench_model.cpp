#include <benchmark/benchmark.h>

#include "casc/model.hpp"
#include "casc/rng.hpp"

using namespace casc;

namespace {

FeatureMap random_input(Index channels, Index size, std::uint64_t seed) {
    rng::Xoshiro256StarStar gen(seed);
    FeatureMap input(channels, size, size);
    for (auto& v : input.values()) v = gen.uniform(0.0, 1.0);
    return input;
}

void BM_forward(benchmark::State& state) {
    const Index ch = state.range(0);
    const Index size = state.range(1);
    const ModelState model = init_model(1, ch, 4);
    const FeatureMap input = random_input(7, size, 2);
    for (auto _ : state) {
        const ForwardOutputs out = forward(model, input);
        benchmark::DoNotOptimize(out.c[0]);
    }
}
BENCHMARK(BM_forward)->Args({16, 64})->Args({16, 128})->Args({32, 64});

void BM_forward_backward(benchmark::State& state) {
    const Index ch = state.range(0);
    const Index size = state.range(1);
    ModelState model = init_model(1, ch, 4);
    const FeatureMap input = random_input(7, size, 2);
    rng::Xoshiro256StarStar gen(3);
    Logits grad_p(size, size);
    for (auto& v : grad_p.map().values()) v = gen.uniform(-1.0, 1.0);
    FeatureMap grad_fd(ch, size, size);
    for (auto& v : grad_fd.values()) v = gen.uniform(-1.0, 1.0);
    for (auto _ : state) {
        ForwardCache cache;
        forward(model, input, cache);
        backward(model, cache, grad_p, grad_fd);
        model.clear_grads();
    }
}
BENCHMARK(BM_forward_backward)->Args({16, 64})->Args({32, 64});

} // namespace

BENCHMARK_MAIN();
