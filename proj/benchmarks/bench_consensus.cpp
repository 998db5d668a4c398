#include <benchmark/benchmark.h>

#include "casc/consensus.hpp"
#include "casc/loss.hpp"
#include "casc/rng.hpp"

using namespace casc;

namespace {

struct Instance {
    FeatureMap f;
    PixelGrid c;
    BinaryMask y;
};

Instance make_instance(Index ch, Index size, std::uint64_t seed) {
    rng::Xoshiro256StarStar gen(seed);
    Instance inst{FeatureMap(ch, size, size), PixelGrid(size, size), BinaryMask(size, size)};
    for (auto& v : inst.f.values()) v = gen.uniform(-2.0, 2.0);
    for (Index i = 0; i < inst.c.size(); ++i) {
        inst.c[i] = gen.uniform(1e-6, 1.0 - 1e-6);
        inst.y[i] = gen.uniform() < 0.3;
    }
    inst.y[0] = 1;
    return inst;
}

void BM_consensus_artifacts(benchmark::State& state) {
    const Index size = state.range(0);
    const Instance inst = make_instance(16, size, 7);
    const Index k = default_k(size, size);
    for (auto _ : state) {
        const ConsensusArtifacts art = build_consensus_artifacts(inst.f, inst.c, inst.y, k);
        benchmark::DoNotOptimize(art.f_noise[0]);
    }
}
BENCHMARK(BM_consensus_artifacts)->Arg(64)->Arg(128);

void BM_total_loss(benchmark::State& state) {
    const Index size = state.range(0);
    const Instance inst = make_instance(16, size, 9);
    const Index k = default_k(size, size);
    const ConsensusArtifacts art = build_consensus_artifacts(inst.f, inst.c, inst.y, k);
    const TotalLossConfig cfg;
    for (auto _ : state) {
        const LossBreakdown loss = total_loss(inst.c, inst.y, art, cfg);
        benchmark::DoNotOptimize(loss.total);
    }
}
BENCHMARK(BM_total_loss)->Arg(64)->Arg(128);

} // namespace
