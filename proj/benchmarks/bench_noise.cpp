#include <benchmark/benchmark.h>

#include "casc/noise.hpp"
#include "casc/synth.hpp"

using namespace casc;

namespace {

SynthDataset bench_dataset(Index patch) {
    SynthParams params;
    params.patch_width = patch;
    params.patch_height = patch;
    params.train_patches = 1;
    params.val_patches = 1;
    params.test_patches = 1;
    params.slides = 3;
    params.seed = 11;
    return synth_dataset(params);
}

void BM_extract_contours(benchmark::State& state) {
    const SynthDataset data = bench_dataset(state.range(0));
    for (auto _ : state) {
        const auto contours = extract_contours(data.patches[0].clean_mask);
        benchmark::DoNotOptimize(contours.size());
    }
}
BENCHMARK(BM_extract_contours)->Arg(64)->Arg(128);

void BM_color_deconvolve(benchmark::State& state) {
    const SynthDataset data = bench_dataset(state.range(0));
    const StainMatrix stains = default_stain_matrix();
    for (auto _ : state) {
        const auto conc = color_deconvolve(data.patches[0].image, stains);
        benchmark::DoNotOptimize(conc[1][0]);
    }
}
BENCHMARK(BM_color_deconvolve)->Arg(64)->Arg(128);

void BM_inject_fp(benchmark::State& state) {
    const SynthDataset data = bench_dataset(64);
    NoiseRecipe recipe;
    recipe.area_min = 15;
    recipe.area_max = 400;
    for (auto _ : state) {
        const InjectResult result = inject_fp(data.patches[0].image, data.patches[0].clean_mask,
                                              recipe);
        benchmark::DoNotOptimize(result.noisy.count());
    }
}
BENCHMARK(BM_inject_fp);

void BM_remove_fn(benchmark::State& state) {
    const SynthDataset data = bench_dataset(64);
    for (auto _ : state) {
        const RemoveResult result = remove_fn(data.patches[0].clean_mask, 0.3, 21);
        benchmark::DoNotOptimize(result.kept);
    }
}
BENCHMARK(BM_remove_fn);

} // namespace
