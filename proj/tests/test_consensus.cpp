#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "casc/consensus.hpp"
#include "casc/rng.hpp"

using namespace casc;

namespace {

PixelGrid random_confidence(Index w, Index h, rng::Xoshiro256StarStar& gen) {
    PixelGrid c(w, h);
    for (Index i = 0; i < c.size(); ++i) c[i] = gen.uniform(1e-6, 1.0 - 1e-6);
    return c;
}

FeatureMap random_features(Index ch, Index w, Index h, rng::Xoshiro256StarStar& gen) {
    FeatureMap f(ch, w, h);
    for (auto& v : f.values()) v = gen.uniform(-2.0, 2.0);
    return f;
}

} // namespace

TEST_SUITE_BEGIN("consensus");

TEST_CASE("partition of the pinned 2x2 example") {
    PixelGrid c(2, 2);
    c.at(0, 0) = 0.9;
    c.at(1, 0) = 0.2;
    c.at(0, 1) = 0.6;
    c.at(1, 1) = 0.4;
    BinaryMask y(2, 2);
    y.set(0, 0, true);
    y.set(1, 1, true);
    const ConsensusPartition part = consensus_partition(c, y, 0.5);
    CHECK(part.cp.at(0, 0));
    CHECK(part.cp.count() == 1);
    CHECK(part.cn.at(1, 0));
    CHECK(part.cn.count() == 1);
    CHECK(part.dm.at(0, 1));
    CHECK(part.dm.count() == 1);
    CHECK(part.dh.at(1, 1));
    CHECK(part.dh.count() == 1);
}

TEST_CASE("partition extremes: full agreement and full model-positive disagreement") {
    PixelGrid c(3, 3, 0.8);
    BinaryMask ones(3, 3, 1);
    const ConsensusPartition agree = consensus_partition(c, ones, 0.5);
    CHECK(agree.cp.count() == 9);
    CHECK(agree.cn.count() + agree.dm.count() + agree.dh.count() == 0);

    BinaryMask zeros(3, 3, 0);
    const ConsensusPartition disagree = consensus_partition(c, zeros, 0.5);
    CHECK(disagree.dm.count() == 9);
}

TEST_CASE("partition is exhaustive and disjoint over every 3x3 mask") {
    rng::Xoshiro256StarStar gen(99);
    for (int mask_bits = 0; mask_bits < 512; ++mask_bits) {
        BinaryMask y(3, 3);
        for (Index i = 0; i < 9; ++i) y[i] = (mask_bits >> i) & 1;
        const PixelGrid c = random_confidence(3, 3, gen);
        const ConsensusPartition part = consensus_partition(c, y, 0.5);
        for (Index i = 0; i < 9; ++i) {
            const int total = part.cp[i] + part.cn[i] + part.dm[i] + part.dh[i];
            CHECK(total == 1);
        }
    }
}

TEST_CASE("cell distillation matches the hand example") {
    // a_CP ranks (0,0) then (1,1); the mean of their feature columns
    FeatureMap f(2, 2, 2);
    f.at(0, 0, 0) = 1.0;
    f.at(1, 0, 0) = 0.0;
    f.at(0, 1, 1) = 0.0;
    f.at(1, 1, 1) = 1.0;
    PixelGrid c(2, 2, 0.1);
    c.at(0, 0) = 0.9;
    c.at(1, 1) = 0.8;
    BinaryMask y(2, 2, 1);
    const auto cell = distill_cell_feature(f, c, y, 2);
    REQUIRE(cell.has_value());
    CHECK(cell->indices == std::vector<Index>{0, 3});
    CHECK(cell->f_cell[0] == doctest::Approx(0.5));
    CHECK(cell->f_cell[1] == doctest::Approx(0.5));
}

TEST_CASE("cell distillation with k=1 gathers the argmax pixel") {
    rng::Xoshiro256StarStar gen(5);
    const FeatureMap f = random_features(3, 4, 4, gen);
    const PixelGrid c = random_confidence(4, 4, gen);
    BinaryMask y(4, 4, 1);
    const auto cell = distill_cell_feature(f, c, y, 1);
    REQUIRE(cell.has_value());
    const Index best = cell->indices[0];
    for (Index ch = 0; ch < 3; ++ch)
        CHECK(cell->f_cell[static_cast<std::size_t>(ch)] == f.at_flat(ch, best));
}

TEST_CASE("all-zero annotation reports no-consensus") {
    rng::Xoshiro256StarStar gen(6);
    const FeatureMap f = random_features(2, 4, 4, gen);
    const PixelGrid c = random_confidence(4, 4, gen);
    BinaryMask y(4, 4, 0);
    CHECK_FALSE(distill_cell_feature(f, c, y, 4).has_value());
    const ConsensusArtifacts art = build_consensus_artifacts(f, c, y, 4);
    CHECK(art.no_consensus);
}

TEST_CASE("distillation matches the brute-force sort-and-average oracle") {
    rng::Xoshiro256StarStar gen(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const FeatureMap f = random_features(4, 8, 8, gen);
        const PixelGrid c = random_confidence(8, 8, gen);
        BinaryMask y(8, 8);
        for (Index i = 0; i < 64; ++i) y[i] = gen.uniform() < 0.5 ? 1 : 0;
        if (y.count() == 0) y[0] = 1;
        const Index k = 2 + 2 * static_cast<Index>(gen.next_below(6));

        const auto cell = distill_cell_feature(f, c, y, k);
        REQUIRE(cell.has_value());

        // oracle: sort all pixels by c*y_l descending (index ascending on
        // ties), average the top k feature columns
        std::vector<Index> order(64);
        std::iota(order.begin(), order.end(), Index{0});
        std::vector<double> score(64);
        for (Index i = 0; i < 64; ++i) score[static_cast<std::size_t>(i)] = c[i] * y[i];
        std::stable_sort(order.begin(), order.end(), [&score](Index a, Index b) {
            return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
        });
        for (Index ch = 0; ch < 4; ++ch) {
            double mean = 0;
            for (Index j = 0; j < k; ++j) mean += f.at_flat(ch, order[static_cast<std::size_t>(j)]);
            mean /= static_cast<double>(k);
            CHECK(cell->f_cell[static_cast<std::size_t>(ch)] ==
                  doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("disagreement indices on the pinned example") {
    PixelGrid c(2, 2);
    c.at(0, 0) = 0.9;
    c.at(1, 0) = 0.8;
    c.at(0, 1) = 0.1;
    c.at(1, 1) = 0.2;
    BinaryMask y(2, 2);
    y.set(0, 1, true);
    y.set(1, 1, true);
    const auto dis = disagreement_indices(c, y, 2);
    CHECK(dis.dm == std::vector<Index>{0});
    CHECK(dis.dh == std::vector<Index>{2});
}

TEST_CASE("disagreement indices fall back to flat order on all-zero scores") {
    PixelGrid c(2, 2, 1.0 - 1e-9);
    BinaryMask y(2, 2, 1);
    const auto dis = disagreement_indices(c, y, 4);
    CHECK(dis.dm == std::vector<Index>{0, 1}); // a_DM identically 0
}

TEST_CASE("disagreement indices reject odd k") {
    PixelGrid c(2, 2, 0.5);
    BinaryMask y(2, 2, 1);
    CHECK_THROWS_WITH_AS(disagreement_indices(c, y, 3), "k must be even", std::invalid_argument);
}

TEST_CASE("noise distillation reproduces the hand-evaluated weights") {
    FeatureMap f(2, 2, 1);
    f.at(0, 0, 0) = 1.0; // pixel 0 = (1,0)
    f.at(1, 0, 0) = 0.0;
    f.at(0, 1, 0) = 0.0; // pixel 1 = (0,1)
    f.at(1, 1, 0) = 1.0;
    const FeatureVector f_cell{1.0, 0.0};
    const auto noise = distill_noise_feature(f, {0}, {1}, f_cell);

    CHECK(noise.s_cell[0] == doctest::Approx(1.0));
    CHECK(noise.s_cell[1] == doctest::Approx(0.0));
    const double e = std::exp(1.0);
    CHECK(noise.weights[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-9)); // 0.26894
    CHECK(noise.weights[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-9));   // 0.73106
    CHECK(noise.f_noise[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-9));
    CHECK(noise.f_noise[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-9));
}

TEST_CASE("noise distillation on constant scores is the uniform mean") {
    FeatureMap f(2, 2, 1, 0.0);
    f.at(0, 0, 0) = 3.0;
    f.at(1, 0, 0) = 4.0;
    f.at(0, 1, 0) = 3.0;
    f.at(1, 1, 0) = 4.0;
    const FeatureVector f_cell{3.0, 4.0};
    const auto noise = distill_noise_feature(f, {0}, {1}, f_cell);
    CHECK(noise.weights[0] == doctest::Approx(0.5));
    CHECK(noise.weights[1] == doctest::Approx(0.5));
    CHECK(noise.f_noise[0] == doctest::Approx(3.0));
    CHECK(noise.f_noise[1] == doctest::Approx(4.0));
}

TEST_CASE("noise weights sum to one and f_noise stays in the convex-hull box") {
    rng::Xoshiro256StarStar gen(31337);
    for (int trial = 0; trial < 1000; ++trial) {
        const FeatureMap f = random_features(4, 8, 8, gen);
        const PixelGrid c = random_confidence(8, 8, gen);
        BinaryMask y(8, 8);
        for (Index i = 0; i < 64; ++i) y[i] = gen.uniform() < 0.5 ? 1 : 0;
        if (y.count() == 0) y[static_cast<Index>(gen.next_below(64))] = 1;

        const ConsensusArtifacts art = build_consensus_artifacts(f, c, y, 8);
        REQUIRE_FALSE(art.no_consensus);
        const double sum =
            std::accumulate(art.noise_weights.begin(), art.noise_weights.end(), 0.0);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        for (double w : art.noise_weights) CHECK(w >= 0.0);

        for (Index ch = 0; ch < 4; ++ch) {
            double lo = 1e300, hi = -1e300;
            for (Index idx : art.noise_indices) {
                lo = std::min(lo, f.at_flat(ch, idx));
                hi = std::max(hi, f.at_flat(ch, idx));
            }
            CHECK(art.f_noise[static_cast<std::size_t>(ch)] >= lo - 1e-12);
            CHECK(art.f_noise[static_cast<std::size_t>(ch)] <= hi + 1e-12);
        }
    }
}

TEST_CASE("similarity maps: self, orthogonal and scale-invariant cases") {
    FeatureMap f(2, 1, 1);
    f.at(0, 0, 0) = 3.0;
    f.at(1, 0, 0) = 4.0;
    const auto self_maps = similarity_maps(f, {30.0, 40.0}, {4.0, -3.0});
    CHECK(self_maps.sim_cell[0] == doctest::Approx(1.0)); // scale invariance
    CHECK(self_maps.sim_noise[0] == doctest::Approx(0.0));

    FeatureMap constant(2, 2, 2);
    for (Index i = 0; i < 4; ++i) {
        constant.at_flat(0, i) = 1.0;
        constant.at_flat(1, i) = 2.0;
    }
    const auto maps = similarity_maps(constant, {1.0, 2.0}, {-2.0, 1.0});
    for (Index i = 0; i < 4; ++i) {
        CHECK(maps.sim_cell[i] == doctest::Approx(1.0));
        CHECK(maps.sim_noise[i] == doctest::Approx(0.0));
    }
    CHECK_THROWS_AS(similarity_maps(constant, {1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("scaling the feature map leaves similarity maps unchanged") {
    rng::Xoshiro256StarStar gen(505);
    FeatureMap f = random_features(3, 4, 4, gen);
    const FeatureVector f_cell{0.3, -0.7, 1.1};
    const FeatureVector f_noise{-0.2, 0.4, 0.9};
    const auto base = similarity_maps(f, f_cell, f_noise);
    FeatureMap scaled = f;
    for (auto& v : scaled.values()) v *= 37.5;
    const auto after = similarity_maps(scaled, f_cell, f_noise);
    for (Index i = 0; i < 16; ++i) {
        CHECK(after.sim_cell[i] == doctest::Approx(base.sim_cell[i]).epsilon(1e-9));
        CHECK(after.sim_noise[i] == doctest::Approx(base.sim_noise[i]).epsilon(1e-9));
    }
}

TEST_CASE("artifact builder is deterministic") {
    rng::Xoshiro256StarStar gen(777);
    const FeatureMap f = random_features(4, 8, 8, gen);
    const PixelGrid c = random_confidence(8, 8, gen);
    BinaryMask y(8, 8);
    for (Index i = 0; i < 64; ++i) y[i] = gen.uniform() < 0.4 ? 1 : 0;
    y[5] = 1;

    const ConsensusArtifacts a = build_consensus_artifacts(f, c, y, 8);
    const ConsensusArtifacts b = build_consensus_artifacts(f, c, y, 8);
    CHECK(a.cell_indices == b.cell_indices);
    CHECK(a.noise_indices == b.noise_indices);
    CHECK(a.f_cell == b.f_cell);
    CHECK(a.noise_weights == b.noise_weights);
}

TEST_SUITE_END();
