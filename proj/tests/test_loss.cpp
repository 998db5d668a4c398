#include <doctest.h>

#include <cmath>

#include "casc/loss.hpp"
#include "casc/rng.hpp"

using namespace casc;

namespace {

constexpr double kE = 2.718281828459045;

BinaryMask checkerboard(Index w, Index h) {
    BinaryMask y(w, h);
    for (Index yy = 0; yy < h; ++yy)
        for (Index xx = 0; xx < w; ++xx) y.set(xx, yy, (xx + yy) % 2 == 0);
    return y;
}

} // namespace

TEST_SUITE_BEGIN("loss");

TEST_CASE("omega_c endpoints and midpoint") {
    BinaryMask ones(1, 1, 1);
    PixelGrid c(1, 1, 1.0 - 1e-12);
    CHECK(omega_c(c, ones)[0] == doctest::Approx(kE).epsilon(1e-9));
    c[0] = 1e-12;
    CHECK(omega_c(c, ones)[0] == doctest::Approx(1.0).epsilon(1e-9));
    c[0] = 0.5;
    CHECK(omega_c(c, ones)[0] == doctest::Approx(1.6487212707).epsilon(1e-9));
    BinaryMask zeros(1, 1, 0);
    CHECK(omega_c(c, zeros)[0] == doctest::Approx(1.6487212707).epsilon(1e-9));
}

TEST_CASE("omega_sim endpoints") {
    PixelGrid hi(1, 1, 1.0), lo(1, 1, -1.0), mid(1, 1, 0.3);
    CHECK(omega_sim(hi, lo)[0] == doctest::Approx(7.3890560989).epsilon(1e-9));
    CHECK(omega_sim(lo, hi)[0] == doctest::Approx(0.1353352832).epsilon(1e-9));
    CHECK(omega_sim(mid, mid)[0] == doctest::Approx(1.0));
}

TEST_CASE("omega bounds hold over random inputs") {
    rng::Xoshiro256StarStar gen(404);
    PixelGrid c(100, 100), sc(100, 100), sn(100, 100);
    BinaryMask y(100, 100);
    for (Index i = 0; i < c.size(); ++i) {
        c[i] = gen.uniform(1e-9, 1.0 - 1e-9);
        sc[i] = gen.uniform(-1.0, 1.0);
        sn[i] = gen.uniform(-1.0, 1.0);
        y[i] = gen.uniform() < 0.5;
    }
    const PixelGrid wc = omega_c(c, y);
    const PixelGrid ws = omega_sim(sc, sn);
    for (Index i = 0; i < c.size(); ++i) {
        CHECK(wc[i] >= 1.0);
        CHECK(wc[i] <= kE);
        CHECK(ws[i] >= 1.0 / (kE * kE));
        CHECK(ws[i] <= kE * kE);
    }
}

TEST_CASE("weighted bce: symmetric entropy, perfect prediction, weight linearity") {
    const BinaryMask y = checkerboard(4, 4);
    PixelGrid half(4, 4, 0.5);
    PixelGrid ones_w(4, 4, 1.0);
    CHECK(weighted_bce(half, y, ones_w) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    PixelGrid perfect(4, 4);
    for (Index i = 0; i < 16; ++i) perfect[i] = y[i] ? 1.0 - 1e-9 : 1e-9;
    CHECK(weighted_bce(perfect, y, ones_w) <= 1e-6);

    PixelGrid twos(4, 4, 2.0);
    rng::Xoshiro256StarStar gen(3);
    PixelGrid c(4, 4);
    for (Index i = 0; i < 16; ++i) c[i] = gen.uniform(0.05, 0.95);
    CHECK(weighted_bce(c, y, twos) ==
          doctest::Approx(2.0 * weighted_bce(c, y, ones_w)).epsilon(1e-12));
}

TEST_CASE("weighted soft dice on the pinned instances") {
    PixelGrid ones_c(4, 4, 1.0);
    BinaryMask ones_y(4, 4, 1);
    PixelGrid w(4, 4, 1.0);
    CHECK(weighted_soft_dice(ones_c, ones_y, w) == doctest::Approx(0.0)); // 1 - 33/33

    PixelGrid half(5, 2, 0.5);
    BinaryMask ten_ones(5, 2, 1);
    PixelGrid w10(5, 2, 1.0);
    CHECK(weighted_soft_dice(half, ten_ones, w10) == doctest::Approx(0.3125));

    PixelGrid zeros_c(4, 4, 0.0);
    BinaryMask zeros_y(4, 4, 0);
    CHECK(weighted_soft_dice(zeros_c, zeros_y, w) == doctest::Approx(0.0)); // eps rescue
}

TEST_CASE("supervised loss on a 2x2 instance matches the manual evaluation") {
    PixelGrid c(2, 2);
    c[0] = 0.8;
    c[1] = 0.3;
    c[2] = 0.6;
    c[3] = 0.2;
    BinaryMask y(2, 2);
    y[0] = 1;
    y[3] = 1;
    PixelGrid sc(2, 2), sn(2, 2);
    sc[0] = 0.5;
    sc[1] = -0.2;
    sc[2] = 0.1;
    sc[3] = 0.9;
    sn[0] = -0.5;
    sn[1] = 0.3;
    sn[2] = 0.4;
    sn[3] = -0.1;

    // weights written out pixel by pixel
    const double w0 = std::exp(0.8) * std::exp(1.0);
    const double w1 = std::exp(0.7) * std::exp(-0.5);
    const double w2 = std::exp(0.4) * std::exp(-0.3);
    const double w3 = std::exp(0.2) * std::exp(1.0);
    const double dice_num = 2.0 * (w0 * 0.8 + w3 * 0.2) + 1.0;
    const double dice_den = w0 * 1.8 + w1 * 0.3 + w2 * 0.6 + w3 * 1.2 + 1.0;
    const double dice = 1.0 - dice_num / dice_den;
    const double bce = (w0 * -std::log(0.8) + w1 * -std::log(0.7) + w2 * -std::log(0.4) +
                        w3 * -std::log(0.2)) /
                       4.0;

    const SupervisedLoss loss = supervised_loss(c, y, sc, sn);
    CHECK(loss.dice == doctest::Approx(dice).epsilon(1e-12));
    CHECK(loss.bce == doctest::Approx(bce).epsilon(1e-12));
    CHECK(loss.value == doctest::Approx(dice + bce).epsilon(1e-12));
}

TEST_CASE("supervised loss with unit weights equals the plain path") {
    rng::Xoshiro256StarStar gen(17);
    PixelGrid c(4, 4);
    for (Index i = 0; i < 16; ++i) c[i] = gen.uniform(0.02, 0.98);
    const BinaryMask y = checkerboard(4, 4);
    PixelGrid w(4, 4, 1.0);
    const SupervisedLoss plain = plain_supervised_loss(c, y);
    CHECK(plain.value == doctest::Approx(weighted_soft_dice(c, y, w) + weighted_bce(c, y, w))
                             .epsilon(1e-12));
}

TEST_CASE("near-perfect confident predictions give a near-zero weighted loss") {
    BinaryMask y = checkerboard(4, 4);
    PixelGrid c(4, 4);
    for (Index i = 0; i < 16; ++i) c[i] = y[i] ? 1.0 - 1e-9 : 1e-9;
    PixelGrid sims(4, 4, 0.5);
    const SupervisedLoss loss = supervised_loss(c, y, sims, sims);
    CHECK(loss.value <= 1e-5);
}

TEST_CASE("contrastive loss: identical, separated, literal") {
    const FeatureVector a{0.4, -1.0, 2.0};
    CHECK(contrastive_loss(a, a, ContrastiveMode::kSeparative, 1.0) == doctest::Approx(1.0));
    CHECK(contrastive_loss(a, a, ContrastiveMode::kLiteral, 1.0) == doctest::Approx(0.0));

    const FeatureVector cell{10.0, 0.0}, noise{0.0, 10.0};
    CHECK(contrastive_loss(cell, noise, ContrastiveMode::kSeparative, 1.0) == 0.0);
    CHECK(contrastive_loss(cell, noise, ContrastiveMode::kLiteral, 1.0) > 1.0);
    CHECK_THROWS_AS(contrastive_loss({1.0}, {1.0, 2.0}, ContrastiveMode::kLiteral, 1.0),
                    std::invalid_argument);
}

TEST_CASE("separative contrastive loss is bounded by the margin") {
    rng::Xoshiro256StarStar gen(23);
    for (int trial = 0; trial < 300; ++trial) {
        FeatureVector u(4), v(4);
        for (auto& x : u) x = gen.uniform(-3.0, 3.0);
        for (auto& x : v) x = gen.uniform(-3.0, 3.0);
        const double m = gen.uniform(0.1, 2.0);
        const double loss = contrastive_loss(u, v, ContrastiveMode::kSeparative, m);
        CHECK(loss >= 0.0);
        CHECK(loss <= m + 1e-12);
        const double d = contrastive_loss(u, v, ContrastiveMode::kLiteral, m);
        if (d >= m) CHECK(loss == 0.0);
    }
}

TEST_CASE("total loss: disabled contrastive term and no-consensus fallback") {
    rng::Xoshiro256StarStar gen(29);
    PixelGrid c(4, 4);
    for (Index i = 0; i < 16; ++i) c[i] = gen.uniform(0.1, 0.9);
    const BinaryMask y = checkerboard(4, 4);

    ConsensusArtifacts art;
    art.no_consensus = false;
    art.f_cell = {1.0, 0.0};
    art.f_noise = {0.0, 1.0};
    art.cell_indices = {0};
    art.noise_indices = {1, 2};
    art.noise_weights = {0.5, 0.5};
    art.s_cell = {0.1, 0.2};
    art.sim_cell = PixelGrid(4, 4, 0.4);
    art.sim_noise = PixelGrid(4, 4, -0.1);

    const LossBreakdown with_zero = total_loss(c, y, art, {0.0, 1.0, ContrastiveMode::kSeparative});
    CHECK(with_zero.total == doctest::Approx(with_zero.supervised));

    ConsensusArtifacts none;
    const LossBreakdown fallback = total_loss(c, y, none, {1.0, 1.0, ContrastiveMode::kSeparative});
    const SupervisedLoss plain = plain_supervised_loss(c, y);
    CHECK(fallback.total == doctest::Approx(plain.value).epsilon(1e-12));
    CHECK(fallback.contrastive == 0.0);
    for (Index i = 0; i < 16; ++i) {
        CHECK(fallback.omega_c[i] == 1.0);
        CHECK(fallback.omega_sim[i] == 1.0);
    }
}

TEST_CASE("pixel losses match central differences with frozen weights") {
    rng::Xoshiro256StarStar gen(31);
    PixelGrid c(3, 3), w(3, 3);
    BinaryMask y(3, 3);
    for (Index i = 0; i < 9; ++i) {
        c[i] = gen.uniform(0.1, 0.9);
        w[i] = gen.uniform(0.2, 3.0);
        y[i] = gen.uniform() < 0.5;
    }
    PixelGrid grad(3, 3);
    weighted_soft_dice_backward(c, y, w, 1.0, grad);
    weighted_bce_backward(c, y, w, 1.0, grad);

    const double h = 1e-6;
    for (Index i = 0; i < 9; ++i) {
        PixelGrid up = c, dn = c;
        up[i] += h;
        dn[i] -= h;
        const double fd = (weighted_soft_dice(up, y, w) + weighted_bce(up, y, w) -
                           weighted_soft_dice(dn, y, w) - weighted_bce(dn, y, w)) /
                          (2.0 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("contrastive gradients match central differences in both modes") {
    rng::Xoshiro256StarStar gen(37);
    for (const auto mode : {ContrastiveMode::kSeparative, ContrastiveMode::kLiteral}) {
        FeatureVector cell(4), noise(4);
        for (auto& x : cell) x = gen.uniform(-1.0, 1.0);
        for (auto& x : noise) x = gen.uniform(-1.0, 1.0);
        FeatureVector g_cell(4, 0.0), g_noise(4, 0.0);
        contrastive_backward(cell, noise, mode, 1.0, 1.0, g_cell, g_noise);

        const double h = 1e-6;
        for (std::size_t i = 0; i < 4; ++i) {
            FeatureVector up = cell, dn = cell;
            up[i] += h;
            dn[i] -= h;
            const double fd =
                (contrastive_loss(up, noise, mode, 1.0) - contrastive_loss(dn, noise, mode, 1.0)) /
                (2.0 * h);
            CHECK(g_cell[i] == doctest::Approx(fd).epsilon(1e-5));

            FeatureVector nup = noise, ndn = noise;
            nup[i] += h;
            ndn[i] -= h;
            const double fdn =
                (contrastive_loss(cell, nup, mode, 1.0) - contrastive_loss(cell, ndn, mode, 1.0)) /
                (2.0 * h);
            CHECK(g_noise[i] == doctest::Approx(fdn).epsilon(1e-5));
        }
    }
}

TEST_CASE("raising sim_noise never raises the pixel weight") {
    PixelGrid sc(1, 1, 0.4);
    double prev = 1e300;
    for (double sn = -1.0; sn <= 1.0; sn += 0.05) {
        PixelGrid noise_map(1, 1, sn);
        const double w = omega_sim(sc, noise_map)[0];
        CHECK(w < prev);
        prev = w;
    }
}

TEST_SUITE_END();
