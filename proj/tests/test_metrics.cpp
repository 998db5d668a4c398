#include <doctest.h>

#include <cmath>

#include "casc/metrics.hpp"
#include "casc/rng.hpp"

using namespace casc;

namespace {

BinaryMask mask_from(std::initializer_list<std::initializer_list<int>> rows) {
    const Index h = static_cast<Index>(rows.size());
    const Index w = static_cast<Index>(rows.begin()->size());
    BinaryMask mask(w, h);
    Index y = 0;
    for (const auto& row : rows) {
        Index x = 0;
        for (int v : row) mask.set(x++, y, v != 0);
        ++y;
    }
    return mask;
}

} // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("dice on identical, disjoint and half-overlapping masks") {
    const BinaryMask a = mask_from({{1, 1, 0}, {1, 1, 0}, {0, 0, 0}});
    CHECK(dice_score(a, a) == doctest::Approx(1.0));

    const BinaryMask b = mask_from({{0, 0, 1}, {0, 0, 1}, {0, 1, 1}});
    CHECK(dice_score(a, b) == doctest::Approx(0.0));

    // |P| = |G| = 4, |P & G| = 2
    const BinaryMask p = mask_from({{1, 1, 0}, {1, 1, 0}, {0, 0, 0}});
    const BinaryMask g = mask_from({{0, 1, 1}, {0, 1, 1}, {0, 0, 0}});
    CHECK(dice_score(p, g) == doctest::Approx(0.5));

    const BinaryMask empty(3, 3);
    CHECK(dice_score(empty, empty) == 1.0);
}

TEST_CASE("dice matches direct counting on random 3x3 pairs") {
    rng::Xoshiro256StarStar gen(6021);
    for (int trial = 0; trial < 10000; ++trial) {
        BinaryMask a(3, 3), b(3, 3);
        for (Index i = 0; i < 9; ++i) {
            a[i] = gen.uniform() < 0.5;
            b[i] = gen.uniform() < 0.5;
        }
        Index inter = 0, pa = 0, pb = 0;
        for (Index i = 0; i < 9; ++i) {
            inter += a[i] && b[i] ? 1 : 0;
            pa += a[i];
            pb += b[i];
        }
        const double expected =
            (pa + pb) == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(pa + pb);
        CHECK(dice_score(a, b) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("instance f1 pinned cases") {
    const BinaryMask blob = mask_from({{0, 0, 0, 0}, {0, 1, 1, 0}, {0, 1, 1, 0}, {0, 0, 0, 0}});
    CHECK(instance_f1(blob, blob) == doctest::Approx(1.0));

    // two predicted blobs, one matches the single gt blob: F1 = 2/3
    const BinaryMask two = mask_from({{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 0, 1}, {0, 0, 1, 1}});
    const BinaryMask one = mask_from({{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});
    CHECK(instance_f1(two, one) == doctest::Approx(2.0 / 3.0));

    const BinaryMask none(4, 4);
    CHECK(instance_f1(none, one) == doctest::Approx(0.0));
    CHECK(instance_f1(none, none) == 1.0);
}

TEST_CASE("instance f1 requires the iou threshold to accept a match") {
    const BinaryMask pred = mask_from({{1, 1, 1, 0}, {0, 0, 0, 0}});
    const BinaryMask gt = mask_from({{0, 0, 1, 1}, {0, 0, 0, 0}});
    // overlap 1, union 4: IoU 0.25
    CHECK(instance_f1(pred, gt, 0.5) == doctest::Approx(0.0));
    CHECK(instance_f1(pred, gt, 0.2) == doctest::Approx(1.0));
}

TEST_CASE("region iou pinned cases") {
    const BinaryMask region = mask_from({{1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}, {0, 0, 0, 0, 0}});
    REQUIRE(region.count() == 10);

    BinaryMask inside(5, 3);
    for (Index x = 0; x < 5; ++x) inside.set(x, 0, true); // 5 of the 10 region pixels
    CHECK(region_iou(inside, region) == doctest::Approx(0.5));

    BinaryMask covering(5, 3, 1);
    CHECK(region_iou(covering, region) == doctest::Approx(1.0));

    BinaryMask outside(5, 3);
    outside.set(0, 2, true);
    CHECK(region_iou(outside, region) == doctest::Approx(0.0));

    const BinaryMask empty(5, 3);
    CHECK_FALSE(region_iou(covering, empty).has_value());
}

TEST_CASE("training region report: perfect correction and perfect memorization") {
    const BinaryMask clean = mask_from({{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 0, 1}, {0, 0, 1, 1}});
    const BinaryMask noisy = mask_from({{1, 1, 1, 0}, {1, 1, 1, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});

    const RegionReport corrected = training_region_report(clean, noisy, clean);
    CHECK(corrected.fp_iou.value() == doctest::Approx(0.0));
    CHECK(corrected.fn_iou.value() == doctest::Approx(1.0));

    const RegionReport memorized = training_region_report(noisy, noisy, clean);
    CHECK(memorized.fp_iou.value() == doctest::Approx(1.0));
    CHECK(memorized.fn_iou.value() == doctest::Approx(0.0));
}

TEST_CASE("training region report on a 4x4 hand case") {
    // one FP pixel at (2,0), one FN pixel at (0,1)
    const BinaryMask clean = mask_from({{1, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});
    const BinaryMask noisy = mask_from({{1, 1, 1, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});
    const BinaryMask pred = mask_from({{1, 1, 1, 0}, {1, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});

    const RegionReport report = training_region_report(pred, noisy, clean);
    // R_TP = {(0,0),(1,0)}, R_FP = {(2,0)}, R_FN = {(0,1)}
    CHECK(report.fp_iou.value() == doctest::Approx(1.0)); // pred covers the FP pixel
    CHECK(report.fn_iou.value() == doctest::Approx(1.0)); // pred covers the FN pixel
    // dice(pred, R_TP): |pred|=4, |R_TP|=2, overlap 2
    CHECK(report.tp_dice == doctest::Approx(2.0 * 2.0 / 6.0));

    // region partition sanity
    for (Index i = 0; i < 16; ++i) {
        const int tp = noisy[i] & clean[i];
        const int fp = noisy[i] & (1 - clean[i]);
        const int fn = clean[i] & (1 - noisy[i]);
        CHECK(tp + fp + fn <= 1);
        CHECK(tp + fp == noisy[i]);
        CHECK(tp + fn == clean[i]);
    }
}

TEST_CASE("label accuracy forwards to dice and f1") {
    const BinaryMask clean = mask_from({{1, 1, 0}, {1, 1, 0}, {0, 0, 0}});
    auto [dice_same, f1_same] = label_accuracy(clean, clean);
    CHECK(dice_same == 1.0);
    CHECK(f1_same == 1.0);

    const BinaryMask empty(3, 3);
    auto [dice_empty, f1_empty] = label_accuracy(empty, clean);
    CHECK(dice_empty == 0.0);
    CHECK(f1_empty == 0.0);

    const BinaryMask half = mask_from({{1, 0, 0}, {1, 0, 0}, {0, 0, 0}});
    auto [dice_half, f1_half] = label_accuracy(half, clean);
    CHECK(dice_half == doctest::Approx(2.0 * 2.0 / 6.0));
    CHECK(f1_half == doctest::Approx(1.0)); // IoU 0.5 passes the 0.5 threshold
}

TEST_CASE("wilcoxon: all-positive distinct differences give W = 0") {
    const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0};
    const std::vector<double> b{0.5, 1.0, 1.5, 2.0, 2.5};
    const WilcoxonResult result = wilcoxon_signed_rank(a, b);
    CHECK_FALSE(result.no_signal);
    CHECK(result.statistic == doctest::Approx(0.0));
    CHECK(result.n == 5);
    CHECK(result.exact);
    // exact two-sided p for W=0 with n=5: 2/32
    CHECK(result.p_value == doctest::Approx(2.0 / 32.0));
}

TEST_CASE("wilcoxon: identical samples report no-signal") {
    const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    const WilcoxonResult result = wilcoxon_signed_rank(a, a);
    CHECK(result.no_signal);
    CHECK(result.p_bucket == "no-signal");
}

TEST_CASE("wilcoxon rejects too-few nonzero differences") {
    const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> b{0.0, 1.0, 2.0, 3.0};
    CHECK_THROWS_AS(wilcoxon_signed_rank(a, b), std::invalid_argument);
}

TEST_CASE("wilcoxon exact mode matches the exhaustive sign-pattern oracle") {
    rng::Xoshiro256StarStar gen(8088);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 5 + gen.next_below(4); // 5..8
        std::vector<double> a(n), b(n, 0.0);
        for (auto& v : a) {
            v = gen.uniform(-2.0, 2.0);
            if (v == 0.0) v = 0.5;
        }
        const WilcoxonResult result = wilcoxon_signed_rank(a, b);

        // oracle: rank magnitudes with average ranks, enumerate all sign
        // patterns of exactly these magnitudes, count min-statistics <= W
        std::vector<double> mags(n);
        for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(a[i]);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&mags](std::size_t x, std::size_t y) { return mags[x] < mags[y]; });
        std::vector<double> rank(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && mags[order[j + 1]] == mags[order[i]]) ++j;
            for (std::size_t t = i; t <= j; ++t)
                rank[order[t]] = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
            i = j + 1;
        }
        double total = 0;
        for (double r : rank) total += r;
        std::size_t count = 0;
        const std::size_t patterns = static_cast<std::size_t>(1) << n;
        for (std::size_t bits = 0; bits < patterns; ++bits) {
            double t_plus = 0;
            for (std::size_t k = 0; k < n; ++k)
                if (bits & (static_cast<std::size_t>(1) << k)) t_plus += rank[k];
            if (std::min(t_plus, total - t_plus) <= result.statistic + 1e-12) ++count;
        }
        const double oracle_p = static_cast<double>(count) / static_cast<double>(patterns);
        CHECK(result.p_value == doctest::Approx(oracle_p).epsilon(1e-12));
    }
}

TEST_CASE("wilcoxon normal approximation for larger n") {
    std::vector<double> a, b;
    for (int i = 1; i <= 20; ++i) {
        a.push_back(static_cast<double>(i));
        b.push_back(static_cast<double>(i) - (i % 4 == 0 ? -0.25 : 1.0) * 0.1 * i);
    }
    const WilcoxonResult result = wilcoxon_signed_rank(a, b);
    CHECK_FALSE(result.exact);
    CHECK(result.n == 20);
    CHECK(result.p_value > 0.0);
    CHECK(result.p_value <= 1.0);
}

TEST_SUITE_END();
