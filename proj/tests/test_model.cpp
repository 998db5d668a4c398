#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "casc/model.hpp"
#include "casc/rng.hpp"
#include "gradcheck.hpp"

using namespace casc;

namespace {

FeatureMap random_input(Index channels, Index size, std::uint64_t seed) {
    rng::Xoshiro256StarStar gen(seed);
    FeatureMap input(channels, size, size);
    for (auto& v : input.values()) v = gen.uniform(0.0, 1.0);
    return input;
}

BinaryMask random_mask(Index size, std::uint64_t seed) {
    rng::Xoshiro256StarStar gen(seed);
    BinaryMask mask(size, size);
    for (Index i = 0; i < mask.size(); ++i) mask[i] = gen.uniform() < 0.4;
    return mask;
}

} // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("init is deterministic per seed and shapes the conditioning input") {
    const ModelState a = init_model(7, 4, 4);
    const ModelState b = init_model(7, 4, 4);
    const ModelState c = init_model(8, 4, 4);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != c.checksum());
    CHECK(a.param("enc1.w").shape == std::vector<Index>{4, 7, 3, 3}); // 3 rgb + 4 classes
    for (double v : a.param("enc1.b").value) CHECK(v == 0.0);
}

TEST_CASE("forward shape contract at 64x64") {
    const ModelState model = init_model(1, 4, 4);
    const FeatureMap input = random_input(7, 64, 2);
    const ForwardOutputs out = forward(model, input);
    CHECK(out.p.width() == 64);
    CHECK(out.p.height() == 64);
    CHECK(out.f_d.channels() == 4);
    CHECK(out.f_d.width() == 64);
    CHECK(out.c.size() == 64 * 64);
}

TEST_CASE("zero-weight model outputs exactly half confidence") {
    ModelState model = init_model(1, 4, 2);
    for (auto& p : model.params) std::fill(p.value.begin(), p.value.end(), 0.0);
    const FeatureMap input = random_input(5, 16, 3);
    const ForwardOutputs out = forward(model, input);
    for (Index i = 0; i < out.c.size(); ++i) {
        CHECK(out.p.map().at_flat(0, i) == 0.0);
        CHECK(out.p.map().at_flat(1, i) == 0.0);
        CHECK(out.c[i] == 0.5);
    }
}

TEST_CASE("forward is bit-deterministic") {
    const ModelState model = init_model(11, 8, 4);
    const FeatureMap input = random_input(7, 32, 5);
    const ForwardOutputs a = forward(model, input);
    const ForwardOutputs b = forward(model, input);
    CHECK(a.p.map().values() == b.p.map().values());
    CHECK(a.f_d.values() == b.f_d.values());
}

TEST_CASE("forward rejects sizes not divisible by four") {
    const ModelState model = init_model(1, 4, 4);
    const FeatureMap input = random_input(7, 18, 2);
    CHECK_THROWS_WITH_AS(forward(model, input),
                         "forward: spatial size must be divisible by 4", std::invalid_argument);
}

TEST_CASE("backward requires a forward cache") {
    ModelState model = init_model(1, 4, 4);
    ForwardCache cache;
    Logits gp(8, 8);
    FeatureMap gfd(4, 8, 8);
    CHECK_THROWS_AS(backward(model, cache, gp, gfd), std::logic_error);
}

TEST_CASE("zero upstream gradients produce zero parameter gradients") {
    ModelState model = init_model(13, 4, 4);
    const FeatureMap input = random_input(7, 16, 7);
    ForwardCache cache;
    forward(model, input, cache);
    backward(model, cache, Logits(16, 16), FeatureMap(4, 16, 16));
    for (const auto& p : model.params)
        for (double g : p.grad) CHECK(g == 0.0);
}

TEST_CASE("relu gates gradients when pre-activations are negative") {
    ModelState model = init_model(17, 2, 1);
    // push every enc1 pre-activation negative; nothing behind it can learn
    for (auto& v : model.param("enc1.b").value) v = -10.0;
    const FeatureMap input = random_input(4, 8, 9);
    ForwardCache cache;
    const ForwardOutputs out = forward(model, input, cache);
    Logits gp(8, 8);
    for (auto& v : gp.map().values()) v = 1.0;
    backward(model, cache, gp, FeatureMap(2, 8, 8));
    (void)out;
    for (double g : model.param("enc1.w").grad) CHECK(g == 0.0);
    // the head bias still sees gradient
    double head_bias = 0.0;
    for (double g : model.param("head.b").grad) head_bias += std::abs(g);
    CHECK(head_bias > 0.0);
}

TEST_CASE("probe objective gradients match central differences") {
    ModelState model = init_model(19, 4, 4);
    const FeatureMap input = random_input(7, 16, 11);

    // probe L = <A, p> + <B, f_D> with fixed random A, B
    rng::Xoshiro256StarStar gen(13);
    Logits a(16, 16);
    for (auto& v : a.map().values()) v = gen.uniform(-1.0, 1.0);
    FeatureMap b(4, 16, 16);
    for (auto& v : b.values()) v = gen.uniform(-1.0, 1.0);

    const auto probe = [&](const ModelState& m) {
        const ForwardOutputs out = forward(m, input);
        double acc = 0;
        for (std::size_t i = 0; i < out.p.map().values().size(); ++i)
            acc += a.map().values()[i] * out.p.map().values()[i];
        for (std::size_t i = 0; i < out.f_d.values().size(); ++i)
            acc += b.values()[i] * out.f_d.values()[i];
        return acc;
    };

    ForwardCache cache;
    forward(model, input, cache);
    backward(model, cache, a, b);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (auto& param : model.params) {
        for (std::size_t i = 0; i < param.value.size(); i += 17) { // sampled sweep
            const double saved = param.value[i];
            param.value[i] = saved + h;
            const double up = probe(model);
            param.value[i] = saved - h;
            const double down = probe(model);
            param.value[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double rel = std::abs(fd - param.grad[i]) /
                               std::max({1e-6, std::abs(fd), std::abs(param.grad[i])});
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("full objective gradients match central differences at 16x16") {
    ModelState model = init_model(23, 4, 4);
    const FeatureMap input = random_input(7, 16, 15);
    const BinaryMask label = random_mask(16, 17);
    const TotalLossConfig cfg{1.0, 1.0, ContrastiveMode::kSeparative};
    auto result = casc::testing::gradcheck(model, input, label, 8, cfg, 1e-5, 23);
    CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("sgd step: hand arithmetic, zero lr, divergence") {
    ModelState model = init_model(29, 2, 1);
    auto& p = model.params.front();
    p.value[0] = 1.0;
    p.grad[0] = 2.0; // d(theta^2)/dtheta at theta=1
    sgd_step(model, 0.1, 0.0);
    CHECK(p.value[0] == doctest::Approx(0.8));

    const ModelState before = model;
    model.params.front().grad[0] = 3.0;
    sgd_step(model, 0.0, 0.9);
    CHECK(model.checksum() == before.checksum());

    model.params.front().grad[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(sgd_step(model, 0.1, 0.9), "diverged", std::runtime_error);
}

TEST_CASE("momentum accumulates across steps") {
    ModelState model = init_model(31, 2, 1);
    auto& p = model.params.front();
    p.value[0] = 0.0;
    p.grad[0] = 1.0;
    sgd_step(model, 1.0, 0.5); // v=1, theta=-1
    CHECK(p.value[0] == doctest::Approx(-1.0));
    p.grad[0] = 1.0;
    sgd_step(model, 1.0, 0.5); // v=1.5, theta=-2.5
    CHECK(p.value[0] == doctest::Approx(-2.5));
}

TEST_CASE("checkpoint round-trip is stable and f32-faithful") {
    const std::string path = (std::filesystem::temp_directory_path() / "casc_ckpt_test.casc").string();
    ModelState model = init_model(37, 4, 4);
    save_checkpoint(model, path);
    const ModelState loaded = load_checkpoint(path);
    CHECK(loaded.arch.ch == 4);
    CHECK(loaded.arch.class_count == 4);

    // serialization is a fixed point after one load
    const std::string path2 = path + ".second";
    save_checkpoint(loaded, path2);
    const ModelState loaded2 = load_checkpoint(path2);
    CHECK(loaded.checksum() == loaded2.checksum());

    // reloaded forward outputs are identical across loads and within f32
    // rounding of the original
    const FeatureMap input = random_input(7, 16, 19);
    const ForwardOutputs a = forward(loaded, input);
    const ForwardOutputs b = forward(loaded2, input);
    CHECK(a.p.map().values() == b.p.map().values());
    const ForwardOutputs original = forward(model, input);
    for (std::size_t i = 0; i < a.p.map().values().size(); ++i)
        CHECK(a.p.map().values()[i] ==
              doctest::Approx(original.p.map().values()[i]).epsilon(1e-4));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("checkpoint loader rejects garbage") {
    const std::string path = (std::filesystem::temp_directory_path() / "casc_bad.casc").string();
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("notacheckpoint", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_SUITE_END();
