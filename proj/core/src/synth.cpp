#include "casc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "casc/rng.hpp"
#include "casc/trainer.hpp"

namespace casc {

namespace {

struct Ellipse {
    double cx, cy, rx, ry, angle;
    double hema, pas; // per-instance stain concentrations

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double u = (dx * ca + dy * sa) / rx;
        const double v = (-dx * sa + dy * ca) / ry;
        return u * u + v * v <= 1.0;
    }
    double reach() const { return std::max(rx, ry); }
};

std::string zero_padded(const char* prefix, Index value, int width) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%0*lld", prefix, width, static_cast<long long>(value));
    return buf;
}

// Smooth low-frequency intensity field: a couple of random cosine waves.
struct TextureField {
    double ax, ay, phase, bx, by, phase2;

    static TextureField random(rng::Xoshiro256StarStar& gen, double w, double h) {
        TextureField f;
        f.ax = gen.uniform(0.5, 2.0) * 2.0 * 3.14159265358979323846 / w;
        f.ay = gen.uniform(0.5, 2.0) * 2.0 * 3.14159265358979323846 / h;
        f.phase = gen.uniform(0.0, 6.28318);
        f.bx = gen.uniform(1.0, 3.0) * 2.0 * 3.14159265358979323846 / w;
        f.by = gen.uniform(1.0, 3.0) * 2.0 * 3.14159265358979323846 / h;
        f.phase2 = gen.uniform(0.0, 6.28318);
        return f;
    }
    double at(double x, double y) const {
        return 0.5 * std::cos(ax * x + ay * y + phase) +
               0.5 * std::cos(bx * x + by * y + phase2);
    }
};

} // namespace

void SynthParams::validate() const {
    require(patch_width >= 8 && patch_height >= 8, "synth: patch size too small");
    require(patch_width % 4 == 0 && patch_height % 4 == 0,
            "synth: patch size must be divisible by 4");
    require(train_patches >= 0 && val_patches >= 0 && test_patches >= 0,
            "synth: negative patch count");
    require(slides >= 3, "synth: need at least 3 slides");
    require(cells_min >= 0 && cells_min <= cells_max, "synth: bad cell count range");
    require(distractors_min >= 0 && distractors_min <= distractors_max,
            "synth: bad distractor count range");
    require(radius_min > 0.5 && radius_min <= radius_max, "synth: bad radius range");
    if (2.0 * radius_max + 6.0 > static_cast<double>(std::min(patch_width, patch_height)))
        throw std::invalid_argument("synth: impossible geometry, radius too large for patch");
}

StainProfile cell_profile(Index class_index) {
    // Four close but distinct appearance variants, one per cell class.
    static constexpr StainProfile kProfiles[4] = {
        {0.88, 0.30}, {0.80, 0.38}, {0.84, 0.26}, {0.78, 0.34}};
    return kProfiles[static_cast<std::size_t>(class_index % 4)];
}

StainProfile distractor_profile() { return {0.10, 0.80}; }

StainProfile background_profile() { return {0.04, 0.06}; }

std::vector<Index> plan_slide_sizes(const SynthParams& params) {
    params.validate();
    std::vector<std::string> slide_ids;
    for (Index s = 0; s < params.slides; ++s)
        slide_ids.push_back(zero_padded("slide_", s, 2));

    // The trainer splits slides 6:1:3 with the split sub-seed; size each
    // slide so the realized split carries exactly the requested patch counts.
    const SplitPlan plan = split_slides(slide_ids, rng::derive_seed(params.seed, "split"));

    const Index wanted[3] = {params.train_patches, params.val_patches, params.test_patches};
    const Split splits[3] = {Split::kTrain, Split::kVal, Split::kTest};
    std::vector<Index> sizes(static_cast<std::size_t>(params.slides), 0);
    for (int s = 0; s < 3; ++s) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < slide_ids.size(); ++i)
            if (plan.of(slide_ids[i]) == splits[s]) members.push_back(i);
        if (members.empty()) {
            if (wanted[s] > 0)
                throw std::invalid_argument("synth: no slide available for a requested split");
            continue;
        }
        const Index base = wanted[s] / static_cast<Index>(members.size());
        const Index extra = wanted[s] % static_cast<Index>(members.size());
        for (std::size_t m = 0; m < members.size(); ++m)
            sizes[members[m]] = base + (static_cast<Index>(m) < extra ? 1 : 0);
    }
    return sizes;
}

SynthDataset synth_dataset(const SynthParams& params) {
    params.validate();
    const std::vector<Index> sizes = plan_slide_sizes(params);

    SynthDataset dataset;
    for (Index s = 0; s < params.slides; ++s)
        dataset.slide_ids.push_back(zero_padded("slide_", s, 2));

    const StainMatrix stains = default_stain_matrix();
    const double w = static_cast<double>(params.patch_width);
    const double h = static_cast<double>(params.patch_height);

    Index patch_index = 0;
    for (Index s = 0; s < params.slides; ++s) {
        for (Index ps = 0; ps < sizes[static_cast<std::size_t>(s)]; ++ps, ++patch_index) {
            rng::Xoshiro256StarStar gen(rng::derive_seed(
                params.seed, "dataset", static_cast<std::uint64_t>(patch_index)));

            SynthPatch patch;
            patch.patch_id = zero_padded("patch_", patch_index, 4);
            patch.slide_id = dataset.slide_ids[static_cast<std::size_t>(s)];
            patch.class_index = patch_index % 4;

            const Index n_cells = gen.uniform_int(params.cells_min, params.cells_max);
            const Index n_dis = gen.uniform_int(params.distractors_min, params.distractors_max);

            std::vector<Ellipse> cells, distractors;
            const auto place = [&](std::vector<Ellipse>& bucket, double hema, double pas) {
                for (int attempt = 0; attempt < 200; ++attempt) {
                    Ellipse e;
                    e.rx = gen.uniform(params.radius_min, params.radius_max);
                    e.ry = gen.uniform(params.radius_min, params.radius_max);
                    e.angle = gen.uniform(0.0, 3.14159265358979323846);
                    e.hema = hema;
                    e.pas = pas;
                    const double margin = e.reach() + 2.0;
                    e.cx = gen.uniform(margin, w - margin);
                    e.cy = gen.uniform(margin, h - margin);
                    bool clashes = false;
                    for (const auto& list : {std::cref(cells), std::cref(distractors)})
                        for (const Ellipse& other : list.get()) {
                            const double dx = e.cx - other.cx, dy = e.cy - other.cy;
                            const double min_gap = e.reach() + other.reach() + 2.0;
                            if (dx * dx + dy * dy < min_gap * min_gap) {
                                clashes = true;
                                break;
                            }
                        }
                    if (!clashes) {
                        bucket.push_back(e);
                        return;
                    }
                }
            };
            const StainProfile cell = cell_profile(patch.class_index);
            const StainProfile dis = distractor_profile();
            for (Index i = 0; i < n_cells; ++i) {
                // mixed population: most cells stain strongly, a pale
                // minority sits close to the background and is genuinely
                // ambiguous; every instance also carries its own strength
                const bool pale = gen.uniform() < 0.3;
                const double mult = pale ? gen.uniform(0.30, 0.50) : gen.uniform(0.80, 1.50);
                place(cells, cell.hematoxylin * mult,
                      cell.pas * gen.uniform(0.8, 1.2));
            }
            for (Index i = 0; i < n_dis; ++i)
                place(distractors, dis.hematoxylin * gen.uniform(0.85, 1.15),
                      dis.pas * gen.uniform(0.85, 1.15));

            // concentration planes
            PixelGrid hema(params.patch_width, params.patch_height);
            PixelGrid pas(params.patch_width, params.patch_height);
            patch.clean_mask = BinaryMask(params.patch_width, params.patch_height);

            const TextureField texture = TextureField::random(gen, w, h);
            const StainProfile bg = background_profile();
            // per-patch tissue tint: patches are individually recognizable
            const double bg_h = bg.hematoxylin * gen.uniform(0.6, 1.6);
            const double bg_p = bg.pas * gen.uniform(0.6, 1.6);

            for (Index y = 0; y < params.patch_height; ++y) {
                for (Index x = 0; x < params.patch_width; ++x) {
                    const double fx = static_cast<double>(x), fy = static_cast<double>(y);
                    double h_conc = bg_h + 0.03 * texture.at(fx, fy) +
                                    gen.uniform(-0.01, 0.01);
                    double p_conc = bg_p + 0.04 * texture.at(fx + 11.0, fy + 7.0) +
                                    gen.uniform(-0.012, 0.012);
                    const Ellipse* hit = nullptr;
                    for (const Ellipse& e : cells)
                        if (e.contains(fx, fy)) {
                            hit = &e;
                            break;
                        }
                    if (hit) {
                        patch.clean_mask.set(x, y, true);
                    } else {
                        for (const Ellipse& e : distractors)
                            if (e.contains(fx, fy)) {
                                hit = &e;
                                break;
                            }
                    }
                    if (hit) {
                        h_conc = hit->hema + gen.uniform(-0.04, 0.04);
                        p_conc = hit->pas + gen.uniform(-0.04, 0.04);
                    }
                    hema.at(x, y) = std::max(0.0, h_conc);
                    pas.at(x, y) = std::max(0.0, p_conc);
                }
            }

            // render concentrations to RGB through the stain matrix
            patch.image.width = params.patch_width;
            patch.image.height = params.patch_height;
            patch.image.pixels.assign(
                static_cast<std::size_t>(3 * params.patch_width * params.patch_height), 0);
            for (Index y = 0; y < params.patch_height; ++y) {
                for (Index x = 0; x < params.patch_width; ++x) {
                    for (int ch = 0; ch < 3; ++ch) {
                        const double od = hema.at(x, y) * stains[0][static_cast<std::size_t>(ch)] +
                                          pas.at(x, y) * stains[1][static_cast<std::size_t>(ch)];
                        const double intensity = 256.0 * std::pow(10.0, -od) - 1.0;
                        patch.image.set(x, y, ch,
                                        static_cast<std::uint8_t>(
                                            std::clamp(std::llround(intensity), 0ll, 255ll)));
                    }
                }
            }
            dataset.patches.push_back(std::move(patch));
        }
    }
    return dataset;
}

} // namespace casc
