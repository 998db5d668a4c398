#include "casc/noise.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "casc/rng.hpp"

namespace casc {

namespace {

std::array<double, 3> normalized(std::array<double, 3> v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

std::array<double, 3> cross(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Inverse of M^T, so that conc = inv * od.
std::array<std::array<double, 3>, 3> mixing_inverse(const StainMatrix& stains) {
    // mixing matrix A = M^T: A[i][j] = stains[j][i]
    double a[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a[i][j] = stains[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                       a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                       a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if (std::abs(det) < 1e-9) throw std::invalid_argument("singular stain matrix");
    const double inv_det = 1.0 / det;
    std::array<std::array<double, 3>, 3> inv;
    inv[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * inv_det;
    inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv_det;
    inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv_det;
    inv[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * inv_det;
    inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv_det;
    inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv_det;
    inv[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * inv_det;
    inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv_det;
    inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv_det;
    return inv;
}

} // namespace

StainMatrix default_stain_matrix() {
    return {normalized({0.650, 0.704, 0.286}),   // hematoxylin
            normalized({0.175, 0.972, 0.154}),   // PAS-analog
            normalized(cross(normalized({0.650, 0.704, 0.286}),
                             normalized({0.175, 0.972, 0.154})))};
}

std::array<PixelGrid, 3> optical_density(const ImageRgb8& image) {
    std::array<PixelGrid, 3> od{PixelGrid(image.width, image.height),
                                PixelGrid(image.width, image.height),
                                PixelGrid(image.width, image.height)};
    for (Index y = 0; y < image.height; ++y)
        for (Index x = 0; x < image.width; ++x)
            for (int ch = 0; ch < 3; ++ch)
                od[static_cast<std::size_t>(ch)].at(x, y) =
                    -std::log10((static_cast<double>(image.at(x, y, ch)) + 1.0) / 256.0);
    return od;
}

std::array<PixelGrid, 3> deconvolve_od(const std::array<PixelGrid, 3>& od,
                                       const StainMatrix& stains) {
    const auto inv = mixing_inverse(stains);
    const Index w = od[0].width(), h = od[0].height();
    std::array<PixelGrid, 3> conc{PixelGrid(w, h), PixelGrid(w, h), PixelGrid(w, h)};
    for (Index i = 0, n = w * h; i < n; ++i) {
        for (int s = 0; s < 3; ++s) {
            double v = inv[static_cast<std::size_t>(s)][0] * od[0][i] +
                       inv[static_cast<std::size_t>(s)][1] * od[1][i] +
                       inv[static_cast<std::size_t>(s)][2] * od[2][i];
            conc[static_cast<std::size_t>(s)][i] = std::max(0.0, v);
        }
    }
    return conc;
}

std::array<PixelGrid, 3> remix_od(const std::array<PixelGrid, 3>& conc,
                                  const StainMatrix& stains) {
    const Index w = conc[0].width(), h = conc[0].height();
    std::array<PixelGrid, 3> od{PixelGrid(w, h), PixelGrid(w, h), PixelGrid(w, h)};
    for (Index i = 0, n = w * h; i < n; ++i)
        for (int ch = 0; ch < 3; ++ch)
            od[static_cast<std::size_t>(ch)][i] =
                conc[0][i] * stains[0][static_cast<std::size_t>(ch)] +
                conc[1][i] * stains[1][static_cast<std::size_t>(ch)] +
                conc[2][i] * stains[2][static_cast<std::size_t>(ch)];
    return od;
}

std::array<PixelGrid, 3> color_deconvolve(const ImageRgb8& image, const StainMatrix& stains) {
    return deconvolve_od(optical_density(image), stains);
}

PixelGrid stain_to_8bit(const PixelGrid& concentration) {
    PixelGrid out(concentration.width(), concentration.height());
    for (Index i = 0, n = out.size(); i < n; ++i)
        out[i] = std::clamp(std::round(255.0 * concentration[i] / kMaxOpticalDensity), 0.0, 255.0);
    return out;
}

BinaryMask threshold_mask(const PixelGrid& channel, double threshold) {
    BinaryMask mask(channel.width(), channel.height());
    for (Index i = 0, n = channel.size(); i < n; ++i) mask[i] = channel[i] >= threshold ? 1 : 0;
    return mask;
}

namespace {

// Neighborhood offsets shared by component labeling.
constexpr int kMooreDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kMooreDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

// Clockwise outer-boundary walk in the edge (crack) formulation of
// Moore-neighbor tracing. The walker sits on one of four pixel borders
// (0: left edge moving up, 1: top moving right, 2: right moving down,
// 3: bottom moving left) with the component interior on its right. Each
// border has a unique successor, so the walk provably returns to the
// starting border; that first return is the stopping condition.
struct EdgeState {
    Index x, y;
    int border;
    bool operator==(const EdgeState&) const = default;
};

// For each border: try the outward diagonal pixel first, then the straight
// neighbor, else turn on the spot. {dx, dy, next border}.
constexpr int kEdgeStep[4][3][3] = {
    {{-1, -1, 3}, {0, -1, 0}, {0, 0, 1}},
    {{1, -1, 0}, {1, 0, 1}, {0, 0, 2}},
    {{1, 1, 1}, {0, 1, 2}, {0, 0, 3}},
    {{-1, 1, 2}, {-1, 0, 3}, {0, 0, 0}},
};

std::vector<Point> trace_boundary(const BinaryMask& mask, Point start) {
    const Index w = mask.width(), h = mask.height();
    const auto fg = [&](Index x, Index y) {
        return x >= 0 && x < w && y >= 0 && y < h && mask.at(x, y);
    };

    // start is the first row-major pixel of its component, so its west
    // neighbor is background and the left border is on the outer boundary.
    const EdgeState initial{start.x, start.y, 0};
    std::vector<Point> boundary{start};

    EdgeState cur = initial;
    bool closed = false;
    const std::size_t cap = static_cast<std::size_t>(4 * w * h + 4);
    for (std::size_t steps = 0; steps < cap && !closed; ++steps) {
        EdgeState next = cur;
        for (int t = 0; t < 3; ++t) {
            const auto& step = kEdgeStep[cur.border][t];
            const Index nx = cur.x + step[0], ny = cur.y + step[1];
            if (t == 2 || fg(nx, ny)) {
                next = {nx, ny, step[2]};
                break;
            }
        }
        closed = (next == initial);
        if (!closed && (next.x != cur.x || next.y != cur.y))
            boundary.push_back({next.x, next.y});
        cur = next;
    }
    if (!closed) throw std::logic_error("contour tracing failed to terminate");
    if (boundary.size() > 1 && boundary.back() == boundary.front()) boundary.pop_back();
    return boundary;
}

} // namespace

std::vector<Contour> extract_contours(const BinaryMask& mask) {
    const Index w = mask.width(), h = mask.height();
    std::vector<std::int32_t> label(static_cast<std::size_t>(w * h), -1);
    std::vector<Contour> contours;

    for (Index sy = 0; sy < h; ++sy) {
        for (Index sx = 0; sx < w; ++sx) {
            const Index flat = sy * w + sx;
            if (!mask[flat] || label[static_cast<std::size_t>(flat)] >= 0) continue;

            const auto id = static_cast<std::int32_t>(contours.size());
            Contour contour;
            double cx = 0, cy = 0;
            std::deque<Point> queue{{sx, sy}};
            label[static_cast<std::size_t>(flat)] = id;
            while (!queue.empty()) {
                const Point p = queue.front();
                queue.pop_front();
                contour.area += 1;
                cx += static_cast<double>(p.x);
                cy += static_cast<double>(p.y);
                for (int d = 0; d < 8; ++d) {
                    const Index nx = p.x + kMooreDx[d], ny = p.y + kMooreDy[d];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    const Index nf = ny * w + nx;
                    if (mask[nf] && label[static_cast<std::size_t>(nf)] < 0) {
                        label[static_cast<std::size_t>(nf)] = id;
                        queue.push_back({nx, ny});
                    }
                }
            }
            contour.centroid_x = cx / static_cast<double>(contour.area);
            contour.centroid_y = cy / static_cast<double>(contour.area);
            contour.boundary = trace_boundary(mask, {sx, sy});
            contours.push_back(std::move(contour));
        }
    }
    return contours;
}

void fill_contour(const Contour& contour, BinaryMask& target) {
    const Index w = target.width(), h = target.height();
    // Flood the background of a 1-pixel padded canvas, 4-connected; anything
    // unreachable (including the painted boundary) is the filled component.
    const Index pw = w + 2, ph = h + 2;
    std::vector<std::uint8_t> state(static_cast<std::size_t>(pw * ph), 0); // 1=boundary, 2=outside
    for (const Point& p : contour.boundary)
        state[static_cast<std::size_t>((p.y + 1) * pw + (p.x + 1))] = 1;

    std::deque<Index> queue{0};
    state[0] = 2;
    while (!queue.empty()) {
        const Index f = queue.front();
        queue.pop_front();
        const Index x = f % pw, y = f / pw;
        const Index nxs[4] = {x - 1, x + 1, x, x};
        const Index nys[4] = {y, y, y - 1, y + 1};
        for (int d = 0; d < 4; ++d) {
            if (nxs[d] < 0 || nxs[d] >= pw || nys[d] < 0 || nys[d] >= ph) continue;
            const Index nf = nys[d] * pw + nxs[d];
            if (state[static_cast<std::size_t>(nf)] == 0) {
                state[static_cast<std::size_t>(nf)] = 2;
                queue.push_back(nf);
            }
        }
    }
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            if (state[static_cast<std::size_t>((y + 1) * pw + (x + 1))] != 2) target.set(x, y, true);
}

BinaryMask contour_fill_mask(const Contour& contour, Index width, Index height) {
    BinaryMask mask(width, height);
    fill_contour(contour, mask);
    return mask;
}

void NoiseRecipe::validate() const {
    require(missing_ratio >= 0.0 && missing_ratio <= 1.0,
            "NoiseRecipe: missing_ratio must be in [0,1]");
    require(area_min <= area_max, "NoiseRecipe: area_min must be <= area_max");
    require(intensity_threshold >= 0.0 && intensity_threshold <= 255.0,
            "NoiseRecipe: intensity threshold must be in [0,255]");
    require(rho_fp >= 0.0, "NoiseRecipe: rho_fp must be >= 0");
}

NoiseRecipe NoiseRecipe::scaled_for(Index width, Index height) {
    NoiseRecipe recipe;
    const double scale =
        static_cast<double>(width) * static_cast<double>(height) / (512.0 * 512.0);
    recipe.area_min = std::max<Index>(1, static_cast<Index>(std::llround(30.0 * scale)));
    recipe.area_max = std::max<Index>(recipe.area_min,
                                      static_cast<Index>(std::llround(1500.0 * scale)));
    return recipe;
}

InjectResult inject_fp(const ImageRgb8& image, const BinaryMask& annotation,
                       const NoiseRecipe& recipe, const StainMatrix& stains) {
    require(annotation.width() == image.width && annotation.height() == image.height,
            "inject_fp: image and annotation sizes differ");
    recipe.validate();

    InjectResult result;
    result.noisy = annotation;

    const std::vector<Contour> existing = extract_contours(annotation);
    result.limit = static_cast<Index>(
        std::llround(recipe.rho_fp * static_cast<double>(existing.size())));
    if (existing.empty()) {
        result.empty_annotation = true;
        result.limit = 0;
        return result;
    }

    const auto conc = color_deconvolve(image, stains);
    const PixelGrid pas8 = stain_to_8bit(conc[1]);
    const BinaryMask candidate_mask = threshold_mask(pas8, recipe.intensity_threshold);
    std::vector<Contour> candidates = extract_contours(candidate_mask);

    // Proximity: Euclidean centroid distance to the nearest annotated pixel.
    std::vector<Point> annotated;
    for (Index y = 0; y < annotation.height(); ++y)
        for (Index x = 0; x < annotation.width(); ++x)
            if (annotation.at(x, y)) annotated.push_back({x, y});
    std::vector<double> dist(candidates.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        for (const Point& p : annotated) {
            const double dx = candidates[i].centroid_x - static_cast<double>(p.x);
            const double dy = candidates[i].centroid_y - static_cast<double>(p.y);
            dist[i] = std::min(dist[i], dx * dx + dy * dy);
        }
    }
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&dist](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

    Index added = 0;
    for (std::size_t oi = 0; oi < order.size() && added < result.limit; ++oi) {
        const Contour& cand = candidates[order[oi]];
        if (cand.area < recipe.area_min || cand.area > recipe.area_max) continue;
        const BinaryMask fill = contour_fill_mask(cand, annotation.width(), annotation.height());
        bool overlaps = false;
        for (Index i = 0, n = fill.size(); i < n && !overlaps; ++i)
            if (fill[i] && result.noisy[i]) overlaps = true;
        if (overlaps) continue;

        for (Index i = 0, n = fill.size(); i < n; ++i)
            if (fill[i]) result.noisy[i] = 1;
        result.report.push_back(
            {added, true, cand.area, cand.centroid_x, cand.centroid_y});
        ++added;
    }
    return result;
}

RemoveResult remove_fn(const BinaryMask& mask, double missing_ratio, std::uint64_t seed) {
    require(missing_ratio >= 0.0 && missing_ratio <= 1.0,
            "remove_fn: missing_ratio must be in [0,1]");
    std::vector<Contour> contours = extract_contours(mask);
    rng::Xoshiro256StarStar gen(seed);
    rng::shuffle(contours, gen);

    const auto n = static_cast<double>(contours.size());
    const Index limit = static_cast<Index>(std::floor((1.0 - missing_ratio) * n));

    RemoveResult result;
    result.noisy = BinaryMask(mask.width(), mask.height());
    result.kept = limit;
    for (std::size_t i = 0; i < contours.size(); ++i) {
        if (static_cast<Index>(i) < limit) {
            fill_contour(contours[i], result.noisy);
        } else {
            result.report.push_back({static_cast<Index>(result.report.size()), false,
                                     contours[i].area, contours[i].centroid_x,
                                     contours[i].centroid_y});
        }
    }
    return result;
}

} // namespace casc
