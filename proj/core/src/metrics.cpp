#include "casc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>

namespace casc {

namespace {

struct Labeling {
    std::vector<std::int32_t> label; // -1 = background
    std::int32_t count = 0;
};

Labeling label_components(const BinaryMask& mask) {
    const Index w = mask.width(), h = mask.height();
    Labeling out;
    out.label.assign(static_cast<std::size_t>(w * h), -1);
    constexpr int dx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    constexpr int dy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    for (Index start = 0, n = w * h; start < n; ++start) {
        if (!mask[start] || out.label[static_cast<std::size_t>(start)] >= 0) continue;
        const std::int32_t id = out.count++;
        std::deque<Index> queue{start};
        out.label[static_cast<std::size_t>(start)] = id;
        while (!queue.empty()) {
            const Index f = queue.front();
            queue.pop_front();
            const Index x = f % w, y = f / w;
            for (int d = 0; d < 8; ++d) {
                const Index nx = x + dx[d], ny = y + dy[d];
                if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                const Index nf = ny * w + nx;
                if (mask[nf] && out.label[static_cast<std::size_t>(nf)] < 0) {
                    out.label[static_cast<std::size_t>(nf)] = id;
                    queue.push_back(nf);
                }
            }
        }
    }
    return out;
}

BinaryMask dilate_chebyshev(const BinaryMask& mask, Index radius) {
    const Index w = mask.width(), h = mask.height();
    BinaryMask out(w, h);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            const Index x0 = std::max<Index>(0, x - radius), x1 = std::min<Index>(w - 1, x + radius);
            const Index y0 = std::max<Index>(0, y - radius), y1 = std::min<Index>(h - 1, y + radius);
            for (Index yy = y0; yy <= y1; ++yy)
                for (Index xx = x0; xx <= x1; ++xx) out.set(xx, yy, true);
        }
    return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::string bucket_for(double p) {
    if (p < 0.001) return "p < 0.001";
    if (p < 0.01) return "p < 0.01";
    if (p < 0.05) return "p < 0.05";
    return "n.s.";
}

} // namespace

double dice_score(const BinaryMask& pred, const BinaryMask& gt) {
    require(pred.same_shape(gt), "dice_score: shape mismatch");
    Index inter = 0, p = 0, g = 0;
    for (Index i = 0, n = pred.size(); i < n; ++i) {
        inter += pred[i] & gt[i];
        p += pred[i];
        g += gt[i];
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

double instance_f1(const BinaryMask& pred, const BinaryMask& gt, double iou_thresh) {
    require(pred.same_shape(gt), "instance_f1: shape mismatch");
    require(iou_thresh > 0.0 && iou_thresh <= 1.0, "instance_f1: iou_thresh must be in (0,1]");

    const Labeling lp = label_components(pred);
    const Labeling lg = label_components(gt);
    if (lp.count == 0 && lg.count == 0) return 1.0;
    if (lp.count == 0 || lg.count == 0) return 0.0;

    std::vector<Index> size_p(static_cast<std::size_t>(lp.count), 0);
    std::vector<Index> size_g(static_cast<std::size_t>(lg.count), 0);
    std::map<std::pair<std::int32_t, std::int32_t>, Index> inter;
    for (std::size_t i = 0; i < lp.label.size(); ++i) {
        if (lp.label[i] >= 0) ++size_p[static_cast<std::size_t>(lp.label[i])];
        if (lg.label[i] >= 0) ++size_g[static_cast<std::size_t>(lg.label[i])];
        if (lp.label[i] >= 0 && lg.label[i] >= 0) ++inter[{lp.label[i], lg.label[i]}];
    }

    struct Pair {
        double iou;
        std::int32_t p, g;
    };
    std::vector<Pair> pairs;
    for (const auto& [key, common] : inter) {
        const double unions = static_cast<double>(size_p[static_cast<std::size_t>(key.first)] +
                                                  size_g[static_cast<std::size_t>(key.second)] -
                                                  common);
        pairs.push_back({static_cast<double>(common) / unions, key.first, key.second});
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.p != b.p) return a.p < b.p;
        return a.g < b.g;
    });

    std::vector<bool> used_p(static_cast<std::size_t>(lp.count), false);
    std::vector<bool> used_g(static_cast<std::size_t>(lg.count), false);
    Index tp = 0;
    for (const Pair& pr : pairs) {
        if (pr.iou < iou_thresh) break;
        if (used_p[static_cast<std::size_t>(pr.p)] || used_g[static_cast<std::size_t>(pr.g)])
            continue;
        used_p[static_cast<std::size_t>(pr.p)] = true;
        used_g[static_cast<std::size_t>(pr.g)] = true;
        ++tp;
    }
    const Index fp = lp.count - tp;
    const Index fn = lg.count - tp;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::optional<double> region_iou(const BinaryMask& pred, const BinaryMask& region) {
    require(pred.same_shape(region), "region_iou: shape mismatch");
    Index inter = 0, r = 0;
    for (Index i = 0, n = pred.size(); i < n; ++i) {
        inter += pred[i] & region[i];
        r += region[i];
    }
    if (r == 0) return std::nullopt;
    return static_cast<double>(inter) / static_cast<double>(r);
}

std::optional<double> region_iou_dilated(const BinaryMask& pred, const BinaryMask& region) {
    require(pred.same_shape(region), "region_iou_dilated: shape mismatch");
    if (region.count() == 0) return std::nullopt;
    const BinaryMask window = dilate_chebyshev(region, 2);
    Index inter = 0, unions = 0;
    for (Index i = 0, n = pred.size(); i < n; ++i) {
        const int clipped = pred[i] & window[i];
        inter += clipped & region[i];
        unions += (clipped | region[i]);
    }
    return static_cast<double>(inter) / static_cast<double>(unions);
}

RegionReport training_region_report(const BinaryMask& pred, const BinaryMask& noisy_label,
                                    const BinaryMask& clean_gt) {
    require(pred.same_shape(noisy_label) && pred.same_shape(clean_gt),
            "training_region_report: shape mismatch");
    const Index w = pred.width(), h = pred.height();
    BinaryMask r_tp(w, h), r_fp(w, h), r_fn(w, h);
    for (Index i = 0, n = pred.size(); i < n; ++i) {
        r_tp[i] = noisy_label[i] & clean_gt[i];
        r_fp[i] = noisy_label[i] & static_cast<std::uint8_t>(1 - clean_gt[i]);
        r_fn[i] = clean_gt[i] & static_cast<std::uint8_t>(1 - noisy_label[i]);
    }
    RegionReport report;
    report.tp_dice = dice_score(pred, r_tp);
    report.tp_f1 = instance_f1(pred, r_tp);
    report.fp_iou = region_iou(pred, r_fp);
    report.fn_iou = region_iou(pred, r_fn);
    report.fp_iou_dilated = region_iou_dilated(pred, r_fp);
    report.fn_iou_dilated = region_iou_dilated(pred, r_fn);
    return report;
}

std::pair<double, double> label_accuracy(const BinaryMask& noisy, const BinaryMask& clean) {
    return {dice_score(noisy, clean), instance_f1(noisy, clean)};
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "wilcoxon_signed_rank: length mismatch");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    WilcoxonResult result;
    if (diffs.empty()) {
        result.no_signal = true;
        result.p_bucket = "no-signal";
        return result;
    }
    if (diffs.size() < 5)
        throw std::invalid_argument("wilcoxon_signed_rank: need >= 5 nonzero differences");

    const std::size_t n = diffs.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&diffs](std::size_t x, std::size_t y) {
        return std::abs(diffs[x]) < std::abs(diffs[y]);
    });

    // average ranks over ties
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n &&
               std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]]))
            ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }

    double w_plus = 0, w_minus = 0;
    for (std::size_t t = 0; t < n; ++t)
        (diffs[t] > 0 ? w_plus : w_minus) += rank[t];
    result.statistic = std::min(w_plus, w_minus);
    result.n = n;

    if (n <= 12) {
        // exact two-sided p over all sign patterns
        result.exact = true;
        const double total = w_plus + w_minus;
        const std::size_t patterns = static_cast<std::size_t>(1) << n;
        std::size_t count = 0;
        for (std::size_t bits = 0; bits < patterns; ++bits) {
            double t_plus = 0;
            for (std::size_t k = 0; k < n; ++k)
                if (bits & (static_cast<std::size_t>(1) << k)) t_plus += rank[k];
            if (std::min(t_plus, total - t_plus) <= result.statistic + 1e-12) ++count;
        }
        result.p_value = static_cast<double>(count) / static_cast<double>(patterns);
    } else {
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        double tie_correction = 0.0;
        i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n &&
                   std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]]))
                ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_correction += t * t * t - t;
            i = j + 1;
        }
        const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_correction / 48.0;
        const double z = (result.statistic - mean + 0.5) / std::sqrt(var);
        result.p_value = std::min(1.0, 2.0 * normal_cdf(z));
    }
    result.p_bucket = bucket_for(result.p_value);
    return result;
}

} // namespace casc
