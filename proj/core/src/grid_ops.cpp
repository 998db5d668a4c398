#include "casc/grid_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace casc {

PixelGrid softmax_foreground(const Logits& logits) {
    const Index w = logits.width(), h = logits.height();
    PixelGrid c(w, h);
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
            const double bg = logits.bg(x, y);
            const double fg = logits.fg(x, y);
            if (!std::isfinite(bg) || !std::isfinite(fg))
                throw std::invalid_argument("invalid logits");
            const double m = std::max(bg, fg);
            const double eb = std::exp(bg - m);
            const double ef = std::exp(fg - m);
            // keep the value strictly inside (0,1) even when one exp underflows
            c.at(x, y) = std::clamp(ef / (ef + eb), std::numeric_limits<double>::min(),
                                    1.0 - std::numeric_limits<double>::epsilon() / 2.0);
        }
    }
    return c;
}

Logits softmax_foreground_backward(const PixelGrid& c, const PixelGrid& grad_c) {
    require(c.same_shape(grad_c), "softmax_foreground_backward: shape mismatch");
    Logits g(c.width(), c.height());
    for (Index i = 0, n = c.size(); i < n; ++i) {
        const double s = grad_c[i] * c[i] * (1.0 - c[i]);
        g.map().at_flat(1, i) = s;
        g.map().at_flat(0, i) = -s;
    }
    return g;
}

double cosine(const FeatureVector& u, const FeatureVector& v) {
    require(u.size() == v.size(), "cosine: length mismatch");
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu < kEpsNorm || nv < kEpsNorm) return 0.0;
    return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

void cosine_backward(const FeatureVector& u, const FeatureVector& v, double upstream,
                     FeatureVector& gu, FeatureVector& gv) {
    double dot = 0, nu2 = 0, nv2 = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu2 += u[i] * u[i];
        nv2 += v[i] * v[i];
    }
    const double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
    if (nu < kEpsNorm || nv < kEpsNorm) return;
    const double inv = 1.0 / (nu * nv);
    const double s = dot * inv;
    for (std::size_t i = 0; i < u.size(); ++i) {
        gu[i] += upstream * (v[i] * inv - s * u[i] / nu2);
        gv[i] += upstream * (u[i] * inv - s * v[i] / nv2);
    }
}

std::vector<Index> top_k_indices(const PixelGrid& grid, Index k) {
    const Index n = grid.size();
    require(k >= 1 && k <= n, "top_k_indices: k out of range");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    const auto better = [&grid](Index a, Index b) {
        if (grid[a] != grid[b]) return grid[a] > grid[b];
        return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

} // namespace casc
