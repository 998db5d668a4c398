#include "casc/consensus.hpp"

#include <cassert>
#include <cmath>

namespace casc {

ConsensusPartition consensus_partition(const PixelGrid& c, const BinaryMask& y_l, double tau) {
    require(y_l.same_shape(c), "consensus_partition: shape mismatch");
    require(tau > 0.0 && tau < 1.0, "consensus_partition: tau must be in (0,1)");
    const Index w = c.width(), h = c.height();
    ConsensusPartition part{BinaryMask(w, h), BinaryMask(w, h), BinaryMask(w, h),
                            BinaryMask(w, h)};
    for (Index i = 0, n = c.size(); i < n; ++i) {
        const bool model_pos = c[i] >= tau;
        const bool human_pos = y_l[i] != 0;
        if (model_pos && human_pos)
            part.cp[i] = 1;
        else if (!model_pos && !human_pos)
            part.cn[i] = 1;
        else if (model_pos)
            part.dm[i] = 1;
        else
            part.dh[i] = 1;
    }
    return part;
}

Index default_k(Index width, Index height) {
    const double frac = 0.01 * static_cast<double>(width) * static_cast<double>(height);
    Index k = std::max<Index>(16, static_cast<Index>(std::llround(frac)));
    if (k % 2 != 0) ++k;
    return k;
}

std::optional<CellDistillation> distill_cell_feature(const FeatureMap& f_d, const PixelGrid& c,
                                                     const BinaryMask& y_l, Index k) {
    require(f_d.width() == c.width() && f_d.height() == c.height(),
            "distill_cell_feature: feature map / confidence shape mismatch");
    require(y_l.same_shape(c), "distill_cell_feature: annotation shape mismatch");
    require(k >= 1 && k <= c.size(), "distill_cell_feature: k out of range");

    PixelGrid a_cp(c.width(), c.height());
    double peak = 0.0;
    for (Index i = 0, n = c.size(); i < n; ++i) {
        a_cp[i] = c[i] * y_l[i];
        peak = std::max(peak, a_cp[i]);
    }
    if (peak == 0.0) return std::nullopt; // no-consensus

    CellDistillation out;
    out.indices = top_k_indices(a_cp, k);
    out.f_cell.assign(static_cast<std::size_t>(f_d.channels()), 0.0);
    for (Index idx : out.indices)
        for (Index ch = 0; ch < f_d.channels(); ++ch)
            out.f_cell[static_cast<std::size_t>(ch)] += f_d.at_flat(ch, idx);
    for (auto& v : out.f_cell) v /= static_cast<double>(k);
    return out;
}

DisagreementIndices disagreement_indices(const PixelGrid& c, const BinaryMask& y_l, Index k) {
    require(y_l.same_shape(c), "disagreement_indices: shape mismatch");
    require(k % 2 == 0, "k must be even");
    require(k >= 2 && k <= c.size(), "disagreement_indices: k out of range");

    PixelGrid a_dm(c.width(), c.height());
    PixelGrid a_dh(c.width(), c.height());
    for (Index i = 0, n = c.size(); i < n; ++i) {
        a_dm[i] = c[i] * (1.0 - y_l[i]);
        a_dh[i] = (1.0 - c[i]) * y_l[i];
    }
    DisagreementIndices out;
    out.dm = top_k_indices(a_dm, k / 2);
    out.dh = top_k_indices(a_dh, k / 2);
    // binary y_l gives a_DM and a_DH disjoint supports: a pixel can sit in
    // both lists only as a zero-score filler
    for (Index idx : out.dm)
        if (a_dm[idx] > 0.0) assert(a_dh[idx] == 0.0);
    return out;
}

namespace {

// min-max rescale to [0,1]; a constant vector maps to all-0.5.
void minmax_rescale(const std::vector<double>& s, std::vector<double>& out, std::size_t& imin,
                    std::size_t& imax, double& range) {
    imin = 0;
    imax = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] < s[imin]) imin = i;
        if (s[i] > s[imax]) imax = i;
    }
    range = s[imax] - s[imin];
    out.resize(s.size());
    if (range < 1e-12) {
        std::fill(out.begin(), out.end(), 0.5);
        range = 0.0;
        return;
    }
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = (s[i] - s[imin]) / range;
}

void softmax_vec(const std::vector<double>& u, std::vector<double>& out) {
    double m = u[0];
    for (double v : u) m = std::max(m, v);
    out.resize(u.size());
    double sum = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        out[i] = std::exp(u[i] - m);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
}

FeatureVector gather_column(const FeatureMap& f_d, Index flat) {
    FeatureVector col(static_cast<std::size_t>(f_d.channels()));
    for (Index ch = 0; ch < f_d.channels(); ++ch)
        col[static_cast<std::size_t>(ch)] = f_d.at_flat(ch, flat);
    return col;
}

} // namespace

NoiseDistillation distill_noise_feature(const FeatureMap& f_d, const std::vector<Index>& ind_dm,
                                        const std::vector<Index>& ind_dh,
                                        const FeatureVector& f_cell) {
    require(!ind_dm.empty() && !ind_dh.empty(), "distill_noise_feature: empty index lists");
    require(f_cell.size() == static_cast<std::size_t>(f_d.channels()),
            "distill_noise_feature: f_cell length mismatch");

    NoiseDistillation out;
    out.indices = ind_dm;
    out.indices.insert(out.indices.end(), ind_dh.begin(), ind_dh.end());
    const std::size_t n = out.indices.size();

    out.s_cell.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.s_cell[i] = cosine(gather_column(f_d, out.indices[i]), f_cell);

    std::vector<double> normed;
    std::size_t imin, imax;
    double range;
    minmax_rescale(out.s_cell, normed, imin, imax, range);

    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = 1.0 - normed[i];
    softmax_vec(u, out.weights);

    out.f_noise.assign(f_cell.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Index idx = out.indices[i];
        for (Index ch = 0; ch < f_d.channels(); ++ch)
            out.f_noise[static_cast<std::size_t>(ch)] += out.weights[i] * f_d.at_flat(ch, idx);
    }
    return out;
}

SimilarityMaps similarity_maps(const FeatureMap& f_d, const FeatureVector& f_cell,
                               const FeatureVector& f_noise) {
    require(f_cell.size() == static_cast<std::size_t>(f_d.channels()) &&
                f_noise.size() == f_cell.size(),
            "similarity_maps: channel mismatch");
    SimilarityMaps maps{PixelGrid(f_d.width(), f_d.height()), PixelGrid(f_d.width(), f_d.height())};
    FeatureVector col(f_cell.size());
    for (Index i = 0, n = f_d.plane(); i < n; ++i) {
        for (Index ch = 0; ch < f_d.channels(); ++ch)
            col[static_cast<std::size_t>(ch)] = f_d.at_flat(ch, i);
        maps.sim_cell[i] = cosine(col, f_cell);
        maps.sim_noise[i] = cosine(col, f_noise);
    }
    return maps;
}

ConsensusArtifacts build_consensus_artifacts(const FeatureMap& f_d, const PixelGrid& c,
                                             const BinaryMask& y_l, Index k) {
    ConsensusArtifacts art;
    auto cell = distill_cell_feature(f_d, c, y_l, k);
    if (!cell) return art; // no-consensus fallback

    auto dis = disagreement_indices(c, y_l, k);
    // a_DM and a_DH have disjoint supports for binary y_l, so a pixel can be
    // in both lists only with score zero on one side; the lists themselves
    // never alias the same scored pixel.
    auto noise = distill_noise_feature(f_d, dis.dm, dis.dh, cell->f_cell);
    auto maps = similarity_maps(f_d, cell->f_cell, noise.f_noise);

    art.no_consensus = false;
    art.f_cell = std::move(cell->f_cell);
    art.cell_indices = std::move(cell->indices);
    art.f_noise = std::move(noise.f_noise);
    art.noise_indices = std::move(noise.indices);
    art.noise_weights = std::move(noise.weights);
    art.s_cell = std::move(noise.s_cell);
    art.sim_cell = std::move(maps.sim_cell);
    art.sim_noise = std::move(maps.sim_noise);
    return art;
}

void distillation_backward(const FeatureMap& f_d, const ConsensusArtifacts& art,
                           const FeatureVector& grad_f_cell, const FeatureVector& grad_f_noise,
                           FeatureMap& grad_f_d) {
    if (art.no_consensus) return;
    const std::size_t n = art.noise_indices.size();
    const std::size_t chs = art.f_cell.size();

    // f_noise = sum_i w_i * fm_i
    std::vector<double> g_w(n, 0.0);
    std::vector<FeatureVector> g_fm(n, FeatureVector(chs, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const Index idx = art.noise_indices[i];
        for (std::size_t ch = 0; ch < chs; ++ch) {
            const double fm = f_d.at_flat(static_cast<Index>(ch), idx);
            g_w[i] += grad_f_noise[ch] * fm;
            g_fm[i][ch] += art.noise_weights[i] * grad_f_noise[ch];
        }
    }

    // w = softmax(u): g_u = w .* (g_w - <g_w, w>)
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += g_w[i] * art.noise_weights[i];
    std::vector<double> g_u(n);
    for (std::size_t i = 0; i < n; ++i) g_u[i] = art.noise_weights[i] * (g_w[i] - dot);

    // u = 1 - shat
    std::vector<double> g_shat(n);
    for (std::size_t i = 0; i < n; ++i) g_shat[i] = -g_u[i];

    // shat = (s - s_min) / range; constant input carries no gradient.
    std::size_t imin = 0, imax = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (art.s_cell[i] < art.s_cell[imin]) imin = i;
        if (art.s_cell[i] > art.s_cell[imax]) imax = i;
    }
    const double range = art.s_cell[imax] - art.s_cell[imin];
    std::vector<double> g_s(n, 0.0);
    if (range >= 1e-12) {
        double sum_gshat = 0, weighted = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sum_gshat += g_shat[i];
            weighted += g_shat[i] * (art.s_cell[i] - art.s_cell[imin]);
        }
        for (std::size_t i = 0; i < n; ++i) g_s[i] = g_shat[i] / range;
        g_s[imin] -= sum_gshat / range;
        g_s[imax] -= weighted / (range * range);
        g_s[imin] += weighted / (range * range);
    }

    // s_i = cosine(fm_i, f_cell)
    FeatureVector g_fcell = grad_f_cell;
    for (std::size_t i = 0; i < n; ++i) {
        if (g_s[i] == 0.0) continue;
        FeatureVector fm(chs);
        for (std::size_t ch = 0; ch < chs; ++ch)
            fm[ch] = f_d.at_flat(static_cast<Index>(ch), art.noise_indices[i]);
        cosine_backward(fm, art.f_cell, g_s[i], g_fm[i], g_fcell);
    }

    // scatter candidate gradients
    for (std::size_t i = 0; i < n; ++i) {
        const Index idx = art.noise_indices[i];
        for (std::size_t ch = 0; ch < chs; ++ch)
            grad_f_d.at_flat(static_cast<Index>(ch), idx) += g_fm[i][ch];
    }

    // f_cell = mean of gathered columns
    const double inv_k = 1.0 / static_cast<double>(art.cell_indices.size());
    for (Index idx : art.cell_indices)
        for (std::size_t ch = 0; ch < chs; ++ch)
            grad_f_d.at_flat(static_cast<Index>(ch), idx) += inv_k * g_fcell[ch];
}

} // namespace casc
