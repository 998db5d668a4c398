#include "casc/loss.hpp"

#include <algorithm>
#include <cmath>

namespace casc {

namespace {

void softmax_vec(const FeatureVector& x, FeatureVector& out) {
    double m = x[0];
    for (double v : x) m = std::max(m, v);
    out.resize(x.size());
    double sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
}

// Divergence D = KL(P||Q) + MSE(P,Q) on softmax-normalized features, plus its
// gradients with respect to the raw features when requested.
double divergence(const FeatureVector& f_cell, const FeatureVector& f_noise,
                  FeatureVector* grad_cell, FeatureVector* grad_noise) {
    const std::size_t n = f_cell.size();
    FeatureVector p, q;
    softmax_vec(f_cell, p);
    softmax_vec(f_noise, q);

    double kl = 0, mse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double qc = std::max(q[i], kKlFloor);
        kl += p[i] * std::log(p[i] / qc);
        const double d = p[i] - q[i];
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    const double value = kl + mse;
    if (!grad_cell) return value;

    FeatureVector gp(n), gq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double qc = std::max(q[i], kKlFloor);
        gp[i] = std::log(p[i] / qc) + 1.0 + 2.0 * (p[i] - q[i]) / static_cast<double>(n);
        gq[i] = -2.0 * (p[i] - q[i]) / static_cast<double>(n);
        if (q[i] >= kKlFloor) gq[i] -= p[i] / qc;
    }
    // softmax Jacobian: dL/dx_j = p_j * (g_j - <g, p>)
    double dp = 0, dq = 0;
    for (std::size_t i = 0; i < n; ++i) {
        dp += gp[i] * p[i];
        dq += gq[i] * q[i];
    }
    grad_cell->resize(n);
    grad_noise->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        (*grad_cell)[i] = p[i] * (gp[i] - dp);
        (*grad_noise)[i] = q[i] * (gq[i] - dq);
    }
    return value;
}

} // namespace

PixelGrid omega_c(const PixelGrid& c, const BinaryMask& y_l) {
    require(y_l.same_shape(c), "omega_c: shape mismatch");
    PixelGrid out(c.width(), c.height());
    for (Index i = 0, n = c.size(); i < n; ++i)
        out[i] = std::exp(c[i] * y_l[i] + (1.0 - c[i]) * (1.0 - y_l[i]));
    return out;
}

PixelGrid omega_sim(const PixelGrid& sim_cell, const PixelGrid& sim_noise) {
    require(sim_cell.same_shape(sim_noise), "omega_sim: shape mismatch");
    PixelGrid out(sim_cell.width(), sim_cell.height());
    for (Index i = 0, n = out.size(); i < n; ++i) out[i] = std::exp(sim_cell[i] - sim_noise[i]);
    return out;
}

double weighted_bce(const PixelGrid& c, const BinaryMask& y_l, const PixelGrid& weight) {
    require(y_l.same_shape(c) && weight.same_shape(c), "weighted_bce: shape mismatch");
    const Index n = c.size();
    double acc = 0;
    for (Index i = 0; i < n; ++i) {
        const double p = std::clamp(c[i], kEpsProb, 1.0 - kEpsProb);
        acc += weight[i] * (-(double)y_l[i] * std::log(p) -
                            (1.0 - (double)y_l[i]) * std::log(1.0 - p));
    }
    return acc / static_cast<double>(n);
}

void weighted_bce_backward(const PixelGrid& c, const BinaryMask& y_l, const PixelGrid& weight,
                           double upstream, PixelGrid& grad_c) {
    const Index n = c.size();
    const double scale = upstream / static_cast<double>(n);
    for (Index i = 0; i < n; ++i) {
        if (c[i] <= kEpsProb || c[i] >= 1.0 - kEpsProb) continue; // clamped: flat
        grad_c[i] += scale * weight[i] * (-(double)y_l[i] / c[i] +
                                          (1.0 - (double)y_l[i]) / (1.0 - c[i]));
    }
}

double weighted_soft_dice(const PixelGrid& c, const BinaryMask& y_l, const PixelGrid& weight) {
    require(y_l.same_shape(c) && weight.same_shape(c), "weighted_soft_dice: shape mismatch");
    double num = 0, den = 0;
    for (Index i = 0, n = c.size(); i < n; ++i) {
        num += weight[i] * c[i] * y_l[i];
        den += weight[i] * (c[i] + y_l[i]);
    }
    return 1.0 - (2.0 * num + kEpsDice) / (den + kEpsDice);
}

void weighted_soft_dice_backward(const PixelGrid& c, const BinaryMask& y_l,
                                 const PixelGrid& weight, double upstream, PixelGrid& grad_c) {
    double num = 0, den = 0;
    const Index n = c.size();
    for (Index i = 0; i < n; ++i) {
        num += weight[i] * c[i] * y_l[i];
        den += weight[i] * (c[i] + y_l[i]);
    }
    const double nn = 2.0 * num + kEpsDice;
    const double dd = den + kEpsDice;
    for (Index i = 0; i < n; ++i)
        grad_c[i] += upstream * weight[i] * (nn - 2.0 * y_l[i] * dd) / (dd * dd);
}

SupervisedLoss supervised_loss(const PixelGrid& c, const BinaryMask& y_l,
                               const PixelGrid& sim_cell, const PixelGrid& sim_noise) {
    SupervisedLoss out;
    const PixelGrid wc = omega_c(c, y_l);
    const PixelGrid ws = omega_sim(sim_cell, sim_noise);
    out.weight = PixelGrid(c.width(), c.height());
    for (Index i = 0, n = c.size(); i < n; ++i) out.weight[i] = wc[i] * ws[i];
    out.dice = weighted_soft_dice(c, y_l, out.weight);
    out.bce = weighted_bce(c, y_l, out.weight);
    out.value = out.dice + out.bce;
    return out;
}

SupervisedLoss plain_supervised_loss(const PixelGrid& c, const BinaryMask& y_l) {
    SupervisedLoss out;
    out.weight = PixelGrid(c.width(), c.height(), 1.0);
    out.dice = weighted_soft_dice(c, y_l, out.weight);
    out.bce = weighted_bce(c, y_l, out.weight);
    out.value = out.dice + out.bce;
    return out;
}

double contrastive_loss(const FeatureVector& f_cell, const FeatureVector& f_noise,
                        ContrastiveMode mode, double margin) {
    require(f_cell.size() == f_noise.size(), "contrastive_loss: length mismatch");
    const double d = divergence(f_cell, f_noise, nullptr, nullptr);
    if (mode == ContrastiveMode::kLiteral) return d;
    return std::max(0.0, margin - d);
}

void contrastive_backward(const FeatureVector& f_cell, const FeatureVector& f_noise,
                          ContrastiveMode mode, double margin, double upstream,
                          FeatureVector& grad_f_cell, FeatureVector& grad_f_noise) {
    FeatureVector gc, gn;
    const double d = divergence(f_cell, f_noise, &gc, &gn);
    double scale = upstream;
    if (mode == ContrastiveMode::kSeparative) {
        if (d >= margin) return; // hinge inactive
        scale = -upstream;
    }
    for (std::size_t i = 0; i < gc.size(); ++i) {
        grad_f_cell[i] += scale * gc[i];
        grad_f_noise[i] += scale * gn[i];
    }
}

LossBreakdown total_loss(const PixelGrid& c, const BinaryMask& y_l,
                         const ConsensusArtifacts& artifacts, const TotalLossConfig& cfg) {
    LossBreakdown out;
    if (artifacts.no_consensus) {
        SupervisedLoss sup = plain_supervised_loss(c, y_l);
        out.dice_term = sup.dice;
        out.bce_term = sup.bce;
        out.supervised = sup.value;
        out.contrastive = 0.0;
        out.omega_c = PixelGrid(c.width(), c.height(), 1.0);
        out.omega_sim = PixelGrid(c.width(), c.height(), 1.0);
    } else {
        out.omega_c = omega_c(c, y_l);
        out.omega_sim = omega_sim(artifacts.sim_cell, artifacts.sim_noise);
        PixelGrid weight(c.width(), c.height());
        for (Index i = 0, n = c.size(); i < n; ++i) weight[i] = out.omega_c[i] * out.omega_sim[i];
        out.dice_term = weighted_soft_dice(c, y_l, weight);
        out.bce_term = weighted_bce(c, y_l, weight);
        out.supervised = out.dice_term + out.bce_term;
        out.contrastive = contrastive_loss(artifacts.f_cell, artifacts.f_noise, cfg.mode,
                                           cfg.margin);
    }
    out.total = out.supervised + cfg.lambda_con * out.contrastive;
    return out;
}

TotalLossGrads total_loss_backward(const PixelGrid& c, const BinaryMask& y_l,
                                   const ConsensusArtifacts& artifacts,
                                   const TotalLossConfig& cfg, const LossBreakdown& value) {
    TotalLossGrads g;
    g.grad_c = PixelGrid(c.width(), c.height());
    if (artifacts.no_consensus) {
        const PixelGrid ones(c.width(), c.height(), 1.0);
        weighted_soft_dice_backward(c, y_l, ones, 1.0, g.grad_c);
        weighted_bce_backward(c, y_l, ones, 1.0, g.grad_c);
        return g;
    }
    PixelGrid weight(c.width(), c.height());
    for (Index i = 0, n = c.size(); i < n; ++i)
        weight[i] = value.omega_c[i] * value.omega_sim[i];
    weighted_soft_dice_backward(c, y_l, weight, 1.0, g.grad_c);
    weighted_bce_backward(c, y_l, weight, 1.0, g.grad_c);

    g.grad_f_cell.assign(artifacts.f_cell.size(), 0.0);
    g.grad_f_noise.assign(artifacts.f_noise.size(), 0.0);
    contrastive_backward(artifacts.f_cell, artifacts.f_noise, cfg.mode, cfg.margin,
                         cfg.lambda_con, g.grad_f_cell, g.grad_f_noise);
    return g;
}

} // namespace casc
