#pragma once
// Consensus-aware supervised loss, contrastive separation, and the combined
// training objective.
//
// The per-pixel weight omega_c * omega_sim multiplies both the soft Dice and
// the BCE reductions. Both omega maps are detached: no gradient flows through
// them, otherwise the optimizer could shrink the loss by lowering confidence
// instead of fitting. Index selections are likewise constants of the step.

#include "casc/consensus.hpp"
#include "casc/grid.hpp"

namespace casc {

inline constexpr double kEpsProb = 1e-7;  // BCE probability clamp
inline constexpr double kEpsDice = 1.0;   // Dice smoothing
inline constexpr double kKlFloor = 1e-12; // KL divisor clamp

enum class ContrastiveMode {
    kSeparative, // max(0, margin - D): minimized by pushing divergence past the margin
    kLiteral,    // D itself, as the combined objective is written
};

struct LossBreakdown {
    double dice_term = 0.0;
    double bce_term = 0.0;
    double supervised = 0.0;
    double contrastive = 0.0;
    double total = 0.0;
    PixelGrid omega_c;
    PixelGrid omega_sim;
};

// exp(c*y + (1-c)*(1-y)) per pixel; range [1, e].
PixelGrid omega_c(const PixelGrid& c, const BinaryMask& y_l);

// exp(sim_cell - sim_noise) per pixel; range [e^-2, e^2].
PixelGrid omega_sim(const PixelGrid& sim_cell, const PixelGrid& sim_noise);

// mean over pixels of weight * (-y ln c - (1-y) ln(1-c)), c clamped to
// [kEpsProb, 1-kEpsProb].
double weighted_bce(const PixelGrid& c, const BinaryMask& y_l, const PixelGrid& weight);

// 1 - (2*sum(w*c*y) + eps) / (sum(w*(c+y)) + eps)
double weighted_soft_dice(const PixelGrid& c, const BinaryMask& y_l, const PixelGrid& weight);

// Accumulate d(weighted_bce)/dc and d(weighted_soft_dice)/dc into grad_c
// (weights constant).
void weighted_bce_backward(const PixelGrid& c, const BinaryMask& y_l, const PixelGrid& weight,
                           double upstream, PixelGrid& grad_c);
void weighted_soft_dice_backward(const PixelGrid& c, const BinaryMask& y_l,
                                 const PixelGrid& weight, double upstream, PixelGrid& grad_c);

struct SupervisedLoss {
    double dice = 0.0;
    double bce = 0.0;
    double value = 0.0;
    PixelGrid weight; // omega_c .* omega_sim, detached
};

SupervisedLoss supervised_loss(const PixelGrid& c, const BinaryMask& y_l,
                               const PixelGrid& sim_cell, const PixelGrid& sim_noise);

// Plain unweighted Dice + BCE (the supervised baseline and the no-consensus
// fallback).
SupervisedLoss plain_supervised_loss(const PixelGrid& c, const BinaryMask& y_l);

// KL(P||Q) + MSE(P,Q) over channel softmaxes of the two distilled features.
double contrastive_loss(const FeatureVector& f_cell, const FeatureVector& f_noise,
                        ContrastiveMode mode, double margin);

// Accumulates d(loss)/df_cell and d(loss)/df_noise.
void contrastive_backward(const FeatureVector& f_cell, const FeatureVector& f_noise,
                          ContrastiveMode mode, double margin, double upstream,
                          FeatureVector& grad_f_cell, FeatureVector& grad_f_noise);

struct TotalLossConfig {
    double lambda_con = 1.0;
    double margin = 1.0;
    ContrastiveMode mode = ContrastiveMode::kSeparative;
};

// Eq: total = supervised + lambda_con * contrastive. When artifacts report
// no-consensus the supervised part is the plain unweighted loss and the
// contrastive term is omitted.
LossBreakdown total_loss(const PixelGrid& c, const BinaryMask& y_l,
                         const ConsensusArtifacts& artifacts, const TotalLossConfig& cfg);

struct TotalLossGrads {
    PixelGrid grad_c;
    FeatureVector grad_f_cell;
    FeatureVector grad_f_noise;
};

// Gradients of total_loss with respect to c and the distilled features
// (omega maps detached, indices constant).
TotalLossGrads total_loss_backward(const PixelGrid& c, const BinaryMask& y_l,
                                   const ConsensusArtifacts& artifacts,
                                   const TotalLossConfig& cfg, const LossBreakdown& value);

} // namespace casc
