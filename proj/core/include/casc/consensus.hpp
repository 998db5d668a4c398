#pragma once
// Consensus Matrix partition and feature distillation.
//
// The partition splits a patch into four regions by comparing the model's
// confidence map c against the annotation y_l at threshold tau:
//   CP: c >= tau and y_l = 1   (both say cell)
//   CN: c <  tau and y_l = 0   (both say non-cell)
//   DM: c >= tau and y_l = 0   (model-only cell)
//   DH: c <  tau and y_l = 1   (annotator-only cell)
//
// Distillation gathers decoder features at the top agreement pixels into
// f_cell and at the top disagreement pixels into f_noise. Index selections
// are constants of the current step; the gather, cosine, softmax and
// weighted-sum chain is differentiable with respect to the feature map.

#include <optional>

#include "casc/grid.hpp"
#include "casc/grid_ops.hpp"

namespace casc {

inline constexpr double kDefaultTau = 0.5;

struct ConsensusPartition {
    BinaryMask cp, cn, dm, dh;
};

ConsensusPartition consensus_partition(const PixelGrid& c, const BinaryMask& y_l,
                                       double tau = kDefaultTau);

// Default k: max(16, round(0.01*W*H)), rounded up to even.
Index default_k(Index width, Index height);

struct CellDistillation {
    FeatureVector f_cell;
    std::vector<Index> indices; // k flattened pixels, top agreement first
};

// a_CP = c * y_l; gather the top-k pixels and average their feature columns.
// Returns nullopt when max(a_CP) = 0 (no agreed cell pixel anywhere).
std::optional<CellDistillation> distill_cell_feature(const FeatureMap& f_d, const PixelGrid& c,
                                                     const BinaryMask& y_l, Index k);

struct DisagreementIndices {
    std::vector<Index> dm; // top k/2 by c * (1 - y_l)
    std::vector<Index> dh; // top k/2 by (1 - c) * y_l
};

DisagreementIndices disagreement_indices(const PixelGrid& c, const BinaryMask& y_l, Index k);

struct NoiseDistillation {
    FeatureVector f_noise;
    std::vector<double> weights;       // softmax(1 - minmax(s_cell)), sums to 1
    std::vector<double> s_cell;        // cosine of each candidate against f_cell
    std::vector<Index> indices;        // concatenated [dm, dh] candidate pixels
};

NoiseDistillation distill_noise_feature(const FeatureMap& f_d, const std::vector<Index>& ind_dm,
                                        const std::vector<Index>& ind_dh,
                                        const FeatureVector& f_cell);

struct SimilarityMaps {
    PixelGrid sim_cell;
    PixelGrid sim_noise;
};

// Per-pixel cosine of the feature column against each distilled vector.
SimilarityMaps similarity_maps(const FeatureMap& f_d, const FeatureVector& f_cell,
                               const FeatureVector& f_noise);

// Everything the consensus-aware loss needs for one sample. no_consensus is
// the y_l == 0 fallback: the sample trains with the plain unweighted loss and
// the contrastive term is omitted.
struct ConsensusArtifacts {
    bool no_consensus = true;
    FeatureVector f_cell;
    FeatureVector f_noise;
    std::vector<Index> cell_indices;
    std::vector<Index> noise_indices;
    std::vector<double> noise_weights;
    std::vector<double> s_cell;
    PixelGrid sim_cell;
    PixelGrid sim_noise;
};

ConsensusArtifacts build_consensus_artifacts(const FeatureMap& f_d, const PixelGrid& c,
                                             const BinaryMask& y_l, Index k);

// Reverse-mode pass through the distillation chain. Takes dL/df_cell and
// dL/df_noise (from the contrastive term) and accumulates dL/df_D into
// grad_f_d, routing the f_noise gradient through the weighted sum, softmax,
// min-max rescaling and cosine scores. Indices are constants.
void distillation_backward(const FeatureMap& f_d, const ConsensusArtifacts& art,
                           const FeatureVector& grad_f_cell, const FeatureVector& grad_f_noise,
                           FeatureMap& grad_f_d);

} // namespace casc
