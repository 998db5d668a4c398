#pragma once
// Evaluation protocol: overlap scores, instance matching, region-restricted
// noise analysis and the Wilcoxon signed-rank comparison.

#include <optional>
#include <string>
#include <vector>

#include "casc/grid.hpp"

namespace casc {

// 2|P & G| / (|P| + |G|); both empty -> 1.
double dice_score(const BinaryMask& pred, const BinaryMask& gt);

// Instances are 8-connected components. Pairs are matched greedily by
// descending IoU, each instance used once, accepted at IoU >= iou_thresh.
// F1 = 2TP / (2TP + FP + FN); no instances on either side -> 1.
double instance_f1(const BinaryMask& pred, const BinaryMask& gt, double iou_thresh = 0.5);

// Primary region score: |pred & region| / |region| (coverage of the region
// by the prediction; prediction outside the region is excluded).
// Empty region -> nullopt.
std::optional<double> region_iou(const BinaryMask& pred, const BinaryMask& region);

// Secondary column: IoU between the prediction clipped to a 2-pixel
// (Chebyshev) dilation of the region and the region itself.
std::optional<double> region_iou_dilated(const BinaryMask& pred, const BinaryMask& region);

struct RegionReport {
    double tp_dice = 0.0;
    double tp_f1 = 0.0;
    std::optional<double> fp_iou;         // lower is better
    std::optional<double> fn_iou;         // higher is better
    std::optional<double> fp_iou_dilated;
    std::optional<double> fn_iou_dilated;
};

// R_TP = noisy & clean, R_FP = noisy & !clean, R_FN = clean & !noisy.
RegionReport training_region_report(const BinaryMask& pred, const BinaryMask& noisy_label,
                                    const BinaryMask& clean_gt);

// (dice, instance F1) of the noisy annotation against the clean ground truth.
std::pair<double, double> label_accuracy(const BinaryMask& noisy, const BinaryMask& clean);

struct WilcoxonResult {
    bool no_signal = false; // every paired difference was zero
    double statistic = 0.0; // W = min(W+, W-)
    std::size_t n = 0;      // pairs remaining after dropping zero differences
    double p_value = 1.0;
    std::string p_bucket;   // "p < 0.001" / "p < 0.01" / "p < 0.05" / "n.s."
    bool exact = false;     // exact enumeration (n <= 12) vs normal approximation
};

// Signed-rank test on paired samples; average ranks on tied magnitudes,
// exact sign-pattern enumeration for n <= 12, normal approximation with
// continuity correction otherwise.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

} // namespace casc
