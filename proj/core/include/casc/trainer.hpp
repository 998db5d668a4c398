#pragma once
// Training loops (plain supervised baseline and consensus-aware corrective
// mode), slide-level dataset splitting and model selection.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "casc/image_io.hpp"
#include "casc/loss.hpp"
#include "casc/metrics.hpp"
#include "casc/model.hpp"

namespace casc {

enum class TrainMode { kSupervised, kCasc };

struct ExperimentConfig {
    TrainMode mode = TrainMode::kCasc;
    Index k = 0; // 0: use default_k(patch size)
    double tau = kDefaultTau;
    double lambda_con = 1.0;
    double margin = 1.0;
    ContrastiveMode contrastive = ContrastiveMode::kSeparative;
    double lr = 1e-4;
    double momentum = 0.9;
    Index epochs = 100;
    Index batch_size = 1;
    Index ch = 16;
    Index class_count = 4;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Split { kTrain, kVal, kTest };

std::string split_name(Split split);

// Slide-id -> split assignment; patches always follow their slide, so
// patch-level leakage across splits is impossible.
struct SplitPlan {
    std::map<std::string, Split> assignment;

    Split of(const std::string& slide_id) const;
    Index count(Split split) const;
};

// Shuffle the slide ids with the seed, then allocate counts 6:1:3 by
// largest-remainder apportionment. When a split would come out empty despite
// >= 3 slides, it takes one slide from the largest split.
SplitPlan split_slides(const std::vector<std::string>& slide_ids, std::uint64_t seed);

struct Sample {
    std::string image_id;
    std::string slide_id;
    Index class_index = 0;
    ImageRgb8 image;
    BinaryMask label;
};

// RGB scaled to [0,1] plus class one-hot conditioning planes.
FeatureMap build_model_input(const ImageRgb8& image, Index class_index, Index class_count);

// Forward + binarize at c >= 0.5.
BinaryMask predict_mask(const ModelState& model, const ImageRgb8& image, Index class_index,
                        Index class_count);

struct EpochStats {
    Index epoch = 0;
    double train_loss = 0.0;
    double dice_term = 0.0;
    double bce_term = 0.0;
    double contrastive_term = 0.0;
    double val_mean_dice = 0.0;
};

struct TrainResult {
    ModelState best_model;  // highest mean validation dice, earliest on ties
    ModelState final_model; // state after the last epoch
    Index best_epoch = 0;
    double best_val_dice = 0.0;
    std::vector<EpochStats> history;
};

// Per-epoch: seeded shuffled patch order, forward, consensus artifacts (casc
// mode only), combined loss, backward, SGD step. Model selection keeps the
// checkpoint with the best mean validation Dice across classes; ties go to
// the earliest epoch. Throws on divergence, naming the epoch.
TrainResult train(const ExperimentConfig& config, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set);

// Mean of per-class mean Dice over the classes present in the samples.
double mean_class_dice(const ModelState& model, const std::vector<Sample>& samples,
                       Index class_count);

struct EvalRow {
    std::string image_id;
    Index class_index = 0;
    double dice = 0.0;
    double f1 = 0.0;
};

// Per-image dice/f1 of predictions against each sample's label (parallel
// across images, deterministic row order).
std::vector<EvalRow> evaluate_split(const ModelState& model, const std::vector<Sample>& samples,
                                    Index class_count);

struct RegionRow {
    std::string image_id;
    Index class_index = 0;
    RegionReport report;
};

// Region analysis against the known noise regions of the training labels;
// samples carry the noisy label, clean_masks the verified ground truth.
std::vector<RegionRow> training_region_rows(const ModelState& model,
                                            const std::vector<Sample>& noisy_samples,
                                            const std::vector<BinaryMask>& clean_masks,
                                            Index class_count);

// Worker cap for per-image parallel evaluation: CASC_THREADS, default
// hardware concurrency.
unsigned worker_count();

} // namespace casc
