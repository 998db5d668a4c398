#pragma once
// Synthetic stained-tissue patch generator.
//
// Each patch is a textured background carrying elliptical "cells" (strong
// hematoxylin-analog absorbance, the annotated structures) and distractor
// blobs (strong PAS-analog absorbance, weak hematoxylin) that the FP
// injection pipeline finds as plausible candidates. Patches are grouped into
// synthetic slides and carry one of four class labels assigned round-robin,
// mimicking a partially labeled dataset.

#include <cstdint>
#include <string>
#include <vector>

#include "casc/grid.hpp"
#include "casc/image_io.hpp"
#include "casc/noise.hpp"

namespace casc {

struct SynthParams {
    Index patch_width = 64;
    Index patch_height = 64;
    Index train_patches = 60;
    Index val_patches = 10;
    Index test_patches = 30;
    Index slides = 21;
    Index cells_min = 5;
    Index cells_max = 8;
    Index distractors_min = 4;
    Index distractors_max = 6;
    double radius_min = 3.5;
    double radius_max = 6.5;
    std::uint64_t seed = 0;

    Index total_patches() const { return train_patches + val_patches + test_patches; }
    void validate() const;
};

struct SynthPatch {
    std::string patch_id;
    std::string slide_id;
    Index class_index = 0;
    ImageRgb8 image;
    BinaryMask clean_mask;
};

struct SynthDataset {
    std::vector<SynthPatch> patches;
    std::vector<std::string> slide_ids; // in manifest appearance order
};

// Slide sizing: patches per slide, computed so that a slide-level 6:1:3
// split with the seed's fan-out realizes exactly the requested per-split
// patch counts.
std::vector<Index> plan_slide_sizes(const SynthParams& params);

SynthDataset synth_dataset(const SynthParams& params);

// Concentration profiles used by the renderer; exposed for calibration tests.
struct StainProfile {
    double hematoxylin;
    double pas;
};
StainProfile cell_profile(Index class_index);
StainProfile distractor_profile();
StainProfile background_profile();

} // namespace casc
