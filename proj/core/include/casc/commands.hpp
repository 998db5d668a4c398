#pragma once
// Command implementations behind the CLI: dataset synthesis, noise
// injection, training and evaluation. Each command reads a Config, echoes
// the fully resolved configuration into its outputs and writes files
// atomically. All randomness fans out from the single config seed.

#include "casc/config.hpp"

namespace casc::cmd {

// Writes images/, masks_clean/ and manifest.csv. Refuses to overwrite a
// non-empty output directory unless force is set.
void synth(const Config& config, bool force);

// Reads a clean manifest, applies FN removal then FP injection per recipe,
// writes masks_noisy/, a noisy manifest, a per-contour noise report and a
// per-class label-accuracy table.
void inject(const Config& config);

// Trains per config, writes checkpoint.casc and history.csv.
void train(const Config& config);

// Evaluates a checkpoint: metrics.csv on the test split against the clean
// manifest; train_regions.csv when a noisy manifest is configured. With
// compare_path non-empty, runs a Wilcoxon signed-rank test of paired dice
// rows against another run's metrics.csv.
void eval(const Config& config, const std::string& compare_path);

} // namespace casc::cmd
