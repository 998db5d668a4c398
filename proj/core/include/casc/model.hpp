#pragma once
// Reference encoder-decoder segmentation network with in-repo reverse-mode
// gradients.
//
// Layout (all convs 3x3 pad 1 unless noted, widths relative to Ch):
//   enc1: stride-2 conv + ReLU            in -> Ch        (H/2)
//   enc2: stride-2 conv + ReLU            Ch -> 2Ch       (H/4)
//   bott: conv + residual add + ReLU      2Ch -> 2Ch      (H/4)
//   dec1: nn-upsample, conv + skip(enc1) + ReLU  2Ch -> Ch (H/2)
//   dec2: nn-upsample, conv + ReLU        Ch -> Ch        (H)
//   feat: conv (linear)                   Ch -> Ch        (H)   -> f_D
//   head: 1x1 conv                        Ch -> 2         (H)   -> p
//
// The input carries 3 color channels plus class_count one-hot conditioning
// planes, so one model serves all classes of a partially labeled dataset.
// Spatial size must be divisible by 4.

#include <cstdint>
#include <string>
#include <vector>

#include "casc/grid.hpp"

namespace casc {

struct Param {
    std::string name;
    std::vector<Index> shape; // conv: [out, in, kh, kw]; bias: [out]
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> momentum;

    Index count() const {
        Index n = 1;
        for (Index d : shape) n *= d;
        return n;
    }
};

struct Architecture {
    Index ch = 16;          // decoder feature channels (f_D width)
    Index class_count = 4;  // one-hot conditioning planes
    Index in_channels() const { return 3 + class_count; }
};

struct ModelState {
    Architecture arch;
    std::vector<Param> params;

    Param& param(const std::string& name);
    const Param& param(const std::string& name) const;
    Index parameter_count() const;
    void clear_grads();
    // FNV-1a over the parameter bytes; used by determinism checks.
    std::uint64_t checksum() const;
};

struct ForwardOutputs {
    Logits p;
    FeatureMap f_d;
    PixelGrid c;
};

// Intermediates retained for the backward pass.
struct ForwardCache {
    bool valid = false;
    FeatureMap input;
    FeatureMap e1z, e1;
    FeatureMap e2z, e2;
    FeatureMap bz, b;
    FeatureMap u1, d1z, d1;
    FeatureMap u2, d2z, d2;
    FeatureMap f_d;
};

// Deterministic fan-in scaled init (uniform +-1/sqrt(fan_in)), zero biases.
ModelState init_model(std::uint64_t seed, Index ch, Index class_count);

// input: (3 + class_count) x W x H with W, H divisible by 4.
ForwardOutputs forward(const ModelState& state, const FeatureMap& input, ForwardCache& cache);

// Convenience overload when intermediates are not needed afterwards.
ForwardOutputs forward(const ModelState& state, const FeatureMap& input);

// Accumulate d(total)/d(theta) for upstream gradients on p and f_D.
void backward(ModelState& state, const ForwardCache& cache, const Logits& grad_p,
              const FeatureMap& grad_f_d);

// theta <- theta - lr * (momentum-adjusted gradient); clears gradients.
// Throws "diverged" on non-finite gradients.
void sgd_step(ModelState& state, double lr, double momentum);

// Checkpoint format: magic "CASC", version u32, architecture, then
// length-prefixed named f32 arrays, little-endian. Reload reproduces forward
// outputs bit-exactly at f32 granularity.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

} // namespace casc
