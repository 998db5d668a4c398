#pragma once
// Elementwise numeric primitives shared by all modules.

#include "casc/grid.hpp"

namespace casc {

// Norm threshold below which a vector is treated as direction-free: cosine
// against it is defined as 0.
inline constexpr double kEpsNorm = 1e-12;

// Foreground probability per pixel from 2-channel logits, computed in the
// max-subtracted form so equal large logits cannot overflow.
// c(x,y) = exp(fg) / (exp(fg) + exp(bg)), strictly inside (0,1).
PixelGrid softmax_foreground(const Logits& logits);

// Chain rule through softmax_foreground: given dL/dc, produce dL/dp.
// dc/dfg = c(1-c), dc/dbg = -c(1-c).
Logits softmax_foreground_backward(const PixelGrid& c, const PixelGrid& grad_c);

// u.v / (|u||v|), in [-1,1]; 0 when either norm is below kEpsNorm.
double cosine(const FeatureVector& u, const FeatureVector& v);

// Accumulate d(cosine)/du and d(cosine)/dv scaled by upstream into gu, gv.
// No-op on degenerate norms (the value is the constant 0 there).
void cosine_backward(const FeatureVector& u, const FeatureVector& v, double upstream,
                     FeatureVector& gu, FeatureVector& gv);

// The k flattened indices with the highest scores, in non-increasing score
// order; ties broken by ascending flattened (row-major) index. Deterministic.
std::vector<Index> top_k_indices(const PixelGrid& grid, Index k);

} // namespace casc
