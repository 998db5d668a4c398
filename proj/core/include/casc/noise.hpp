#pragma once
// Reasoning-guided label-noise generators and their supporting machinery:
// stain deconvolution, thresholding, contour extraction and filling.
//
// FP injection: deconvolve the image, threshold the PAS-analog channel,
// extract candidate contours, sort by proximity to the existing annotation,
// and add non-overlapping, plausibly sized candidates up to a limit derived
// from the annotated cell count.
//
// FN removal: extract annotation contours, shuffle them with the seeded
// generator, and redraw only the first floor((1 - missing_ratio) * n).

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "casc/grid.hpp"
#include "casc/image_io.hpp"

namespace casc {

struct Point {
    Index x = 0;
    Index y = 0;
    bool operator==(const Point&) const = default;
};

// Closed outer boundary of one 8-connected component, traced clockwise from
// its top-left-most pixel (Moore-neighbor walk in the boundary-edge
// formulation, which terminates exactly on returning to the starting edge).
// Area and centroid describe the filled component.
struct Contour {
    std::vector<Point> boundary;
    Index area = 0;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
};

// Rows are unit-length stain absorbance direction vectors (hematoxylin,
// PAS-analog, residual). Calibration constants, configurable.
using StainMatrix = std::array<std::array<double, 3>, 3>;

StainMatrix default_stain_matrix();

inline constexpr double kMaxOpticalDensity = 2.4082399653118496; // -log10(1/256)

// Optical density per channel: OD = -log10((I+1)/256).
std::array<PixelGrid, 3> optical_density(const ImageRgb8& image);

// Solve OD = M^T * conc per pixel; concentrations clamped at 0.
// Throws on a singular matrix.
std::array<PixelGrid, 3> deconvolve_od(const std::array<PixelGrid, 3>& od,
                                       const StainMatrix& stains);

// Remix concentrations back into OD space (test oracle for the inverse).
std::array<PixelGrid, 3> remix_od(const std::array<PixelGrid, 3>& conc,
                                  const StainMatrix& stains);

// Full pipeline: image -> per-stain concentration grids.
std::array<PixelGrid, 3> color_deconvolve(const ImageRgb8& image, const StainMatrix& stains);

// Concentration grid rescaled to the 8-bit range used by intensity thresholds.
PixelGrid stain_to_8bit(const PixelGrid& concentration);

// 1 where channel >= threshold.
BinaryMask threshold_mask(const PixelGrid& channel, double threshold);

// One contour per 8-connected component, ordered by each component's first
// row-major pixel.
std::vector<Contour> extract_contours(const BinaryMask& mask);

// Paint the boundary and fill its interior (4-connected background flood from
// outside). Reproduces hole-free components exactly.
void fill_contour(const Contour& contour, BinaryMask& target);
BinaryMask contour_fill_mask(const Contour& contour, Index width, Index height);

struct NoiseRecipe {
    double intensity_threshold = 60.0; // 8-bit T on the PAS-analog channel
    double rho_fp = 0.5;               // limit = round(rho_fp * cells in Y)
    double missing_ratio = 0.3;
    Index area_min = 30;   // acceptable-cell-size range, px at 512x512
    Index area_max = 1500;
    std::uint64_t seed = 0;

    void validate() const;
    // Proportional rescale of the default 512x512 size bounds.
    static NoiseRecipe scaled_for(Index width, Index height);
};

struct ContourReportRow {
    Index contour_index = 0;
    bool added = false; // false = removed
    Index area = 0;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
};

struct InjectResult {
    BinaryMask noisy;
    std::vector<ContourReportRow> report;
    Index limit = 0;
    bool empty_annotation = false;
};

InjectResult inject_fp(const ImageRgb8& image, const BinaryMask& annotation,
                       const NoiseRecipe& recipe,
                       const StainMatrix& stains = default_stain_matrix());

struct RemoveResult {
    BinaryMask noisy;
    std::vector<ContourReportRow> report; // the removed contours
    Index kept = 0;
};

RemoveResult remove_fn(const BinaryMask& mask, double missing_ratio, std::uint64_t seed);

} // namespace casc
