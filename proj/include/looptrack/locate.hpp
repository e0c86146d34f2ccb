#pragma once

#include <array>
#include <optional>
#include <vector>

#include "looptrack/image.hpp"

namespace looptrack {

struct LocateParams {
    int feature_diameter_px = 9;      // odd, >= 3
    double noise_scale_px = 1.0;      // gaussian sigma of the high-pass stage
    double intensity_percentile = 64.0;
    int max_refine_iters = 10;
    double convergence_px = 0.005;
    bool bright_features = false;     // dark loops by default; inverted before filtering

    void validate() const;  // throws std::invalid_argument
};

/// Gaussian smoothing at noise_scale minus a boxcar average over the feature
/// diameter, clamped at zero. Replicated borders, so constant images map to
/// (numerically) zero.
RealImage bandpass(const RealImage& img, const LocateParams& params);

/// Integer pixels that are strict maxima within a disk of radius diameter/2
/// and lie above the given percentile of the nonzero filtered intensities.
/// An exactly tied plateau yields its scan-order-first pixel; scan order
/// (y, then x) also fixes the output order.
std::vector<std::array<int, 2>> find_candidates(const RealImage& filtered,
                                                const LocateParams& params);

struct RefinedPeak {
    double x = 0.0;  // pixel-center coordinates (integer pixel i is at i+0.5)
    double y = 0.0;
    double mass = 0.0;
    double size = 0.0;  // radius of gyration
};

/// Iterated intensity-weighted centroid inside a disk of radius diameter/2,
/// re-centered on the pixel containing the running centroid until the shift
/// drops below convergence_px or max_refine_iters is hit. Returns nullopt if
/// the mask leaves the image or the masked mass is zero.
std::optional<RefinedPeak> refine_centroid(const RealImage& filtered,
                                           std::array<int, 2> peak,
                                           const LocateParams& params);

/// Full single-frame pipeline: polarity normalization, bandpass, candidate
/// detection, centroid refinement, and suppression of duplicates closer than
/// one feature diameter (higher mass wins).
std::vector<RefinedPeak> locate_features(const GrayImage& frame, const LocateParams& params);

}  // namespace looptrack
