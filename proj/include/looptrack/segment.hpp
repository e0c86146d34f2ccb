#pragma once

#include <array>
#include <optional>
#include <vector>

#include "looptrack/geometry.hpp"
#include "looptrack/image.hpp"

namespace looptrack {

constexpr std::int32_t kWatershedBoundary = -1;

/// Meyer flooding of `surface` from the positive labels in `markers`
/// (8-connectivity, ascending intensity, FIFO on plateaus). Label-0 pixels
/// are flooded; pixels reached from two different labels become
/// kWatershedBoundary. Marker regions are never overwritten.
/// Throws std::invalid_argument when shapes differ or no positive marker
/// exists.
LabelImage watershed(const RealImage& surface, const LabelImage& markers);

struct SegmentParams {
    int pad_px = 4;               // crop context beyond the detection box
    int open_iterations = 1;
    int sure_bg_dilate_iters = 3;
    double sure_fg_fraction = 0.7;  // of the distance-transform maximum
    bool bright_defects = false;    // default imaging condition: dark loops
    bool fill_holes = true;         // close noise holes before the transform
};

/// Foreground plus any background pockets not reachable from the border
/// (4-connected background walk).
GrayImage fill_holes(const GrayImage& mask);

/// Crop-local foreground mask plus its offset in the source frame.
struct DefectMask {
    GrayImage mask;  // 0/255
    int origin_x = 0;
    int origin_y = 0;
};

/// Watershed segmentation of the defect under `box`:
/// crop box+pad -> Otsu (polarity-normalized so foreground = defect) ->
/// 3x3 opening -> sure background from a dilation of the opening, sure
/// foreground where the distance transform reaches `sure_fg_fraction` of its
/// maximum -> flood -> return the region containing the crop center.
/// Returns nullopt when thresholding leaves no usable foreground.
std::optional<DefectMask> segment_defect(const GrayImage& frame, const BoundingBox& box,
                                         const SegmentParams& params = {});

/// Samples the outline of the foreground region: the midpoint of every pixel
/// edge shared with background (or the image border), shifted by
/// (offset_x, offset_y). Scan order keeps the output deterministic.
std::vector<std::array<double, 2>> boundary_points(const GrayImage& mask,
                                                   double offset_x = 0.0,
                                                   double offset_y = 0.0);

}  // namespace looptrack
