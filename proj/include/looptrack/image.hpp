#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace looptrack {

/// Row-major raster. Pixel (x, y) covers the unit square [x, x+1) x [y, y+1)
/// in box coordinates, so its center is at (x + 0.5, y + 0.5).
template <typename T>
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<T> pixels;

    Raster() = default;
    Raster(int w, int h, T fill = T{})
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    T& at(int x, int y) {
        assert(in_bounds(x, y));
        return pixels[static_cast<size_t>(y) * width + x];
    }
    const T& at(int x, int y) const {
        assert(in_bounds(x, y));
        return pixels[static_cast<size_t>(y) * width + x];
    }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t size() const { return pixels.size(); }
    bool same_shape_as(int w, int h) const { return width == w && height == h; }

    bool operator==(const Raster&) const = default;
};

using GrayImage = Raster<std::uint8_t>;   // intensities 0..255
using RealImage = Raster<double>;
using LabelImage = Raster<std::int32_t>;

/// Threshold maximizing the between-class variance of the 256-bin histogram,
/// computed with exact integer arithmetic (lowest maximizer on ties). A pixel
/// is "bright" when its value is strictly greater than the threshold.
/// Throws std::domain_error for a constant image.
int otsu_threshold(const GrayImage& img);

/// Binary mask (0/255) of the pixels on the `bright_foreground` side of
/// `threshold`.
GrayImage binarize(const GrayImage& img, int threshold, bool bright_foreground = true);

/// 3x3 all-ones structuring element; anything outside the image counts as
/// background. Nonzero input pixels are foreground; outputs are 0/255.
GrayImage erode3x3(const GrayImage& mask, int iterations = 1);
GrayImage dilate3x3(const GrayImage& mask, int iterations = 1);

/// `iterations` erosions followed by the same number of dilations.
GrayImage morph_open(const GrayImage& mask, int iterations = 1);

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel center; background pixels hold 0. A mask with no
/// background at all gets hypot(width, height) everywhere.
RealImage distance_transform(const GrayImage& mask);

}  // namespace looptrack
