#include "looptrack/segment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>

namespace looptrack {

namespace {

constexpr int kDx8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
constexpr int kDy8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

struct FloodEntry {
    double value;
    std::uint64_t age;
    int x, y;

    bool operator>(const FloodEntry& o) const {
        if (value != o.value) return value > o.value;
        return age > o.age;
    }
};

}  // namespace

LabelImage watershed(const RealImage& surface, const LabelImage& markers) {
    if (!markers.same_shape_as(surface.width, surface.height))
        throw std::invalid_argument("watershed: surface and markers differ in shape");
    bool any_marker = false;
    for (std::int32_t m : markers.pixels)
        if (m > 0) any_marker = true;
    if (!any_marker) throw std::invalid_argument("watershed: no positive markers");

    LabelImage labels = markers;
    std::priority_queue<FloodEntry, std::vector<FloodEntry>, std::greater<FloodEntry>> queue;
    GrayImage queued(surface.width, surface.height, 0);
    std::uint64_t age = 0;

    auto push_unlabeled_neighbors = [&](int x, int y) {
        for (int k = 0; k < 8; ++k) {
            const int nx = x + kDx8[k], ny = y + kDy8[k];
            if (!labels.in_bounds(nx, ny)) continue;
            if (labels.at(nx, ny) != 0 || queued.at(nx, ny)) continue;
            queued.at(nx, ny) = 1;
            queue.push({surface.at(nx, ny), age++, nx, ny});
        }
    };

    for (int y = 0; y < labels.height; ++y)
        for (int x = 0; x < labels.width; ++x)
            if (labels.at(x, y) > 0) push_unlabeled_neighbors(x, y);

    while (!queue.empty()) {
        const FloodEntry e = queue.top();
        queue.pop();
        if (labels.at(e.x, e.y) != 0) continue;

        std::int32_t found = 0;
        bool contested = false;
        for (int k = 0; k < 8; ++k) {
            const int nx = e.x + kDx8[k], ny = e.y + kDy8[k];
            if (!labels.in_bounds(nx, ny)) continue;
            const std::int32_t l = labels.at(nx, ny);
            if (l <= 0) continue;
            if (found == 0) found = l;
            else if (l != found) contested = true;
        }
        if (found == 0) continue;  // neighbors were all boundary; leave contested below
        if (contested) {
            labels.at(e.x, e.y) = kWatershedBoundary;
        } else {
            labels.at(e.x, e.y) = found;
            push_unlabeled_neighbors(e.x, e.y);
        }
    }

    // Pixels walled off by boundary lines never get a flooding source; they
    // are contested by construction.
    for (std::int32_t& l : labels.pixels)
        if (l == 0) l = kWatershedBoundary;
    return labels;
}

GrayImage fill_holes(const GrayImage& mask) {
    GrayImage reached(mask.width, mask.height, 0);
    std::vector<std::array<int, 2>> stack;
    auto try_push = [&](int x, int y) {
        if (!mask.in_bounds(x, y) || mask.at(x, y) != 0 || reached.at(x, y)) return;
        reached.at(x, y) = 1;
        stack.push_back({x, y});
    };
    for (int x = 0; x < mask.width; ++x) {
        try_push(x, 0);
        try_push(x, mask.height - 1);
    }
    for (int y = 0; y < mask.height; ++y) {
        try_push(0, y);
        try_push(mask.width - 1, y);
    }
    while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        try_push(x - 1, y);
        try_push(x + 1, y);
        try_push(x, y - 1);
        try_push(x, y + 1);
    }
    GrayImage out(mask.width, mask.height);
    for (size_t i = 0; i < mask.size(); ++i)
        out.pixels[i] = (mask.pixels[i] != 0 || !reached.pixels[i]) ? 255 : 0;
    return out;
}

namespace {

GrayImage crop_image(const GrayImage& frame, int x0, int y0, int w, int h) {
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(x, y) = frame.at(x0 + x, y0 + y);
    return out;
}

// Deterministic 8-connected labeling, labels starting at `first_label` in
// scan order.
int label_components(const GrayImage& mask, LabelImage& labels, int first_label) {
    int next = first_label;
    std::vector<std::array<int, 2>> stack;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y) == 0 || labels.at(x, y) != 0) continue;
            labels.at(x, y) = next;
            stack.push_back({x, y});
            while (!stack.empty()) {
                const auto [cx, cy] = stack.back();
                stack.pop_back();
                for (int k = 0; k < 8; ++k) {
                    const int nx = cx + kDx8[k], ny = cy + kDy8[k];
                    if (!mask.in_bounds(nx, ny)) continue;
                    if (mask.at(nx, ny) == 0 || labels.at(nx, ny) != 0) continue;
                    labels.at(nx, ny) = next;
                    stack.push_back({nx, ny});
                }
            }
            ++next;
        }
    }
    return next - first_label;
}

}  // namespace

std::optional<DefectMask> segment_defect(const GrayImage& frame, const BoundingBox& box,
                                         const SegmentParams& params) {
    if (!box.valid()) throw std::invalid_argument("segment_defect: invalid box");
    if (params.pad_px < 0) throw std::invalid_argument("segment_defect: pad_px must be >= 0");
    if (params.sure_fg_fraction < 0.0 || params.sure_fg_fraction > 1.0)
        throw std::invalid_argument("segment_defect: sure_fg_fraction must be in [0,1]");

    const int x0 = std::clamp(static_cast<int>(std::floor(box.x_min)) - params.pad_px, 0, frame.width);
    const int y0 = std::clamp(static_cast<int>(std::floor(box.y_min)) - params.pad_px, 0, frame.height);
    const int x1 = std::clamp(static_cast<int>(std::ceil(box.x_max)) + params.pad_px, 0, frame.width);
    const int y1 = std::clamp(static_cast<int>(std::ceil(box.y_max)) + params.pad_px, 0, frame.height);
    if (x1 - x0 < 3 || y1 - y0 < 3) return std::nullopt;

    const GrayImage crop = crop_image(frame, x0, y0, x1 - x0, y1 - y0);
    const auto [lo, hi] = std::minmax_element(crop.pixels.begin(), crop.pixels.end());
    if (*lo == *hi) return std::nullopt;  // uniform crop, Otsu degenerate

    const int threshold = otsu_threshold(crop);
    const GrayImage fg = binarize(crop, threshold, params.bright_defects);
    GrayImage opened = morph_open(fg, params.open_iterations);
    if (params.fill_holes) opened = fill_holes(opened);
    if (std::all_of(opened.pixels.begin(), opened.pixels.end(), [](auto v) { return v == 0; }))
        return std::nullopt;

    const GrayImage not_sure_bg = dilate3x3(opened, params.sure_bg_dilate_iters);
    const RealImage dist = distance_transform(opened);
    const double dist_max = *std::max_element(dist.pixels.begin(), dist.pixels.end());
    GrayImage sure_fg(crop.width, crop.height, 0);
    for (size_t i = 0; i < dist.size(); ++i)
        if (dist.pixels[i] >= params.sure_fg_fraction * dist_max && opened.pixels[i] != 0)
            sure_fg.pixels[i] = 255;

    // Marker 1 = sure background, markers 2.. = sure-foreground components,
    // 0 = the unknown band the flood resolves.
    LabelImage markers(crop.width, crop.height, 0);
    for (size_t i = 0; i < markers.size(); ++i)
        if (not_sure_bg.pixels[i] == 0) markers.pixels[i] = 1;
    const int components = label_components(sure_fg, markers, 2);
    if (components == 0) return std::nullopt;

    // Defects must be basins of the flooding surface.
    RealImage surface(crop.width, crop.height);
    for (size_t i = 0; i < crop.size(); ++i)
        surface.pixels[i] = params.bright_defects ? 255.0 - crop.pixels[i]
                                                  : static_cast<double>(crop.pixels[i]);

    const LabelImage labels = watershed(surface, markers);

    const int cx = std::clamp(static_cast<int>(std::floor(box.center_x())) - x0, 0, crop.width - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(box.center_y())) - y0, 0, crop.height - 1);
    std::int32_t region = labels.at(cx, cy);
    if (region < 2) {
        // Center fell on the boundary or background; take the nearest
        // defect-region pixel instead.
        double best = 1e30;
        region = 0;
        for (int y = 0; y < labels.height; ++y) {
            for (int x = 0; x < labels.width; ++x) {
                if (labels.at(x, y) < 2) continue;
                const double d = static_cast<double>(x - cx) * (x - cx) +
                                 static_cast<double>(y - cy) * (y - cy);
                if (d < best) {
                    best = d;
                    region = labels.at(x, y);
                }
            }
        }
        if (region == 0) return std::nullopt;
    }

    // The flooded region runs out to wherever the fronts met on the
    // background plateau; the defect body is its intersection with the
    // denoised threshold foreground.
    DefectMask result;
    result.origin_x = x0;
    result.origin_y = y0;
    result.mask = GrayImage(crop.width, crop.height, 0);
    bool any = false;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels.pixels[i] == region && opened.pixels[i] != 0) {
            result.mask.pixels[i] = 255;
            any = true;
        }
    }
    if (!any) return std::nullopt;
    return result;
}

std::vector<std::array<double, 2>> boundary_points(const GrayImage& mask, double offset_x,
                                                   double offset_y) {
    // Midpoints of background-facing pixel edges: these lie exactly on the
    // outline of the union of foreground pixel squares, unlike pixel centers,
    // which sit half a pixel inside it.
    static constexpr int dx4[4] = {-1, 1, 0, 0};
    static constexpr int dy4[4] = {0, 0, -1, 1};
    std::vector<std::array<double, 2>> points;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y) == 0) continue;
            for (int k = 0; k < 4; ++k) {
                const int nx = x + dx4[k], ny = y + dy4[k];
                if (mask.in_bounds(nx, ny) && mask.at(nx, ny) != 0) continue;
                points.push_back({x + 0.5 + 0.5 * dx4[k] + offset_x,
                                  y + 0.5 + 0.5 * dy4[k] + offset_y});
            }
        }
    }
    return points;
}

}  // namespace looptrack
