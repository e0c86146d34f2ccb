#pragma once

#include <array>
#include <optional>
#include <span>

namespace looptrack {

struct EllipseFit {
    double center_x = 0.0;
    double center_y = 0.0;
    double major_axis = 0.0;  // full length, major >= minor > 0
    double minor_axis = 0.0;
    double orientation = 0.0;  // major-axis direction, radians in [0, pi)
};

/// Direct least-squares conic fit constrained to an ellipse
/// (Halir & Flusser's numerically stable variant of Fitzgibbon's method).
/// Needs >= 5 points in non-degenerate position; returns nullopt otherwise.
std::optional<EllipseFit> fit_ellipse(std::span<const std::array<double, 2>> points);

}  // namespace looptrack
