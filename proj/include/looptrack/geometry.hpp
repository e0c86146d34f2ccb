#pragma once

#include <span>
#include <vector>

namespace looptrack {

/// Axis-aligned half-open pixel rectangle: [x_min, x_max) x [y_min, y_max).
/// Pixel index (i, j) from a labeling tool maps to the unit square
/// [i, i+1) x [j, j+1).
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }
    bool valid() const { return x_min < x_max && y_min < y_max; }

    BoundingBox shifted(double dx, double dy) const {
        return {x_min + dx, y_min + dy, x_max + dx, y_max + dy};
    }
};

/// Intersection area over union area; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Unique prediction/truth pairing produced by greedy global-max matching.
struct MatchResult {
    struct Pair {
        int pred;
        int truth;
        double iou;
    };
    std::vector<Pair> pairs;
    std::vector<int> unmatched_predictions;
    std::vector<int> unmatched_truths;
    double cutoff_iou = 0.0;
};

/// Build the full IoU matrix, repeatedly take the globally largest entry with
/// IoU >= cutoff (ties broken by lower prediction index, then lower truth
/// index), remove its row and column, and stop when nothing >= cutoff remains.
MatchResult greedy_match(std::span<const BoundingBox> preds,
                         std::span<const BoundingBox> truths,
                         double cutoff_iou);

struct MetricsReport {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double cutoff_iou = 0.0;
};

MetricsReport metrics(const MatchResult& match);
/// Ratios with zero denominators are defined as 0.
MetricsReport metrics_from_counts(long tp, long fp, long fn, double cutoff_iou);

/// One report per cutoff; cutoffs must be sorted ascending.
std::vector<MetricsReport> f1_sweep(std::span<const BoundingBox> preds,
                                    std::span<const BoundingBox> truths,
                                    std::span<const double> cutoffs);

/// Greedy non-max suppression. Boxes are visited in descending score order
/// (original order on ties); a visited box is kept unless its IoU with an
/// already-kept box exceeds `iou_threshold`. Returns kept indices in
/// selection order.
std::vector<int> nms(std::span<const BoundingBox> boxes,
                     std::span<const double> scores,
                     double iou_threshold);

}  // namespace looptrack
