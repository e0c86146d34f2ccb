#include "looptrack/geometry.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace looptrack {

double iou(const BoundingBox& a, const BoundingBox& b) {
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

MatchResult greedy_match(std::span<const BoundingBox> preds,
                         std::span<const BoundingBox> truths,
                         double cutoff_iou) {
    if (cutoff_iou < 0.0 || cutoff_iou > 1.0)
        throw std::invalid_argument("cutoff_iou must be in [0,1]");

    const int np = static_cast<int>(preds.size());
    const int nt = static_cast<int>(truths.size());

    std::vector<double> matrix(static_cast<size_t>(np) * nt);
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < nt; ++j) matrix[static_cast<size_t>(i) * nt + j] = iou(preds[i], truths[j]);

    std::vector<char> pred_used(np, 0), truth_used(nt, 0);
    MatchResult result;
    result.cutoff_iou = cutoff_iou;

    while (true) {
        double best = -1.0;
        int bi = -1, bj = -1;
        for (int i = 0; i < np; ++i) {
            if (pred_used[i]) continue;
            const double* row = matrix.data() + static_cast<size_t>(i) * nt;
            for (int j = 0; j < nt; ++j) {
                if (truth_used[j]) continue;
                if (row[j] > best) {  // strict > keeps the lowest (i, j) on ties
                    best = row[j];
                    bi = i;
                    bj = j;
                }
            }
        }
        // Inclusive cutoff, but a pair must actually overlap: cutoff 0
        // matches any overlapping pair, never disjoint boxes.
        if (bi < 0 || best <= 0.0 || best < cutoff_iou) break;
        pred_used[bi] = 1;
        truth_used[bj] = 1;
        result.pairs.push_back({bi, bj, best});
    }

    for (int i = 0; i < np; ++i)
        if (!pred_used[i]) result.unmatched_predictions.push_back(i);
    for (int j = 0; j < nt; ++j)
        if (!truth_used[j]) result.unmatched_truths.push_back(j);
    return result;
}

MetricsReport metrics_from_counts(long tp, long fp, long fn, double cutoff_iou) {
    MetricsReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.cutoff_iou = cutoff_iou;
    r.precision = (tp + fp > 0) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = (tp + fn > 0) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = (r.precision + r.recall > 0.0)
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

MetricsReport metrics(const MatchResult& match) {
    return metrics_from_counts(static_cast<long>(match.pairs.size()),
                               static_cast<long>(match.unmatched_predictions.size()),
                               static_cast<long>(match.unmatched_truths.size()),
                               match.cutoff_iou);
}

std::vector<MetricsReport> f1_sweep(std::span<const BoundingBox> preds,
                                    std::span<const BoundingBox> truths,
                                    std::span<const double> cutoffs) {
    if (!std::is_sorted(cutoffs.begin(), cutoffs.end()))
        throw std::invalid_argument("cutoffs must be sorted ascending");
    std::vector<MetricsReport> reports;
    reports.reserve(cutoffs.size());
    for (double c : cutoffs) reports.push_back(metrics(greedy_match(preds, truths, c)));
    return reports;
}

std::vector<int> nms(std::span<const BoundingBox> boxes,
                     std::span<const double> scores,
                     double iou_threshold) {
    if (boxes.size() != scores.size())
        throw std::invalid_argument("nms: boxes and scores must have the same length");
    if (iou_threshold < 0.0 || iou_threshold > 1.0)
        throw std::invalid_argument("nms: iou_threshold must be in [0,1]");

    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });

    std::vector<int> kept;
    for (int idx : order) {
        bool suppressed = false;
        for (int k : kept) {
            if (iou(boxes[idx], boxes[k]) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

}  // namespace looptrack
