#include "looptrack/locate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "looptrack/analytics.hpp"

namespace looptrack {

void LocateParams::validate() const {
    if (feature_diameter_px < 3 || feature_diameter_px % 2 == 0)
        throw std::invalid_argument("feature_diameter_px must be an odd integer >= 3");
    if (!(noise_scale_px > 0.0)) throw std::invalid_argument("noise_scale_px must be > 0");
    if (intensity_percentile < 0.0 || intensity_percentile > 100.0)
        throw std::invalid_argument("intensity_percentile must be in [0,100]");
    if (max_refine_iters < 1) throw std::invalid_argument("max_refine_iters must be >= 1");
    if (!(convergence_px > 0.0)) throw std::invalid_argument("convergence_px must be > 0");
}

namespace {

int clamp_idx(int i, int n) { return std::clamp(i, 0, n - 1); }

// Separable convolution with replicated borders.
RealImage convolve_separable(const RealImage& img, const std::vector<double>& kernel) {
    const int r = static_cast<int>(kernel.size() / 2);
    RealImage tmp(img.width, img.height), out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) acc += kernel[k + r] * img.at(clamp_idx(x + k, img.width), y);
            tmp.at(x, y) = acc;
        }
    }
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) acc += kernel[k + r] * tmp.at(x, clamp_idx(y + k, img.height));
            out.at(x, y) = acc;
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + r];
    }
    for (double& v : k) v /= sum;
    return k;
}

std::vector<std::array<int, 2>> disk_offsets(double radius) {
    std::vector<std::array<int, 2>> offsets;
    const int r = static_cast<int>(std::floor(radius));
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (static_cast<double>(dx) * dx + static_cast<double>(dy) * dy <= radius * radius)
                offsets.push_back({dx, dy});
    return offsets;
}

}  // namespace

RealImage bandpass(const RealImage& img, const LocateParams& params) {
    params.validate();
    if (params.feature_diameter_px >= std::min(img.width, img.height))
        throw std::invalid_argument("bandpass: feature diameter exceeds image size");

    const RealImage smooth = convolve_separable(img, gaussian_kernel(params.noise_scale_px));
    const std::vector<double> box(params.feature_diameter_px,
                                  1.0 / params.feature_diameter_px);
    const RealImage background = convolve_separable(img, box);

    RealImage out(img.width, img.height);
    for (size_t i = 0; i < out.size(); ++i)
        out.pixels[i] = std::max(0.0, smooth.pixels[i] - background.pixels[i]);
    return out;
}

std::vector<std::array<int, 2>> find_candidates(const RealImage& filtered,
                                                const LocateParams& params) {
    params.validate();
    std::vector<double> positive;
    for (double v : filtered.pixels)
        if (v != 0.0) positive.push_back(v);
    if (positive.empty()) return {};
    const double threshold = quantile(positive, params.intensity_percentile / 100.0);

    const auto offsets = disk_offsets(params.feature_diameter_px / 2.0);
    std::vector<std::array<int, 2>> peaks;
    for (int y = 0; y < filtered.height; ++y) {
        for (int x = 0; x < filtered.width; ++x) {
            const double v = filtered.at(x, y);
            if (!(v > threshold)) continue;
            bool is_max = true;
            for (const auto& [dx, dy] : offsets) {
                if (dx == 0 && dy == 0) continue;
                const int nx = x + dx, ny = y + dy;
                if (!filtered.in_bounds(nx, ny)) continue;
                const double nv = filtered.at(nx, ny);
                // Exact ties (symmetric synthetic data) keep only the
                // scan-order-first plateau member.
                if (nv > v || (nv == v && (ny < y || (ny == y && nx < x)))) {
                    is_max = false;
                    break;
                }
            }
            if (is_max) peaks.push_back({x, y});
        }
    }
    return peaks;
}

std::optional<RefinedPeak> refine_centroid(const RealImage& filtered,
                                           std::array<int, 2> peak,
                                           const LocateParams& params) {
    params.validate();
    const double radius = params.feature_diameter_px / 2.0;
    const auto offsets = disk_offsets(radius);
    const int margin = static_cast<int>(std::floor(radius));

    int wx = peak[0], wy = peak[1];
    double cx = wx + 0.5, cy = wy + 0.5;
    double mass = 0.0;

    for (int iter = 0; iter < params.max_refine_iters; ++iter) {
        if (wx - margin < 0 || wy - margin < 0 || wx + margin >= filtered.width ||
            wy + margin >= filtered.height)
            return std::nullopt;  // walked off the image

        double m = 0.0, sx = 0.0, sy = 0.0;
        for (const auto& [dx, dy] : offsets) {
            const double v = filtered.at(wx + dx, wy + dy);
            m += v;
            sx += v * (wx + dx + 0.5);
            sy += v * (wy + dy + 0.5);
        }
        if (m <= 0.0) return std::nullopt;

        const double nx = sx / m, ny = sy / m;
        const double shift = std::hypot(nx - cx, ny - cy);
        cx = nx;
        cy = ny;
        mass = m;

        const int nwx = static_cast<int>(std::floor(cx));
        const int nwy = static_cast<int>(std::floor(cy));
        if (nwx == wx && nwy == wy && shift < params.convergence_px) break;
        wx = nwx;
        wy = nwy;
    }

    double rg2 = 0.0;
    for (const auto& [dx, dy] : offsets) {
        const double v = filtered.at(wx + dx, wy + dy);
        const double px = wx + dx + 0.5, py = wy + dy + 0.5;
        rg2 += v * ((px - cx) * (px - cx) + (py - cy) * (py - cy));
    }

    RefinedPeak out;
    out.x = cx;
    out.y = cy;
    out.mass = mass;
    out.size = std::sqrt(rg2 / mass);
    return out;
}

std::vector<RefinedPeak> locate_features(const GrayImage& frame, const LocateParams& params) {
    params.validate();
    RealImage work(frame.width, frame.height);
    for (size_t i = 0; i < frame.size(); ++i)
        work.pixels[i] = params.bright_features ? static_cast<double>(frame.pixels[i])
                                                : 255.0 - frame.pixels[i];

    const RealImage filtered = bandpass(work, params);
    std::vector<RefinedPeak> refined;
    for (const auto& peak : find_candidates(filtered, params)) {
        if (auto r = refine_centroid(filtered, peak, params)) refined.push_back(*r);
    }

    // Duplicate suppression: candidates that converged to (nearly) the same
    // feature keep only the strongest representative.
    std::stable_sort(refined.begin(), refined.end(), [](const RefinedPeak& a, const RefinedPeak& b) {
        if (a.mass != b.mass) return a.mass > b.mass;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    std::vector<RefinedPeak> kept;
    const double sep = params.feature_diameter_px;
    for (const auto& r : refined) {
        bool dup = false;
        for (const auto& k : kept) {
            if (std::hypot(r.x - k.x, r.y - k.y) < sep) {
                dup = true;
                break;
            }
        }
        if (!dup) kept.push_back(r);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const RefinedPeak& a, const RefinedPeak& b) {
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    return kept;
}

}  // namespace looptrack
