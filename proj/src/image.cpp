#include "looptrack/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace looptrack {

namespace {

// Exact comparison of between-class variances. For split t the variance is
// (S0*w1 - S1*w0)^2 / (w0*w1) with S = sum(i*h[i]) and w = pixel counts, all
// integers, so two splits can be ranked without any floating-point rounding.
struct VarianceFraction {
    unsigned __int128 num_sq;  // (S0*w1 - S1*w0)^2
    std::uint64_t den;         // w0*w1

    bool greater_than(const VarianceFraction& o) const {
        // Compare num_sq/den > o.num_sq/o.den via quotient and remainder so
        // the cross products stay inside 128 bits for any realistic image.
        const unsigned __int128 q1 = num_sq / den, r1 = num_sq % den;
        const unsigned __int128 q2 = o.num_sq / o.den, r2 = o.num_sq % o.den;
        if (q1 != q2) return q1 > q2;
        return r1 * o.den > r2 * den;
    }
};

VarianceFraction between_class_variance(const std::array<std::uint64_t, 256>& hist,
                                        std::uint64_t total, std::uint64_t total_sum, int t) {
    std::uint64_t w0 = 0, s0 = 0;
    for (int i = 0; i <= t; ++i) {
        w0 += hist[i];
        s0 += static_cast<std::uint64_t>(i) * hist[i];
    }
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) return {0, 1};
    const std::uint64_t s1 = total_sum - s0;
    const __int128 diff = static_cast<__int128>(s0) * w1 - static_cast<__int128>(s1) * w0;
    const unsigned __int128 mag = diff < 0 ? static_cast<unsigned __int128>(-diff)
                                           : static_cast<unsigned __int128>(diff);
    return {mag * mag, w0 * w1};
}

}  // namespace

int otsu_threshold(const GrayImage& img) {
    if (img.size() == 0) throw std::domain_error("otsu_threshold: empty image");
    std::array<std::uint64_t, 256> hist{};
    for (std::uint8_t v : img.pixels) ++hist[v];

    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    if (*lo == *hi) throw std::domain_error("otsu_threshold: constant image");

    std::uint64_t total_sum = 0;
    for (int i = 0; i < 256; ++i) total_sum += static_cast<std::uint64_t>(i) * hist[i];
    const std::uint64_t total = img.size();

    int best_t = 0;
    VarianceFraction best = between_class_variance(hist, total, total_sum, 0);
    for (int t = 1; t < 256; ++t) {
        const VarianceFraction v = between_class_variance(hist, total, total_sum, t);
        if (v.greater_than(best)) {
            best = v;
            best_t = t;
        }
    }
    return best_t;
}

GrayImage binarize(const GrayImage& img, int threshold, bool bright_foreground) {
    GrayImage out(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i) {
        const bool bright = img.pixels[i] > threshold;
        out.pixels[i] = (bright == bright_foreground) ? 255 : 0;
    }
    return out;
}

namespace {

GrayImage morph3x3(const GrayImage& mask, bool erode) {
    GrayImage out(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            bool hit = erode;  // erode: all neighbors set; dilate: any neighbor set
            for (int dy = -1; dy <= 1 && hit == erode; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    const bool fg = mask.in_bounds(nx, ny) && mask.at(nx, ny) != 0;
                    if (erode && !fg) {
                        hit = false;
                        break;
                    }
                    if (!erode && fg) {
                        hit = true;
                        break;
                    }
                }
            }
            out.at(x, y) = hit ? 255 : 0;
        }
    }
    return out;
}

}  // namespace

GrayImage erode3x3(const GrayImage& mask, int iterations) {
    if (iterations < 0) throw std::invalid_argument("erode3x3: iterations must be >= 0");
    GrayImage out = mask;
    for (int i = 0; i < iterations; ++i) out = morph3x3(out, true);
    return out;
}

GrayImage dilate3x3(const GrayImage& mask, int iterations) {
    if (iterations < 0) throw std::invalid_argument("dilate3x3: iterations must be >= 0");
    GrayImage out = mask;
    for (int i = 0; i < iterations; ++i) out = morph3x3(out, false);
    return out;
}

GrayImage morph_open(const GrayImage& mask, int iterations) {
    if (iterations < 1) throw std::invalid_argument("morph_open: iterations must be >= 1");
    return dilate3x3(erode3x3(mask, iterations), iterations);
}

namespace {

constexpr double kDtInf = 1e20;

// Felzenszwalb & Huttenlocher 1D squared-distance transform: lower envelope
// of the parabolas y = f[q] + (x - q)^2.
void dt1d(const double* f, double* d, int n, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kDtInf;
    z[1] = kDtInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + static_cast<double>(q) * q) -
                    (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
                   (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + static_cast<double>(q) * q) -
                 (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kDtInf;
    }
    k = 0;
    for (int x = 0; x < n; ++x) {
        while (z[k + 1] < x) ++k;
        const double dx = x - v[k];
        d[x] = dx * dx + f[v[k]];
    }
}

}  // namespace

RealImage distance_transform(const GrayImage& mask) {
    const int w = mask.width, h = mask.height;
    RealImage sq(w, h);
    for (size_t i = 0; i < mask.size(); ++i)
        sq.pixels[i] = mask.pixels[i] != 0 ? kDtInf : 0.0;

    const int n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    for (int x = 0; x < w; ++x) {  // columns
        for (int y = 0; y < h; ++y) f[y] = sq.at(x, y);
        dt1d(f.data(), d.data(), h, v.data(), z.data());
        for (int y = 0; y < h; ++y) sq.at(x, y) = d[y];
    }
    for (int y = 0; y < h; ++y) {  // rows
        for (int x = 0; x < w; ++x) f[x] = sq.at(x, y);
        dt1d(f.data(), d.data(), w, v.data(), z.data());
        for (int x = 0; x < w; ++x) sq.at(x, y) = d[x];
    }

    const double cap = std::hypot(static_cast<double>(w), static_cast<double>(h));
    for (double& p : sq.pixels) p = p >= kDtInf ? cap : std::sqrt(p);
    return sq;
}

}  // namespace looptrack
