#include "looptrack/noise.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace looptrack {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace {

// mt19937_64 is bit-identical everywhere; only the distributions on top of it
// are implementation-defined, so those are spelled out below.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]
    double uniform_pos() { return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; }

    double gaussian() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Knuth multiplication for small means, Hormann's PTRD transformed
    // rejection for large ones.
    long poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda < 10.0) {
            const double limit = std::exp(-lambda);
            long k = 0;
            double p = uniform();
            while (p > limit) {
                ++k;
                p *= uniform();
            }
            return k;
        }
        const double smu = std::sqrt(lambda);
        const double b = 0.931 + 2.53 * smu;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        while (true) {
            double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const long k = static_cast<long>(std::floor((2.0 * a / us + b) * u + lambda + 0.43));
            if (us >= 0.07 && v <= v_r) return k;
            if (k < 0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
                k * std::log(lambda) - lambda - std::lgamma(k + 1.0))
                return k;
        }
    }

private:
    std::mt19937_64 gen_;
};

std::uint8_t clamp_px(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

GrayImage apply_gaussian(const GrayImage& img, const GaussianNoise& p, Rng& rng) {
    if (!(p.variance >= 0.0)) throw std::invalid_argument("gaussian noise: variance must be >= 0");
    const double sigma_px = 255.0 * std::sqrt(p.variance);
    GrayImage out(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i)
        out.pixels[i] = clamp_px(img.pixels[i] + sigma_px * rng.gaussian());
    return out;
}

GrayImage apply_salt_pepper(const GrayImage& img, const SaltPepperNoise& p, Rng& rng) {
    if (p.amount < 0.0 || p.amount > 1.0)
        throw std::invalid_argument("salt-pepper noise: amount must be in [0,1]");
    if (p.salt_ratio < 0.0 || p.salt_ratio > 1.0)
        throw std::invalid_argument("salt-pepper noise: salt_ratio must be in [0,1]");
    GrayImage out = img;
    for (size_t i = 0; i < out.size(); ++i) {
        if (rng.uniform() < p.amount)
            out.pixels[i] = rng.uniform() < p.salt_ratio ? 255 : 0;
    }
    return out;
}

GrayImage apply_poisson(const GrayImage& img, const PoissonNoise& p, Rng& rng) {
    if (!(p.peak > 0.0)) throw std::invalid_argument("poisson noise: peak must be > 0");
    GrayImage out(img.width, img.height);
    for (size_t i = 0; i < img.size(); ++i) {
        const double lambda = img.pixels[i] / 255.0 * p.peak;
        out.pixels[i] = clamp_px(static_cast<double>(rng.poisson(lambda)) / p.peak * 255.0);
    }
    return out;
}

}  // namespace

GrayImage add_noise(const GrayImage& img, const NoiseModel& model, std::uint64_t seed) {
    Rng rng(seed);
    return std::visit(
        [&](const auto& m) -> GrayImage {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, GaussianNoise>) return apply_gaussian(img, m, rng);
            else if constexpr (std::is_same_v<M, SaltPepperNoise>) return apply_salt_pepper(img, m, rng);
            else return apply_poisson(img, m, rng);
        },
        model);
}

}  // namespace looptrack
