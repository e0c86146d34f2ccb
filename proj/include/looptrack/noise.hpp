#pragma once

#include <cstdint>
#include <variant>

#include "looptrack/image.hpp"

namespace looptrack {

/// Additive zero-mean noise; `variance` is in normalized [0,1] intensity
/// units, matching the usual image-noise convention.
struct GaussianNoise {
    double variance = 0.01;
};

/// Replaces a fraction `amount` of pixels; a replaced pixel becomes white
/// with probability `salt_ratio`, black otherwise.
struct SaltPepperNoise {
    double amount = 0.05;
    double salt_ratio = 0.5;
};

/// Shot noise: each pixel is resampled as Poisson(value/255 * peak) / peak.
/// Larger peaks mean less noise; peak must be > 0.
struct PoissonNoise {
    double peak = 255.0;
};

using NoiseModel = std::variant<GaussianNoise, SaltPepperNoise, PoissonNoise>;

/// Deterministic for a fixed seed, on every platform: the samplers are
/// self-contained rather than delegating to implementation-defined
/// std::*_distribution. Outputs are clamped to [0,255].
/// Throws std::invalid_argument for out-of-range model parameters.
GrayImage add_noise(const GrayImage& img, const NoiseModel& model, std::uint64_t seed);

/// SplitMix64 step; used to derive independent per-frame seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace looptrack
