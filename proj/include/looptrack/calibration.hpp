#pragma once

#include <string>

namespace looptrack {

/// Physical conversion constants for one irradiation experiment.
///
/// Every quantity the toolkit reports (dose, time, lengths, densities) is
/// derived from this record; nothing is hard-coded elsewhere. Defaults match
/// the irradiation video the toolkit was first built for and can be
/// overridden field-by-field from a JSON config (missing fields keep the
/// defaults below).
struct Calibration {
    double pixels_per_nm = 2.6884;
    int image_width_px = 1344;
    int image_height_px = 962;
    double dpa_intercept = 0.8534;
    // Exact per-frame dose increment; prints as 0.00140 at report precision.
    double dpa_per_frame = 1.6466 / 1175.0;
    double dose_rate_dpa_per_s = 8e-4;
    double sample_volume_nm3 = 416.6 * 264.0 * 75.0;
    // Fraction of the true loop population visible under a single imaging
    // condition is 1/visibility_factor; raw counts are multiplied by it.
    double visibility_factor = 7.0 / 4.0;

    double seconds_per_frame() const { return dpa_per_frame / dose_rate_dpa_per_s; }

    /// Throws std::invalid_argument if any field violates its range.
    void validate() const;
};

double frame_to_dpa(long frame, const Calibration& cal);

/// Algebraic inverse of frame_to_dpa, rounded to the nearest integer frame.
long dpa_to_frame(double dpa, const Calibration& cal);

/// Throws std::domain_error for negative dpa.
double dpa_to_time_s(double dpa, const Calibration& cal);

/// Throws std::domain_error for negative lengths.
double px_to_nm(double length_px, const Calibration& cal);
double nm_to_px(double length_nm, const Calibration& cal);

/// Parse a calibration from JSON text. Unknown keys are rejected, missing
/// keys take defaults. Field names match the struct members exactly.
Calibration calibration_from_json(const std::string& text);
Calibration load_calibration(const std::string& path);
std::string calibration_to_json(const Calibration& cal);

/// Stable 16-hex-digit fingerprint of all fields, embedded in output file
/// headers so results can be traced back to the constants that produced them.
std::string calibration_hash(const Calibration& cal);

}  // namespace looptrack
