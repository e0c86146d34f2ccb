#pragma once

#include <optional>
#include <span>
#include <vector>

#include "looptrack/calibration.hpp"
#include "looptrack/linking.hpp"

namespace looptrack {

/// Linear-interpolation quantile of an unsorted sample, q in [0,1]
/// (empirical-CDF interpolation: position (n-1)*q between order statistics).
double quantile(std::span<const double> values, double q);

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};

/// Throws std::invalid_argument on an empty sample.
Quartiles size_stats(std::span<const double> sizes_nm);

/// Visibility-corrected count per cm^3 of the calibrated sample volume.
double loop_density_cm3(long count, const Calibration& cal);

/// density^(-1/3), reported in nm.
double mean_defect_spacing_nm(double density_cm3);

struct PercentDifferenceStats {
    double max_pct = 0.0;
    double mean_pct = 0.0;
    double std_pct = 0.0;  // population standard deviation
};

/// Element-wise |a-b|/b * 100 summarized as (max, mean, std).
/// Throws std::invalid_argument on length mismatch, empty input, or zero in b.
PercentDifferenceStats percent_difference_stats(std::span<const double> a,
                                                std::span<const double> b);

struct FrameStats {
    long frame = 0;
    double dpa = 0.0;
    long raw_count = 0;
    double corrected_density_cm3 = 0.0;
    double size_q1_nm = 0.0;
    double size_median_nm = 0.0;
    double size_q3_nm = 0.0;
    long fallback_sizes = 0;  // observations whose size came from the box
};

/// Per-frame counts, densities, and size quartiles. Observations without a
/// fitted size fall back to the box diagonal extent (longest side) in nm and
/// are counted in fallback_sizes.
std::vector<FrameStats> frame_stats(const std::vector<std::vector<DefectObservation>>& frames,
                                    const Calibration& cal);

struct DiffusionRecord {
    long trajectory_id = 0;
    double d_eff_nm2_per_s = 0.0;
    double median_size_nm = 0.0;
    long lifetime_frames = 0;
};

/// Effective 2D diffusion coefficient: mean squared displacement over all
/// lag-`lag` (default consecutive-frame) pairs, in nm^2, divided by
/// 4 * lag * seconds_per_frame. Memory-bridged gaps contribute no pairs.
/// Returns nullopt when the trajectory has no qualifying pair.
std::optional<DiffusionRecord> d_eff(const Trajectory& traj, const Calibration& cal,
                                     int lag = 1);

struct DiffusionBin {
    double lo_nm = 0.0;
    double hi_nm = 0.0;
    long count = 0;
    double mean_d_eff = 0.0;
    std::optional<double> sem_d_eff;  // absent for bins with < 2 records
};

/// Histogram of records by median size over [lo_nm, hi_nm) with `bins`
/// equal-width bins; per bin the mean d_eff and the standard deviation of the
/// mean. Records outside the range are dropped.
std::vector<DiffusionBin> bin_diffusion(std::span<const DiffusionRecord> records,
                                        double lo_nm = 2.0, double hi_nm = 18.0,
                                        int bins = 50);

/// Observations whose center lies inside both closed intervals.
std::vector<DefectObservation> roi_filter(std::span<const DefectObservation> observations,
                                          double x_lo, double x_hi, double y_lo, double y_hi);

struct GrowthCurve {
    long trajectory_id = 0;
    std::vector<std::array<double, 2>> points;  // (dpa, size_nm), frame-ordered
    long skipped = 0;                           // observations without a size
};

GrowthCurve growth_curve(const Trajectory& traj, const Calibration& cal);

struct LifetimeSummary {
    long count = 0;
    std::optional<double> mean_lifetime_frames;  // absent for an empty set
};

LifetimeSummary lifetime_stats(std::span<const Trajectory> trajectories);

/// The size used everywhere sizes are aggregated: the fitted ellipse size
/// when present, otherwise the longest box side converted to nm.
double observation_size_nm(const DefectObservation& obs, const Calibration& cal);

}  // namespace looptrack
