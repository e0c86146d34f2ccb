#include "looptrack/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace looptrack {

double quantile(std::span<const double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile: empty sample");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile: q must be in [0,1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Quartiles size_stats(std::span<const double> sizes_nm) {
    if (sizes_nm.empty()) throw std::invalid_argument("size_stats: empty sample");
    return {quantile(sizes_nm, 0.25), quantile(sizes_nm, 0.5), quantile(sizes_nm, 0.75)};
}

double loop_density_cm3(long count, const Calibration& cal) {
    if (count < 0) throw std::invalid_argument("loop_density_cm3: negative count");
    const double volume_cm3 = cal.sample_volume_nm3 * 1e-21;  // (1 nm = 1e-7 cm)^3
    return cal.visibility_factor * static_cast<double>(count) / volume_cm3;
}

double mean_defect_spacing_nm(double density_cm3) {
    if (!(density_cm3 > 0.0))
        throw std::invalid_argument("mean_defect_spacing_nm: density must be > 0");
    return 1e7 * std::pow(density_cm3, -1.0 / 3.0);
}

PercentDifferenceStats percent_difference_stats(std::span<const double> a,
                                                std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("percent_difference_stats: length mismatch");
    if (a.empty()) throw std::invalid_argument("percent_difference_stats: empty input");

    std::vector<double> diffs(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        if (b[i] == 0.0)
            throw std::invalid_argument("percent_difference_stats: zero reference value");
        diffs[i] = std::abs(a[i] - b[i]) / b[i] * 100.0;
    }
    PercentDifferenceStats stats;
    stats.max_pct = *std::max_element(diffs.begin(), diffs.end());
    double sum = 0.0;
    for (double d : diffs) sum += d;
    stats.mean_pct = sum / static_cast<double>(diffs.size());
    double var = 0.0;
    for (double d : diffs) var += (d - stats.mean_pct) * (d - stats.mean_pct);
    stats.std_pct = std::sqrt(var / static_cast<double>(diffs.size()));
    return stats;
}

double observation_size_nm(const DefectObservation& obs, const Calibration& cal) {
    if (obs.size_nm) return *obs.size_nm;
    return px_to_nm(std::max(obs.box.width(), obs.box.height()), cal);
}

std::vector<FrameStats> frame_stats(const std::vector<std::vector<DefectObservation>>& frames,
                                    const Calibration& cal) {
    std::vector<FrameStats> out;
    out.reserve(frames.size());
    for (const auto& list : frames) {
        if (list.empty()) continue;
        FrameStats s;
        s.frame = list.front().frame;
        s.dpa = frame_to_dpa(s.frame, cal);
        s.raw_count = static_cast<long>(list.size());
        s.corrected_density_cm3 = loop_density_cm3(s.raw_count, cal);
        std::vector<double> sizes;
        sizes.reserve(list.size());
        for (const auto& obs : list) {
            sizes.push_back(observation_size_nm(obs, cal));
            if (!obs.size_nm) ++s.fallback_sizes;
        }
        const Quartiles q = size_stats(sizes);
        s.size_q1_nm = q.q1;
        s.size_median_nm = q.median;
        s.size_q3_nm = q.q3;
        out.push_back(s);
    }
    return out;
}

std::optional<DiffusionRecord> d_eff(const Trajectory& traj, const Calibration& cal, int lag) {
    if (lag < 1) throw std::invalid_argument("d_eff: lag must be >= 1");
    const double nm_per_px = 1.0 / cal.pixels_per_nm;
    const double tau_s = static_cast<double>(lag) * cal.seconds_per_frame();

    double sum_sq_nm2 = 0.0;
    long pairs = 0;
    const auto& obs = traj.observations;
    for (size_t i = 0, j = 0; i < obs.size(); ++i) {
        if (j <= i) j = i + 1;
        while (j < obs.size() && obs[j].frame - obs[i].frame < lag) ++j;
        if (j < obs.size() && obs[j].frame - obs[i].frame == lag) {
            const double dx = (obs[j].center_x - obs[i].center_x) * nm_per_px;
            const double dy = (obs[j].center_y - obs[i].center_y) * nm_per_px;
            sum_sq_nm2 += dx * dx + dy * dy;
            ++pairs;
        }
    }
    if (pairs == 0) return std::nullopt;

    std::vector<double> sizes;
    sizes.reserve(obs.size());
    for (const auto& o : obs) sizes.push_back(observation_size_nm(o, cal));

    DiffusionRecord rec;
    rec.trajectory_id = traj.id;
    rec.d_eff_nm2_per_s = sum_sq_nm2 / static_cast<double>(pairs) / (4.0 * tau_s);
    rec.median_size_nm = quantile(sizes, 0.5);
    rec.lifetime_frames = traj.lifetime_frames();
    return rec;
}

std::vector<DiffusionBin> bin_diffusion(std::span<const DiffusionRecord> records,
                                        double lo_nm, double hi_nm, int bins) {
    if (bins < 1) throw std::invalid_argument("bin_diffusion: bins must be >= 1");
    if (!(hi_nm > lo_nm)) throw std::invalid_argument("bin_diffusion: hi must exceed lo");

    const double width = (hi_nm - lo_nm) / static_cast<double>(bins);
    std::vector<std::vector<double>> values(static_cast<size_t>(bins));
    for (const auto& rec : records) {
        if (rec.median_size_nm < lo_nm || rec.median_size_nm >= hi_nm) continue;
        auto idx = static_cast<size_t>((rec.median_size_nm - lo_nm) / width);
        if (idx >= values.size()) idx = values.size() - 1;  // float-edge guard
        values[idx].push_back(rec.d_eff_nm2_per_s);
    }

    std::vector<DiffusionBin> out(static_cast<size_t>(bins));
    for (int i = 0; i < bins; ++i) {
        DiffusionBin& bin = out[static_cast<size_t>(i)];
        bin.lo_nm = lo_nm + i * width;
        bin.hi_nm = lo_nm + (i + 1) * width;
        const auto& vals = values[static_cast<size_t>(i)];
        bin.count = static_cast<long>(vals.size());
        if (vals.empty()) continue;
        double sum = 0.0;
        for (double v : vals) sum += v;
        bin.mean_d_eff = sum / static_cast<double>(vals.size());
        if (vals.size() >= 2) {
            double var = 0.0;
            for (double v : vals) var += (v - bin.mean_d_eff) * (v - bin.mean_d_eff);
            var /= static_cast<double>(vals.size() - 1);
            bin.sem_d_eff = std::sqrt(var / static_cast<double>(vals.size()));
        }
    }
    return out;
}

std::vector<DefectObservation> roi_filter(std::span<const DefectObservation> observations,
                                          double x_lo, double x_hi, double y_lo, double y_hi) {
    if (!(x_lo <= x_hi) || !(y_lo <= y_hi))
        throw std::invalid_argument("roi_filter: empty or inverted range");
    std::vector<DefectObservation> kept;
    for (const auto& obs : observations) {
        if (obs.center_x >= x_lo && obs.center_x <= x_hi && obs.center_y >= y_lo &&
            obs.center_y <= y_hi)
            kept.push_back(obs);
    }
    return kept;
}

GrowthCurve growth_curve(const Trajectory& traj, const Calibration& cal) {
    GrowthCurve curve;
    curve.trajectory_id = traj.id;
    for (const auto& obs : traj.observations) {
        if (!obs.size_nm) {
            ++curve.skipped;
            continue;
        }
        curve.points.push_back({frame_to_dpa(obs.frame, cal), *obs.size_nm});
    }
    return curve;
}

LifetimeSummary lifetime_stats(std::span<const Trajectory> trajectories) {
    LifetimeSummary summary;
    summary.count = static_cast<long>(trajectories.size());
    if (trajectories.empty()) return summary;
    double sum = 0.0;
    for (const auto& t : trajectories) sum += static_cast<double>(t.lifetime_frames());
    summary.mean_lifetime_frames = sum / static_cast<double>(trajectories.size());
    return summary;
}

}  // namespace looptrack
