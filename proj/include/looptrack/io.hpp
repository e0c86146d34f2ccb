#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "looptrack/analytics.hpp"
#include "looptrack/calibration.hpp"
#include "looptrack/geometry.hpp"
#include "looptrack/linking.hpp"

namespace looptrack {

enum class ReportFormat { csv, json };

/// Non-fatal parse problem: the offending line is skipped and reported.
struct Diagnostic {
    long line = 0;
    std::string message;
};

/// Ordered key/value lines echoed into every output header so a file fully
/// describes the run that produced it.
using HeaderFields = std::vector<std::pair<std::string, std::string>>;

std::string format_sig9(double v);  // %.9g, the report float policy

// ---------------------------------------------------------------------------
// Detections / ground truth / observations (CSV, '#'-prefixed header)
// ---------------------------------------------------------------------------

struct DetectionData {
    std::string schema;    // e.g. looptrack.detections.v1
    std::string detector;  // free-form tool name from the header
    std::vector<std::vector<DefectObservation>> frames;  // ascending frame order
    std::vector<Diagnostic> diagnostics;

    std::vector<long> frame_numbers() const;
    size_t total_observations() const;
};

inline constexpr const char* kDetectionsSchema = "looptrack.detections.v1";
inline constexpr const char* kGroundTruthSchema = "looptrack.groundtruth.v1";
inline constexpr const char* kObservationsSchema = "looptrack.observations.v1";

/// Reads any of the three box-record schemas. Confidence and size columns are
/// optional depending on the schema. Unreadable files and unknown schema
/// lines are fatal (std::runtime_error); malformed records are skipped with a
/// diagnostic.
DetectionData read_detections(const std::string& path);

/// Imports a plain headerless box CSV (frame,x_min,y_min,x_max,y_max with
/// optional trailing confidence) as exported by pixel labeling tools. With
/// `inclusive_pixel_indices`, max coordinates are inclusive pixel indices and
/// each index is treated as a unit square, so the box becomes
/// [x_min, x_max+1) x [y_min, y_max+1).
DetectionData import_plain_boxes(const std::string& path, bool inclusive_pixel_indices);

/// Writers are deterministic: fixed column order, %.9g floats, no clocks.
void write_detections(const std::string& path, const DetectionData& data,
                      const Calibration& cal, const std::string& schema,
                      const HeaderFields& extra = {});

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct TrajectoryData {
    std::vector<Trajectory> trajectories;
    std::vector<Diagnostic> diagnostics;
};

void write_trajectories(const std::string& path, std::span<const Trajectory> trajectories,
                        const Calibration& cal, const HeaderFields& extra = {});
TrajectoryData read_trajectories(const std::string& path);

void write_drift_table(const std::string& path, const DriftTable& drift,
                       const Calibration& cal, const HeaderFields& extra = {});

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Labeled metrics row; `scope` is a frame number or "all" for pooled counts.
struct ScopedMetrics {
    std::string scope;
    MetricsReport report;
};

void write_metrics_report(const std::string& path, std::span<const ScopedMetrics> rows,
                          ReportFormat format, const Calibration& cal,
                          const HeaderFields& extra = {});

void write_frame_stats(const std::string& path, std::span<const FrameStats> rows,
                       ReportFormat format, const Calibration& cal,
                       const HeaderFields& extra = {});

void write_growth_curves(const std::string& path, std::span<const GrowthCurve> curves,
                         ReportFormat format, const Calibration& cal,
                         const HeaderFields& extra = {});

void write_diffusion_records(const std::string& path, std::span<const DiffusionRecord> rows,
                             ReportFormat format, const Calibration& cal,
                             const HeaderFields& extra = {});

void write_diffusion_histogram(const std::string& path, std::span<const DiffusionBin> bins,
                               ReportFormat format, const Calibration& cal,
                               const HeaderFields& extra = {});

}  // namespace looptrack
