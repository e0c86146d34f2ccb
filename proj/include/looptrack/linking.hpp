#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "looptrack/geometry.hpp"

namespace looptrack {

/// One defect in one frame.
struct DefectObservation {
    long frame = 0;
    double center_x = 0.0;
    double center_y = 0.0;
    BoundingBox box{};
    std::optional<double> size_nm;
    std::optional<double> confidence;
    bool size_is_fallback = false;  // size came from the box, not an ellipse fit
};

struct LinkParams {
    double search_range_px = 10.0;
    int memory_frames = 3;       // frames a lost particle stays eligible
    int max_subnet_size = 12;    // sources+destinations per subnetwork

    void validate() const;  // throws std::invalid_argument
};

/// Frame-ordered observations sharing one defect identity.
struct Trajectory {
    long id = 0;
    std::vector<DefectObservation> observations;  // frames strictly increasing
    std::vector<long> gap_frames;                 // frames bridged by memory

    long first_frame() const { return observations.front().frame; }
    long last_frame() const { return observations.back().frame; }
    long lifetime_frames() const { return last_frame() - first_frame() + 1; }
};

/// A frame transition produced a subnetwork too large to solve exactly.
class SubnetOverflowError : public std::runtime_error {
public:
    SubnetOverflowError(long frame, int size);
    long frame;
    int size;
};

/// Link per-frame observation lists (ascending frame order; every list
/// non-mixed in frame) into trajectories. For each frame, candidate pairs
/// within search_range are partitioned into connected subnetworks and each
/// subnetwork is solved exactly for the assignment minimizing total squared
/// displacement, with unmatched particles on either side charged
/// search_range^2. Unmatched tracks stay eligible for memory_frames more
/// frames; unmatched observations open new trajectories. Ids are assigned by
/// order of first appearance (frame, then x, then y).
/// Throws SubnetOverflowError when a subnetwork exceeds max_subnet_size.
std::vector<Trajectory> link(const std::vector<std::vector<DefectObservation>>& frames,
                             const LinkParams& params);

/// Cumulative per-frame camera offset, anchored at zero on the first frame.
struct DriftTable {
    long first_frame = 0;
    std::vector<std::array<double, 2>> cumulative;

    bool covers(long frame) const {
        return frame >= first_frame &&
               frame < first_frame + static_cast<long>(cumulative.size());
    }
    /// Throws std::invalid_argument for frames outside the table.
    std::array<double, 2> at(long frame) const;
};

/// Per-transition drift is the component-wise median displacement over all
/// consecutive-frame linked pairs (0 when a transition has none), accumulated
/// over frames.
DriftTable estimate_drift(const std::vector<Trajectory>& trajectories);

/// Subtract the cumulative drift from every observation position and box.
std::vector<Trajectory> apply_drift_correction(std::vector<Trajectory> trajectories,
                                               const DriftTable& drift);

}  // namespace looptrack
