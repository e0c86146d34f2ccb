#include "looptrack/linking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace looptrack {

void LinkParams::validate() const {
    if (!(search_range_px > 0.0)) throw std::invalid_argument("search_range_px must be > 0");
    if (memory_frames < 0) throw std::invalid_argument("memory_frames must be >= 0");
    if (max_subnet_size < 2) throw std::invalid_argument("max_subnet_size must be >= 2");
}

SubnetOverflowError::SubnetOverflowError(long frame_, int size_)
    : std::runtime_error("linking subnetwork of size " + std::to_string(size_) +
                         " at frame " + std::to_string(frame_) +
                         " exceeds the combinatorial bound"),
      frame(frame_),
      size(size_) {}

namespace {

struct ActiveTrack {
    double x, y;
    long last_frame;
    size_t traj;  // index into the trajectory build list
};

// Exact subnetwork solver: depth-first over sources in order, assigning each
// to an unused candidate destination (ascending) or leaving it unmatched.
// Unmatched sources and destinations both cost range^2. The first optimum in
// DFS order wins, which makes ties deterministic.
class SubnetSolver {
public:
    SubnetSolver(const std::vector<std::vector<std::pair<int, double>>>& candidates,
                 int num_dests, double unmatched_cost)
        : candidates_(candidates),
          unmatched_cost_(unmatched_cost),
          dest_used_(num_dests, 0),
          assignment_(candidates.size(), -1),
          best_assignment_(candidates.size(), -1) {}

    std::vector<int> solve() {
        best_cost_ = 1e300;
        descend(0, 0.0);
        return best_assignment_;
    }

    double best_cost() const { return best_cost_; }

private:
    void descend(size_t s, double cost) {
        if (cost >= best_cost_) return;
        if (s == candidates_.size()) {
            double total = cost;
            for (char used : dest_used_)
                if (!used) total += unmatched_cost_;
            if (total < best_cost_) {
                best_cost_ = total;
                best_assignment_ = assignment_;
            }
            return;
        }
        for (const auto& [dest, cost_sq] : candidates_[s]) {
            if (dest_used_[dest]) continue;
            dest_used_[dest] = 1;
            assignment_[s] = dest;
            descend(s + 1, cost + cost_sq);
            assignment_[s] = -1;
            dest_used_[dest] = 0;
        }
        descend(s + 1, cost + unmatched_cost_);
    }

    const std::vector<std::vector<std::pair<int, double>>>& candidates_;
    double unmatched_cost_;
    std::vector<char> dest_used_;
    std::vector<int> assignment_;
    std::vector<int> best_assignment_;
    double best_cost_ = 1e300;
};

struct DisjointSet {
    std::vector<int> parent;
    explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<Trajectory> link(const std::vector<std::vector<DefectObservation>>& frames,
                             const LinkParams& params) {
    params.validate();
    long prev_frame = std::numeric_limits<long>::min();
    for (const auto& list : frames) {
        if (list.empty()) continue;
        for (const auto& obs : list)
            if (obs.frame != list.front().frame)
                throw std::invalid_argument("link: mixed frame numbers within one list");
        if (list.front().frame <= prev_frame)
            throw std::invalid_argument("link: frame lists must be in ascending frame order");
        prev_frame = list.front().frame;
    }

    const double range_sq = params.search_range_px * params.search_range_px;
    std::vector<Trajectory> built;
    std::vector<ActiveTrack> active;

    for (const auto& list : frames) {
        if (list.empty()) continue;
        const long frame = list.front().frame;

        // Tracks too stale to relink drop out before matching.
        std::erase_if(active, [&](const ActiveTrack& t) {
            return frame - t.last_frame > params.memory_frames + 1;
        });

        const int ns = static_cast<int>(active.size());
        const int nd = static_cast<int>(list.size());

        // candidates[s] = (destination, squared displacement) within range
        std::vector<std::vector<std::pair<int, double>>> candidates(ns);
        for (int s = 0; s < ns; ++s) {
            for (int d = 0; d < nd; ++d) {
                const double dx = list[d].center_x - active[s].x;
                const double dy = list[d].center_y - active[s].y;
                const double dist_sq = dx * dx + dy * dy;
                if (dist_sq <= range_sq) candidates[s].emplace_back(d, dist_sq);
            }
        }

        // Connected subnetworks over the bipartite candidate graph.
        DisjointSet dsu(ns + nd);
        for (int s = 0; s < ns; ++s)
            for (const auto& [d, cost] : candidates[s]) dsu.unite(s, ns + d);

        std::vector<int> assignment(ns, -1);
        std::vector<int> roots;
        for (int s = 0; s < ns; ++s)
            if (!candidates[s].empty()) roots.push_back(dsu.find(s));
        std::sort(roots.begin(), roots.end());
        roots.erase(std::unique(roots.begin(), roots.end()), roots.end());

        for (int root : roots) {
            std::vector<int> comp_sources, comp_dests;
            for (int s = 0; s < ns; ++s)
                if (!candidates[s].empty() && dsu.find(s) == root) comp_sources.push_back(s);
            for (int d = 0; d < nd; ++d)
                if (dsu.find(ns + d) == root) comp_dests.push_back(d);
            if (static_cast<int>(comp_sources.size() + comp_dests.size()) > params.max_subnet_size)
                throw SubnetOverflowError(frame, static_cast<int>(comp_sources.size() + comp_dests.size()));

            std::vector<int> dest_local(nd, -1);
            for (size_t i = 0; i < comp_dests.size(); ++i) dest_local[comp_dests[i]] = static_cast<int>(i);
            std::vector<std::vector<std::pair<int, double>>> local(comp_sources.size());
            for (size_t i = 0; i < comp_sources.size(); ++i)
                for (const auto& [d, cost] : candidates[comp_sources[i]])
                    local[i].emplace_back(dest_local[d], cost);

            SubnetSolver solver(local, static_cast<int>(comp_dests.size()), range_sq);
            const std::vector<int> local_assignment = solver.solve();
            for (size_t i = 0; i < comp_sources.size(); ++i)
                if (local_assignment[i] >= 0)
                    assignment[comp_sources[i]] = comp_dests[local_assignment[i]];
        }

        // Apply matches, then open new trajectories for unclaimed observations.
        std::vector<char> dest_claimed(nd, 0);
        for (int s = 0; s < ns; ++s) {
            const int d = assignment[s];
            if (d < 0) continue;
            dest_claimed[d] = 1;
            Trajectory& traj = built[active[s].traj];
            for (long g = active[s].last_frame + 1; g < frame; ++g) traj.gap_frames.push_back(g);
            traj.observations.push_back(list[d]);
            active[s].x = list[d].center_x;
            active[s].y = list[d].center_y;
            active[s].last_frame = frame;
        }
        for (int d = 0; d < nd; ++d) {
            if (dest_claimed[d]) continue;
            Trajectory traj;
            traj.observations.push_back(list[d]);
            built.push_back(std::move(traj));
            active.push_back({list[d].center_x, list[d].center_y, frame, built.size() - 1});
        }
    }

    // Reproducible ids: order of first appearance.
    std::vector<size_t> order(built.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const DefectObservation& oa = built[a].observations.front();
        const DefectObservation& ob = built[b].observations.front();
        if (oa.frame != ob.frame) return oa.frame < ob.frame;
        if (oa.center_x != ob.center_x) return oa.center_x < ob.center_x;
        return oa.center_y < ob.center_y;
    });
    std::vector<Trajectory> result;
    result.reserve(built.size());
    for (size_t i = 0; i < order.size(); ++i) {
        built[order[i]].id = static_cast<long>(i);
        result.push_back(std::move(built[order[i]]));
    }
    return result;
}

std::array<double, 2> DriftTable::at(long frame) const {
    if (!covers(frame))
        throw std::invalid_argument("drift table does not cover frame " + std::to_string(frame));
    return cumulative[static_cast<size_t>(frame - first_frame)];
}

namespace {

double median_of(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

DriftTable estimate_drift(const std::vector<Trajectory>& trajectories) {
    DriftTable table;
    long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
    for (const auto& t : trajectories) {
        if (t.observations.empty()) continue;
        lo = std::min(lo, t.first_frame());
        hi = std::max(hi, t.last_frame());
    }
    if (lo > hi) return table;

    table.first_frame = lo;
    const size_t span = static_cast<size_t>(hi - lo + 1);
    std::vector<std::vector<double>> dx(span), dy(span);
    for (const auto& t : trajectories) {
        for (size_t i = 1; i < t.observations.size(); ++i) {
            const auto& a = t.observations[i - 1];
            const auto& b = t.observations[i];
            if (b.frame - a.frame != 1) continue;  // memory-bridged gaps excluded
            const size_t slot = static_cast<size_t>(b.frame - lo);
            dx[slot].push_back(b.center_x - a.center_x);
            dy[slot].push_back(b.center_y - a.center_y);
        }
    }

    table.cumulative.resize(span, {0.0, 0.0});
    for (size_t i = 1; i < span; ++i) {
        const double step_x = dx[i].empty() ? 0.0 : median_of(dx[i]);
        const double step_y = dy[i].empty() ? 0.0 : median_of(dy[i]);
        table.cumulative[i] = {table.cumulative[i - 1][0] + step_x,
                               table.cumulative[i - 1][1] + step_y};
    }
    return table;
}

std::vector<Trajectory> apply_drift_correction(std::vector<Trajectory> trajectories,
                                               const DriftTable& drift) {
    for (auto& t : trajectories) {
        for (auto& obs : t.observations) {
            const auto [ox, oy] = drift.at(obs.frame);
            obs.center_x -= ox;
            obs.center_y -= oy;
            obs.box = obs.box.shifted(-ox, -oy);
        }
    }
    return trajectories;
}

}  // namespace looptrack
