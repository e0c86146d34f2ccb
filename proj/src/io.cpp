#include "looptrack/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace looptrack {

std::string format_sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::vector<long> DetectionData::frame_numbers() const {
    std::vector<long> out;
    out.reserve(frames.size());
    for (const auto& list : frames)
        if (!list.empty()) out.push_back(list.front().frame);
    return out;
}

size_t DetectionData::total_observations() const {
    size_t n = 0;
    for (const auto& list : frames) n += list.size();
    return n;
}

namespace {

// ---------------------------------------------------------------------------
// Generic deterministic table writer (CSV and JSON share the cell formatting)
// ---------------------------------------------------------------------------

struct Table {
    HeaderFields header;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;  // empty cell = absent value
};

void require_writable(const std::ofstream& out, const std::string& path) {
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
}

bool cell_is_numeric(const std::string& cell) {
    if (cell.empty()) return false;
    char* end = nullptr;
    std::strtod(cell.c_str(), &end);
    return end != nullptr && *end == '\0' && end != cell.c_str();
}

std::string json_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out;
}

void write_table(const std::string& path, const Table& table, ReportFormat format) {
    std::ofstream out(path, std::ios::binary);
    require_writable(out, path);

    if (format == ReportFormat::csv) {
        for (const auto& [key, value] : table.header) out << "# " << key << ": " << value << "\n";
        for (size_t c = 0; c < table.columns.size(); ++c)
            out << (c ? "," : "# columns: ") << table.columns[c];
        out << "\n";
        for (const auto& row : table.rows) {
            for (size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
            out << "\n";
        }
    } else {
        out << "{\n  \"header\": {";
        for (size_t i = 0; i < table.header.size(); ++i)
            out << (i ? ", " : "") << "\"" << json_escape(table.header[i].first) << "\": \""
                << json_escape(table.header[i].second) << "\"";
        out << "},\n  \"columns\": [";
        for (size_t c = 0; c < table.columns.size(); ++c)
            out << (c ? ", " : "") << "\"" << json_escape(table.columns[c]) << "\"";
        out << "],\n  \"rows\": [";
        for (size_t r = 0; r < table.rows.size(); ++r) {
            out << (r ? ",\n    " : "\n    ") << "[";
            for (size_t c = 0; c < table.rows[r].size(); ++c) {
                const std::string& cell = table.rows[r][c];
                out << (c ? ", " : "");
                if (cell.empty()) out << "null";
                else if (cell_is_numeric(cell)) out << cell;
                else out << "\"" << json_escape(cell) << "\"";
            }
            out << "]";
        }
        out << (table.rows.empty() ? "]\n}\n" : "\n  ]\n}\n");
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

HeaderFields standard_header(const std::string& schema, const Calibration& cal,
                             const HeaderFields& extra) {
    HeaderFields h;
    h.emplace_back("schema", schema);
    h.emplace_back("calibration", calibration_hash(cal));
    h.emplace_back("pixels_per_nm", format_sig9(cal.pixels_per_nm));
    h.emplace_back("image_px", std::to_string(cal.image_width_px) + "x" +
                                   std::to_string(cal.image_height_px));
    h.emplace_back("dpa_intercept", format_sig9(cal.dpa_intercept));
    h.emplace_back("dpa_per_frame", format_sig9(cal.dpa_per_frame));
    h.emplace_back("dose_rate_dpa_per_s", format_sig9(cal.dose_rate_dpa_per_s));
    h.emplace_back("sample_volume_nm3", format_sig9(cal.sample_volume_nm3));
    h.emplace_back("visibility_factor", format_sig9(cal.visibility_factor));
    for (const auto& kv : extra) h.push_back(kv);
    return h;
}

// ---------------------------------------------------------------------------
// CSV reading helpers
// ---------------------------------------------------------------------------

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end && *end == '\0';
}

bool parse_long(const std::string& s, long& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtol(s.c_str(), &end, 10);
    return end && *end == '\0';
}

std::optional<std::string> header_value(const std::string& line, const std::string& key) {
    const std::string prefix = "# " + key + ":";
    if (line.rfind(prefix, 0) != 0) return std::nullopt;
    std::string v = line.substr(prefix.size());
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.erase(v.begin());
    while (!v.empty() && (v.back() == '\r' || v.back() == ' ')) v.pop_back();
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------------

DetectionData read_detections(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open detections file: " + path);

    DetectionData data;
    std::map<long, std::vector<DefectObservation>> by_frame;
    std::string line;
    long line_no = 0;
    bool schema_seen = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (auto v = header_value(line, "schema")) {
                data.schema = *v;
                schema_seen = true;
                if (data.schema != kDetectionsSchema && data.schema != kGroundTruthSchema &&
                    data.schema != kObservationsSchema)
                    throw std::runtime_error(path + ": unknown schema '" + data.schema + "'");
            } else if (auto d = header_value(line, "detector")) {
                data.detector = *d;
            }
            continue;
        }
        if (!schema_seen)
            throw std::runtime_error(path + ": missing '# schema:' header before records");

        const auto cells = split_csv(line);
        const bool has_confidence = data.schema != kGroundTruthSchema;
        const bool has_ellipse = data.schema == kObservationsSchema;
        const size_t expected = 5 + (has_confidence ? 1 : 0) + (has_ellipse ? 4 : 0);
        if (cells.size() != expected) {
            data.diagnostics.push_back({line_no, "expected " + std::to_string(expected) +
                                                     " columns, got " +
                                                     std::to_string(cells.size())});
            continue;
        }

        DefectObservation obs;
        double conf = 0.0;
        size_t c = 0;
        bool ok = parse_long(cells[c++], obs.frame);
        ok = ok && parse_double(cells[c++], obs.box.x_min);
        ok = ok && parse_double(cells[c++], obs.box.y_min);
        ok = ok && parse_double(cells[c++], obs.box.x_max);
        ok = ok && parse_double(cells[c++], obs.box.y_max);
        if (ok && has_confidence) {
            if (cells[c].empty()) ++c;  // confidence may be absent
            else if (parse_double(cells[c], conf)) {
                obs.confidence = conf;
                ++c;
            } else ok = false;
        }
        if (!ok) {
            data.diagnostics.push_back({line_no, "unparseable numeric field"});
            continue;
        }
        if (obs.frame < 0) {
            data.diagnostics.push_back({line_no, "negative frame number"});
            continue;
        }
        if (!obs.box.valid()) {
            data.diagnostics.push_back({line_no, "invalid box (min must be < max)"});
            continue;
        }
        if (obs.confidence && (*obs.confidence < 0.0 || *obs.confidence > 1.0)) {
            data.diagnostics.push_back({line_no, "confidence outside [0,1]"});
            continue;
        }
        obs.center_x = obs.box.center_x();
        obs.center_y = obs.box.center_y();
        if (has_ellipse) {
            double cx, cy, size;
            ok = parse_double(cells[c], cx) && parse_double(cells[c + 1], cy);
            if (ok && !cells[c + 2].empty()) {
                ok = parse_double(cells[c + 2], size);
                if (ok) obs.size_nm = size;
            }
            const std::string& status = cells[c + 3];
            if (!ok || (status != "ellipse" && status != "fallback")) {
                data.diagnostics.push_back({line_no, "bad ellipse columns"});
                continue;
            }
            obs.center_x = cx;
            obs.center_y = cy;
            obs.size_is_fallback = status == "fallback";
        }
        by_frame[obs.frame].push_back(obs);
    }
    if (!schema_seen)
        throw std::runtime_error(path + ": missing '# schema:' header");

    for (auto& [frame, list] : by_frame) data.frames.push_back(std::move(list));
    return data;
}

DetectionData import_plain_boxes(const std::string& path, bool inclusive_pixel_indices) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open box file: " + path);

    DetectionData data;
    std::map<long, std::vector<DefectObservation>> by_frame;
    std::string line;
    long line_no = 0;
    bool any_confidence = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split_csv(line);
        if (cells.size() != 5 && cells.size() != 6) {
            data.diagnostics.push_back({line_no, "expected 5 or 6 columns"});
            continue;
        }
        DefectObservation obs;
        bool ok = parse_long(cells[0], obs.frame) && parse_double(cells[1], obs.box.x_min) &&
                  parse_double(cells[2], obs.box.y_min) && parse_double(cells[3], obs.box.x_max) &&
                  parse_double(cells[4], obs.box.y_max);
        if (ok && cells.size() == 6 && !cells[5].empty()) {
            double conf;
            ok = parse_double(cells[5], conf);
            if (ok) {
                obs.confidence = conf;
                any_confidence = true;
            }
        }
        if (ok && inclusive_pixel_indices) {
            obs.box.x_max += 1.0;
            obs.box.y_max += 1.0;
        }
        if (!ok || obs.frame < 0 || !obs.box.valid()) {
            data.diagnostics.push_back({line_no, "unparseable or invalid box record"});
            continue;
        }
        obs.center_x = obs.box.center_x();
        obs.center_y = obs.box.center_y();
        by_frame[obs.frame].push_back(obs);
    }
    data.schema = any_confidence ? kDetectionsSchema : kGroundTruthSchema;
    for (auto& [frame, list] : by_frame) data.frames.push_back(std::move(list));
    return data;
}

void write_detections(const std::string& path, const DetectionData& data,
                      const Calibration& cal, const std::string& schema,
                      const HeaderFields& extra) {
    const bool has_confidence = schema != kGroundTruthSchema;
    const bool has_ellipse = schema == kObservationsSchema;

    Table table;
    table.header = standard_header(schema, cal, extra);
    if (!data.detector.empty()) table.header.emplace_back("detector", data.detector);
    table.columns = {"frame", "x_min", "y_min", "x_max", "y_max"};
    if (has_confidence) table.columns.push_back("confidence");
    if (has_ellipse) {
        table.columns.insert(table.columns.end(),
                             {"center_x", "center_y", "size_nm", "fit_status"});
    }

    for (const auto& list : data.frames) {
        for (const auto& obs : list) {
            std::vector<std::string> row{std::to_string(obs.frame), format_sig9(obs.box.x_min),
                                         format_sig9(obs.box.y_min), format_sig9(obs.box.x_max),
                                         format_sig9(obs.box.y_max)};
            if (has_confidence)
                row.push_back(obs.confidence ? format_sig9(*obs.confidence) : std::string());
            if (has_ellipse) {
                row.push_back(format_sig9(obs.center_x));
                row.push_back(format_sig9(obs.center_y));
                row.push_back(obs.size_nm ? format_sig9(*obs.size_nm) : std::string());
                row.push_back(obs.size_is_fallback ? "fallback" : "ellipse");
            }
            table.rows.push_back(std::move(row));
        }
    }
    write_table(path, table, ReportFormat::csv);
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

inline constexpr const char* kTrajectoriesSchema = "looptrack.trajectories.v1";
inline constexpr const char* kDriftSchema = "looptrack.drift.v1";

void write_trajectories(const std::string& path, std::span<const Trajectory> trajectories,
                        const Calibration& cal, const HeaderFields& extra) {
    Table table;
    table.header = standard_header(kTrajectoriesSchema, cal, extra);
    const LifetimeSummary lifetimes = lifetime_stats(trajectories);
    table.header.emplace_back("trajectories", std::to_string(lifetimes.count));
    table.header.emplace_back("mean_lifetime_frames",
                              lifetimes.mean_lifetime_frames
                                  ? format_sig9(*lifetimes.mean_lifetime_frames)
                                  : std::string("nan"));
    table.columns = {"trajectory_id", "frame", "center_x", "center_y", "x_min",
                     "y_min",         "x_max", "y_max",    "size_nm",  "confidence"};
    for (const auto& traj : trajectories) {
        for (const auto& obs : traj.observations) {
            table.rows.push_back({std::to_string(traj.id), std::to_string(obs.frame),
                                  format_sig9(obs.center_x), format_sig9(obs.center_y),
                                  format_sig9(obs.box.x_min), format_sig9(obs.box.y_min),
                                  format_sig9(obs.box.x_max), format_sig9(obs.box.y_max),
                                  obs.size_nm ? format_sig9(*obs.size_nm) : std::string(),
                                  obs.confidence ? format_sig9(*obs.confidence) : std::string()});
        }
    }
    write_table(path, table, ReportFormat::csv);
}

TrajectoryData read_trajectories(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trajectories file: " + path);

    TrajectoryData data;
    std::map<long, Trajectory> by_id;
    std::string line;
    long line_no = 0;
    bool schema_seen = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (auto v = header_value(line, "schema")) {
                schema_seen = true;
                if (*v != kTrajectoriesSchema)
                    throw std::runtime_error(path + ": unknown schema '" + *v + "'");
            }
            continue;
        }
        if (!schema_seen)
            throw std::runtime_error(path + ": missing '# schema:' header before records");

        const auto cells = split_csv(line);
        if (cells.size() != 10) {
            data.diagnostics.push_back({line_no, "expected 10 columns"});
            continue;
        }
        long id;
        DefectObservation obs;
        bool ok = parse_long(cells[0], id) && parse_long(cells[1], obs.frame) &&
                  parse_double(cells[2], obs.center_x) && parse_double(cells[3], obs.center_y) &&
                  parse_double(cells[4], obs.box.x_min) && parse_double(cells[5], obs.box.y_min) &&
                  parse_double(cells[6], obs.box.x_max) && parse_double(cells[7], obs.box.y_max);
        if (ok && !cells[8].empty()) {
            double size;
            ok = parse_double(cells[8], size);
            if (ok) obs.size_nm = size;
        }
        if (ok && !cells[9].empty()) {
            double conf;
            ok = parse_double(cells[9], conf);
            if (ok) obs.confidence = conf;
        }
        if (!ok || !obs.box.valid()) {
            data.diagnostics.push_back({line_no, "unparseable trajectory record"});
            continue;
        }
        by_id[id].observations.push_back(obs);
    }
    if (!schema_seen) throw std::runtime_error(path + ": missing '# schema:' header");

    for (auto& [id, traj] : by_id) {
        traj.id = id;
        std::stable_sort(traj.observations.begin(), traj.observations.end(),
                         [](const auto& a, const auto& b) { return a.frame < b.frame; });
        for (size_t i = 1; i < traj.observations.size(); ++i)
            for (long g = traj.observations[i - 1].frame + 1; g < traj.observations[i].frame; ++g)
                traj.gap_frames.push_back(g);
        data.trajectories.push_back(std::move(traj));
    }
    return data;
}

void write_drift_table(const std::string& path, const DriftTable& drift,
                       const Calibration& cal, const HeaderFields& extra) {
    Table table;
    table.header = standard_header(kDriftSchema, cal, extra);
    table.columns = {"frame", "cumulative_dx_px", "cumulative_dy_px"};
    for (size_t i = 0; i < drift.cumulative.size(); ++i) {
        table.rows.push_back({std::to_string(drift.first_frame + static_cast<long>(i)),
                              format_sig9(drift.cumulative[i][0]),
                              format_sig9(drift.cumulative[i][1])});
    }
    write_table(path, table, ReportFormat::csv);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

void write_metrics_report(const std::string& path, std::span<const ScopedMetrics> rows,
                          ReportFormat format, const Calibration& cal,
                          const HeaderFields& extra) {
    Table table;
    table.header = standard_header("looptrack.metrics.v1", cal, extra);
    table.columns = {"cutoff_iou", "frame", "tp", "fp", "fn", "precision", "recall", "f1"};
    for (const auto& row : rows) {
        const MetricsReport& m = row.report;
        table.rows.push_back({format_sig9(m.cutoff_iou), row.scope, std::to_string(m.tp),
                              std::to_string(m.fp), std::to_string(m.fn),
                              format_sig9(m.precision), format_sig9(m.recall),
                              format_sig9(m.f1)});
    }
    write_table(path, table, format);
}

void write_frame_stats(const std::string& path, std::span<const FrameStats> rows,
                       ReportFormat format, const Calibration& cal, const HeaderFields& extra) {
    Table table;
    table.header = standard_header("looptrack.framestats.v1", cal, extra);
    table.columns = {"frame",      "dpa",          "raw_count",  "corrected_density_cm3",
                     "size_q1_nm", "size_median_nm", "size_q3_nm", "fallback_sizes"};
    for (const auto& s : rows) {
        table.rows.push_back({std::to_string(s.frame), format_sig9(s.dpa),
                              std::to_string(s.raw_count), format_sig9(s.corrected_density_cm3),
                              format_sig9(s.size_q1_nm), format_sig9(s.size_median_nm),
                              format_sig9(s.size_q3_nm), std::to_string(s.fallback_sizes)});
    }
    write_table(path, table, format);
}

void write_growth_curves(const std::string& path, std::span<const GrowthCurve> curves,
                         ReportFormat format, const Calibration& cal,
                         const HeaderFields& extra) {
    Table table;
    table.header = standard_header("looptrack.growth.v1", cal, extra);
    long skipped = 0;
    for (const auto& c : curves) skipped += c.skipped;
    table.header.emplace_back("skipped_missing_size", std::to_string(skipped));
    table.columns = {"trajectory_id", "dpa", "size_nm"};
    for (const auto& c : curves)
        for (const auto& [dpa, size] : c.points)
            table.rows.push_back({std::to_string(c.trajectory_id), format_sig9(dpa),
                                  format_sig9(size)});
    write_table(path, table, format);
}

void write_diffusion_records(const std::string& path, std::span<const DiffusionRecord> rows,
                             ReportFormat format, const Calibration& cal,
                             const HeaderFields& extra) {
    Table table;
    table.header = standard_header("looptrack.diffusion.v1", cal, extra);
    table.columns = {"trajectory_id", "median_size_nm", "lifetime_frames", "d_eff_nm2_per_s"};
    for (const auto& r : rows) {
        table.rows.push_back({std::to_string(r.trajectory_id), format_sig9(r.median_size_nm),
                              std::to_string(r.lifetime_frames),
                              format_sig9(r.d_eff_nm2_per_s)});
    }
    write_table(path, table, format);
}

void write_diffusion_histogram(const std::string& path, std::span<const DiffusionBin> bins,
                               ReportFormat format, const Calibration& cal,
                               const HeaderFields& extra) {
    Table table;
    table.header = standard_header("looptrack.deffhist.v1", cal, extra);
    table.columns = {"bin", "lo_nm", "hi_nm", "count", "mean_d_eff_nm2_per_s",
                     "sem_d_eff_nm2_per_s"};
    for (size_t i = 0; i < bins.size(); ++i) {
        const DiffusionBin& b = bins[i];
        table.rows.push_back({std::to_string(i), format_sig9(b.lo_nm), format_sig9(b.hi_nm),
                              std::to_string(b.count),
                              b.count > 0 ? format_sig9(b.mean_d_eff) : std::string(),
                              b.sem_d_eff ? format_sig9(*b.sem_d_eff) : std::string()});
    }
    write_table(path, table, format);
}

}  // namespace looptrack
