// looptrack — command-line pipeline for defect analytics on in-situ TEM
// frame sequences: detector evaluation, per-defect segmentation, trajectory
// linking, and radiation-physics statistics. Subcommands compose through
// files; every stage is a pure function of (inputs, flags, seed), so reruns
// are byte-identical.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "looptrack/analytics.hpp"
#include "looptrack/calibration.hpp"
#include "looptrack/ellipse.hpp"
#include "looptrack/geometry.hpp"
#include "looptrack/image_io.hpp"
#include "looptrack/io.hpp"
#include "looptrack/linking.hpp"
#include "looptrack/locate.hpp"
#include "looptrack/noise.hpp"
#include "looptrack/parallel.hpp"
#include "looptrack/segment.hpp"

using namespace looptrack;
namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
    std::string calibration_path;
    int threads = 1;
};

Calibration resolve_calibration(const GlobalOptions& opts) {
    if (!opts.calibration_path.empty()) return load_calibration(opts.calibration_path);
    if (const char* env = std::getenv("LOOPTRACK_CALIBRATION"); env && *env)
        return load_calibration(env);
    return Calibration{};
}

void warn(const std::string& message) { std::cerr << "warn: " << message << "\n"; }

std::vector<double> parse_grid(const std::string& spec) {
    // start:stop:step, inclusive of stop up to float fuzz.
    double start, stop, step;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 || step <= 0.0 ||
        stop < start)
        throw CLI::ValidationError("--cutoffs", "expected start:stop:step with step > 0");
    std::vector<double> grid;
    for (int i = 0;; ++i) {
        const double v = start + i * step;
        if (v > stop + 1e-12) break;
        grid.push_back(v);
    }
    return grid;
}

std::map<long, std::vector<DefectObservation>> frames_by_number(const DetectionData& data) {
    std::map<long, std::vector<DefectObservation>> out;
    for (const auto& list : data.frames)
        if (!list.empty()) out[list.front().frame] = list;
    return out;
}

std::string format_grid(const std::vector<double>& grid) {
    std::string out;
    for (size_t i = 0; i < grid.size(); ++i) out += (i ? "," : "") + format_sig9(grid[i]);
    return out;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int run_evaluate(const GlobalOptions& global, const std::string& pred_path,
                 const std::string& truth_path, const std::string& out_path,
                 const std::string& cutoffs_spec, std::optional<double> nms_iou,
                 const std::string& format_name) {
    const Calibration cal = resolve_calibration(global);
    const std::vector<double> cutoffs = parse_grid(cutoffs_spec);
    const ReportFormat format = format_name == "json" ? ReportFormat::json : ReportFormat::csv;

    const DetectionData pred_data = read_detections(pred_path);
    const DetectionData truth_data = read_detections(truth_path);
    for (const auto& d : pred_data.diagnostics)
        warn(pred_path + ":" + std::to_string(d.line) + ": " + d.message);
    for (const auto& d : truth_data.diagnostics)
        warn(truth_path + ":" + std::to_string(d.line) + ": " + d.message);

    auto preds = frames_by_number(pred_data);
    auto truths = frames_by_number(truth_data);

    std::vector<long> common;
    for (const auto& [frame, list] : preds)
        if (truths.count(frame)) common.push_back(frame);
    if (common.size() != preds.size() || common.size() != truths.size())
        warn("frame sets differ; evaluating the intersection (" +
             std::to_string(common.size()) + " frames)");

    if (nms_iou) {
        for (long frame : common) {
            auto& list = preds[frame];
            std::vector<BoundingBox> boxes;
            std::vector<double> scores;
            for (const auto& o : list) {
                boxes.push_back(o.box);
                scores.push_back(o.confidence.value_or(1.0));
            }
            std::vector<DefectObservation> kept;
            for (int idx : nms(boxes, scores, *nms_iou)) kept.push_back(list[idx]);
            std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
                return std::tie(a.center_x, a.center_y) < std::tie(b.center_x, b.center_y);
            });
            list = std::move(kept);
        }
    }

    std::vector<ScopedMetrics> rows;
    for (double cutoff : cutoffs) {
        long tp = 0, fp = 0, fn = 0;
        for (long frame : common) {
            std::vector<BoundingBox> pb, tb;
            for (const auto& o : preds[frame]) pb.push_back(o.box);
            for (const auto& o : truths[frame]) tb.push_back(o.box);
            const MetricsReport m = metrics(greedy_match(pb, tb, cutoff));
            rows.push_back({std::to_string(frame), m});
            tp += m.tp;
            fp += m.fp;
            fn += m.fn;
        }
        rows.push_back({"all", metrics_from_counts(tp, fp, fn, cutoff)});
    }

    HeaderFields extra{{"predictions", pred_path},
                       {"ground_truth", truth_path},
                       {"cutoffs", format_grid(cutoffs)},
                       {"nms_iou", nms_iou ? format_sig9(*nms_iou) : "off"},
                       {"tie_break", "lowest-pred-index-then-truth-index"}};
    write_metrics_report(out_path, rows, format, cal, extra);
    std::cout << "evaluate: " << common.size() << " frames, " << cutoffs.size()
              << " cutoffs -> " << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

int run_segment(const GlobalOptions& global, const std::string& frames_dir,
                const std::string& detections_path, const std::string& out_path, int pad_px,
                double sure_fg_fraction, bool bright_defects) {
    const Calibration cal = resolve_calibration(global);
    DetectionData data = read_detections(detections_path);
    for (const auto& d : data.diagnostics)
        warn(detections_path + ":" + std::to_string(d.line) + ": " + d.message);

    std::map<long, fs::path> frame_files;
    for (const auto& f : list_frame_files(frames_dir)) frame_files[f.frame] = f.path;

    std::string missing;
    for (long frame : data.frame_numbers())
        if (!frame_files.count(frame)) missing += (missing.empty() ? "" : ", ") + std::to_string(frame);
    if (!missing.empty())
        throw std::runtime_error("no frame image for detection frames: " + missing);

    SegmentParams params;
    params.pad_px = pad_px;
    params.sure_fg_fraction = sure_fg_fraction;
    params.bright_defects = bright_defects;

    parallel_for(data.frames.size(), global.threads, [&](size_t fi) {
        auto& list = data.frames[fi];
        if (list.empty()) return;
        const GrayImage frame = read_gray_image(frame_files.at(list.front().frame).string());
        for (auto& obs : list) {
            std::optional<EllipseFit> fit;
            if (const auto seg = segment_defect(frame, obs.box, params)) {
                const auto outline = boundary_points(
                    seg->mask, static_cast<double>(seg->origin_x),
                    static_cast<double>(seg->origin_y));
                fit = fit_ellipse(outline);
            }
            if (fit) {
                obs.center_x = fit->center_x;
                obs.center_y = fit->center_y;
                obs.size_nm = px_to_nm(fit->major_axis, cal);
                obs.size_is_fallback = false;
            } else {
                obs.center_x = obs.box.center_x();
                obs.center_y = obs.box.center_y();
                obs.size_nm = px_to_nm(std::max(obs.box.width(), obs.box.height()), cal);
                obs.size_is_fallback = true;
            }
        }
    });

    long fallbacks = 0, total = 0;
    for (const auto& list : data.frames)
        for (const auto& o : list) {
            ++total;
            if (o.size_is_fallback) ++fallbacks;
        }

    HeaderFields extra{{"frames_dir", frames_dir},
                       {"detections", detections_path},
                       {"pad_px", std::to_string(pad_px)},
                       {"sure_fg_fraction", format_sig9(sure_fg_fraction)},
                       {"polarity", bright_defects ? "bright" : "dark"},
                       {"fallback_sizes", std::to_string(fallbacks)}};
    write_detections(out_path, data, cal, kObservationsSchema, extra);
    std::cout << "segment: " << total << " detections, " << fallbacks << " fallback sizes -> "
              << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// track
// ---------------------------------------------------------------------------

int run_track(const GlobalOptions& global, const std::string& input_path,
              const std::string& out_path, const std::string& drift_path,
              double search_range, int memory, int max_subnet, bool drift_correct) {
    const Calibration cal = resolve_calibration(global);
    const DetectionData data = read_detections(input_path);
    for (const auto& d : data.diagnostics)
        warn(input_path + ":" + std::to_string(d.line) + ": " + d.message);

    LinkParams params;
    params.search_range_px = search_range;
    params.memory_frames = memory;
    params.max_subnet_size = max_subnet;

    std::vector<Trajectory> trajectories;
    try {
        trajectories = link(data.frames, params);
    } catch (const SubnetOverflowError& e) {
        std::cerr << "error: " << e.what()
                  << "; lower --search-range or raise --max-subnet\n";
        return 1;
    }

    const DriftTable drift = estimate_drift(trajectories);
    if (drift_correct) trajectories = apply_drift_correction(trajectories, drift);

    const LifetimeSummary lifetimes = lifetime_stats(trajectories);
    HeaderFields extra{{"input", input_path},
                       {"search_range_px", format_sig9(search_range)},
                       {"memory_frames", std::to_string(memory)},
                       {"max_subnet_size", std::to_string(max_subnet)},
                       {"drift_corrected", drift_correct ? "yes" : "no"}};
    write_trajectories(out_path, trajectories, cal, extra);
    if (!drift_path.empty()) write_drift_table(drift_path, drift, cal, extra);

    std::cout << "track: " << lifetimes.count << " trajectories, mean lifetime "
              << (lifetimes.mean_lifetime_frames ? format_sig9(*lifetimes.mean_lifetime_frames)
                                                 : std::string("n/a"))
              << " frames -> " << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

int run_analyze(const GlobalOptions& global, const std::string& trajectories_path,
                const std::string& out_dir, const std::string& roi_spec,
                const std::string& bins_spec, const std::string& format_name) {
    const Calibration cal = resolve_calibration(global);
    const ReportFormat format = format_name == "json" ? ReportFormat::json : ReportFormat::csv;
    const std::string ext = format == ReportFormat::json ? ".json" : ".csv";

    TrajectoryData data = read_trajectories(trajectories_path);
    for (const auto& d : data.diagnostics)
        warn(trajectories_path + ":" + std::to_string(d.line) + ": " + d.message);

    double bin_lo = 2.0, bin_hi = 18.0;
    int bin_count = 50;
    if (std::sscanf(bins_spec.c_str(), "%lf:%lf:%d", &bin_lo, &bin_hi, &bin_count) != 3 ||
        bin_hi <= bin_lo || bin_count < 1)
        throw CLI::ValidationError("--bins", "expected lo:hi:count");

    HeaderFields extra{{"trajectories", trajectories_path},
                       {"roi", roi_spec.empty() ? "off" : roi_spec},
                       {"bins", bins_spec}};

    if (!roi_spec.empty()) {
        double x0, x1, y0, y1;
        if (std::sscanf(roi_spec.c_str(), "%lf:%lf,%lf:%lf", &x0, &x1, &y0, &y1) != 4)
            throw CLI::ValidationError("--roi", "expected x0:x1,y0:y1");
        std::vector<Trajectory> kept;
        for (auto& t : data.trajectories) {
            Trajectory filtered;
            filtered.id = t.id;
            auto inside = roi_filter(t.observations, x0, x1, y0, y1);
            if (inside.empty()) continue;
            filtered.observations = std::move(inside);
            kept.push_back(std::move(filtered));
        }
        data.trajectories = std::move(kept);
    }
    if (data.trajectories.empty()) warn("no trajectories to analyze; writing header-only outputs");

    // Per-frame stats over all retained observations.
    std::map<long, std::vector<DefectObservation>> by_frame;
    for (const auto& t : data.trajectories)
        for (const auto& o : t.observations) by_frame[o.frame].push_back(o);
    std::vector<std::vector<DefectObservation>> frame_lists;
    for (auto& [frame, list] : by_frame) frame_lists.push_back(std::move(list));
    const std::vector<FrameStats> stats = frame_stats(frame_lists, cal);

    std::vector<GrowthCurve> curves;
    std::vector<DiffusionRecord> records;
    for (const auto& t : data.trajectories) {
        GrowthCurve c = growth_curve(t, cal);
        if (!c.points.empty()) curves.push_back(std::move(c));
        if (auto rec = d_eff(t, cal)) records.push_back(*rec);
    }
    const std::vector<DiffusionBin> bins = bin_diffusion(records, bin_lo, bin_hi, bin_count);

    fs::create_directories(out_dir);
    const std::string stats_path = (fs::path(out_dir) / ("frame_stats" + ext)).string();
    const std::string growth_path = (fs::path(out_dir) / ("growth" + ext)).string();
    const std::string hist_path = (fs::path(out_dir) / ("deff_histogram" + ext)).string();
    const std::string records_path = (fs::path(out_dir) / ("diffusion" + ext)).string();
    write_frame_stats(stats_path, stats, format, cal, extra);
    write_growth_curves(growth_path, curves, format, cal, extra);
    write_diffusion_histogram(hist_path, bins, format, cal, extra);
    write_diffusion_records(records_path, records, format, cal, extra);

    std::cout << "analyze: " << stats.size() << " frames, " << data.trajectories.size()
              << " trajectories, " << records.size() << " diffusion records -> " << out_dir
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// noise
// ---------------------------------------------------------------------------

int run_noise(const GlobalOptions& global, const std::string& frames_dir,
              const std::string& out_dir, const std::string& model_name, double variance,
              double amount, double ratio, double peak, std::uint64_t seed) {
    NoiseModel model = GaussianNoise{variance};
    if (model_name == "saltpepper") model = SaltPepperNoise{amount, ratio};
    else if (model_name == "poisson") model = PoissonNoise{peak};
    else if (model_name != "gaussian")
        throw CLI::ValidationError("--model", "expected gaussian|saltpepper|poisson");

    const auto files = list_frame_files(frames_dir);
    fs::create_directories(out_dir);

    // Per-file seeds derive from the file name, so a frame's output does not
    // depend on which other frames are present.
    parallel_for(files.size(), global.threads, [&](size_t i) {
        const GrayImage img = read_gray_image(files[i].path.string());
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : files[i].path.filename().string()) {
            h ^= c;
            h *= 1099511628211ull;
        }
        const GrayImage noisy = add_noise(img, model, mix_seed(seed, h));
        write_gray_image((fs::path(out_dir) / files[i].path.filename()).string(), noisy);
    });

    std::cout << "noise: " << files.size() << " frames (" << model_name << ", seed " << seed
              << ") -> " << out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// import-boxes
// ---------------------------------------------------------------------------

int run_import(const GlobalOptions& global, const std::string& in_path,
               const std::string& out_path, bool exclusive, const std::string& detector) {
    const Calibration cal = resolve_calibration(global);
    DetectionData data = import_plain_boxes(in_path, !exclusive);
    for (const auto& d : data.diagnostics)
        warn(in_path + ":" + std::to_string(d.line) + ": " + d.message);
    data.detector = detector;
    HeaderFields extra{{"imported_from", in_path},
                       {"pixel_indices", exclusive ? "exclusive" : "inclusive-unit-squares"}};
    write_detections(out_path, data, cal, data.schema, extra);
    std::cout << "import-boxes: " << data.total_observations() << " boxes ("
              << data.schema << ") -> " << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// locate
// ---------------------------------------------------------------------------

int run_locate(const GlobalOptions& global, const std::string& frames_dir,
               const std::string& out_path, int diameter, double noise_scale,
               double percentile, bool bright_features) {
    const Calibration cal = resolve_calibration(global);
    LocateParams params;
    params.feature_diameter_px = diameter;
    params.noise_scale_px = noise_scale;
    params.intensity_percentile = percentile;
    params.bright_features = bright_features;
    params.validate();

    const auto files = list_frame_files(frames_dir);
    DetectionData data;
    data.detector = "looptrack-locate";
    data.frames.resize(files.size());

    parallel_for(files.size(), global.threads, [&](size_t i) {
        const GrayImage frame = read_gray_image(files[i].path.string());
        const double r = diameter / 2.0;
        for (const auto& peak : locate_features(frame, params)) {
            DefectObservation obs;
            obs.frame = files[i].frame;
            obs.center_x = peak.x;
            obs.center_y = peak.y;
            obs.box = {peak.x - r, peak.y - r, peak.x + r, peak.y + r};
            obs.confidence = 1.0;
            data.frames[i].push_back(obs);
        }
    });

    HeaderFields extra{{"frames_dir", frames_dir},
                       {"feature_diameter_px", std::to_string(diameter)},
                       {"noise_scale_px", format_sig9(noise_scale)},
                       {"intensity_percentile", format_sig9(percentile)},
                       {"polarity", bright_features ? "bright" : "dark"}};
    write_detections(out_path, data, cal, kDetectionsSchema, extra);
    std::cout << "locate: " << data.total_observations() << " features in " << files.size()
              << " frames -> " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"defect analytics for in-situ TEM frame sequences"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--calibration", global.calibration_path,
                   "calibration JSON (default: $LOOPTRACK_CALIBRATION or built-in constants)");
    app.add_option("--threads", global.threads, "worker threads for frame-parallel stages")
        ->check(CLI::Range(1, 256));

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score detections against ground truth");
    std::string pred_path, truth_path, eval_out = "metrics.csv";
    std::string cutoffs = "0.05:0.95:0.05", eval_format = "csv";
    std::optional<double> nms_iou;
    evaluate->add_option("predictions", pred_path)->required();
    evaluate->add_option("truth", truth_path)->required();
    evaluate->add_option("-o,--output", eval_out, "metrics report path");
    evaluate->add_option("--cutoffs", cutoffs, "cut-off IoU grid start:stop:step");
    evaluate->add_option("--nms-iou", nms_iou, "suppress overlapping predictions first");
    evaluate->add_option("--format", eval_format)->check(CLI::IsMember({"csv", "json"}));

    // segment
    auto* segment = app.add_subcommand("segment", "fit ellipse sizes to detected defects");
    std::string seg_frames, seg_detections, seg_out = "observations.csv";
    int pad_px = 4;
    double sure_fg = 0.7;
    bool bright_defects = false;
    segment->add_option("frames-dir", seg_frames)->required();
    segment->add_option("detections", seg_detections)->required();
    segment->add_option("-o,--output", seg_out);
    segment->add_option("--pad", pad_px, "crop padding in px")->check(CLI::Range(0, 64));
    segment->add_option("--sure-fg", sure_fg, "distance-transform fraction for sure foreground")
        ->check(CLI::Range(0.0, 1.0));
    segment->add_flag("--bright-defects", bright_defects, "defects brighter than background");

    // track
    auto* track = app.add_subcommand("track", "link observations into trajectories");
    std::string track_in, track_out = "trajectories.csv", drift_out;
    double search_range = 10.0;
    int memory = 3, max_subnet = 12;
    bool drift_correct = false;
    track->add_option("input", track_in, "detections or observations file")->required();
    track->add_option("-o,--output", track_out);
    track->add_option("--drift-table", drift_out, "also write the drift table here");
    track->add_option("--search-range", search_range)->check(CLI::PositiveNumber);
    track->add_option("--memory", memory)->check(CLI::Range(0, 1000));
    track->add_option("--max-subnet", max_subnet)->check(CLI::Range(2, 24));
    track->add_flag("--drift-correct", drift_correct, "subtract ensemble drift");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "physics statistics from trajectories");
    std::string ana_in, ana_out = "analysis", roi, bins = "2:18:50", ana_format = "csv";
    analyze->add_option("trajectories", ana_in)->required();
    analyze->add_option("-o,--output-dir", ana_out);
    analyze->add_option("--roi", roi, "keep observations inside x0:x1,y0:y1");
    analyze->add_option("--bins", bins, "size histogram lo:hi:count");
    analyze->add_option("--format", ana_format)->check(CLI::IsMember({"csv", "json"}));

    // noise
    auto* noise_cmd = app.add_subcommand("noise", "corrupt frames with a noise model");
    std::string noise_frames, noise_out = "noisy", noise_model = "gaussian";
    double variance = 0.01, amount = 0.05, ratio = 0.5, peak = 255.0;
    std::uint64_t seed = 0;
    noise_cmd->add_option("frames-dir", noise_frames)->required();
    noise_cmd->add_option("-o,--output-dir", noise_out);
    noise_cmd->add_option("--model", noise_model)
        ->check(CLI::IsMember({"gaussian", "saltpepper", "poisson"}));
    noise_cmd->add_option("--variance", variance, "gaussian variance, normalized units");
    noise_cmd->add_option("--amount", amount, "salt-pepper corrupted fraction");
    noise_cmd->add_option("--ratio", ratio, "salt fraction of corrupted pixels");
    noise_cmd->add_option("--peak", peak, "poisson peak, larger = less noise");
    noise_cmd->add_option("--seed", seed);

    // import-boxes
    auto* import_cmd =
        app.add_subcommand("import-boxes", "convert a plain box CSV to the detections schema");
    std::string import_in, import_out = "detections.csv", import_detector = "imported";
    bool exclusive_indices = false;
    import_cmd->add_option("boxes", import_in, "headerless frame,x_min,y_min,x_max,y_max[,conf]")
        ->required();
    import_cmd->add_option("-o,--output", import_out);
    import_cmd->add_option("--detector", import_detector, "detector name for the header");
    import_cmd->add_flag("--exclusive", exclusive_indices,
                         "coordinates are already half-open; skip the +1 unit-square conversion");

    // locate
    auto* locate_cmd = app.add_subcommand("locate", "detector-free feature locating");
    std::string loc_frames, loc_out = "detections.csv";
    int diameter = 9;
    double noise_scale = 1.0, percentile = 64.0;
    bool bright_features = false;
    locate_cmd->add_option("frames-dir", loc_frames)->required();
    locate_cmd->add_option("-o,--output", loc_out);
    locate_cmd->add_option("--diameter", diameter, "odd feature diameter in px");
    locate_cmd->add_option("--noise-scale", noise_scale);
    locate_cmd->add_option("--percentile", percentile)->check(CLI::Range(0.0, 100.0));
    locate_cmd->add_flag("--bright-features", bright_features);

    CLI11_PARSE(app, argc, argv);

    try {
        if (evaluate->parsed())
            return run_evaluate(global, pred_path, truth_path, eval_out, cutoffs, nms_iou,
                                eval_format);
        if (segment->parsed())
            return run_segment(global, seg_frames, seg_detections, seg_out, pad_px, sure_fg,
                               bright_defects);
        if (track->parsed())
            return run_track(global, track_in, track_out, drift_out, search_range, memory,
                             max_subnet, drift_correct);
        if (analyze->parsed())
            return run_analyze(global, ana_in, ana_out, roi, bins, ana_format);
        if (noise_cmd->parsed())
            return run_noise(global, noise_frames, noise_out, noise_model, variance, amount,
                             ratio, peak, seed);
        if (import_cmd->parsed())
            return run_import(global, import_in, import_out, exclusive_indices, import_detector);
        if (locate_cmd->parsed())
            return run_locate(global, loc_frames, loc_out, diameter, noise_scale, percentile,
                              bright_features);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
