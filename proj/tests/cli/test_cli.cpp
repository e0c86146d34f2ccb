#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "looptrack/image_io.hpp"
#include "looptrack/io.hpp"
#include "../support/synthetic.hpp"

using namespace looptrack;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("looptrack_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LOOPTRACK_CLI_PATH) + " " + args + " 2>/dev/null";
    return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// Disk scene: three dark defects drifting rigidly, written as frames plus a
// matching detections file.
void write_scene(const TempDir& dir, const std::string& frames_sub,
                 const std::string& detections_name, int n_frames) {
    fs::create_directories(dir.path / frames_sub);
    DetectionData data;
    data.detector = "fixture";
    const double cx[3] = {20.0, 48.0, 70.0};
    const double cy[3] = {22.0, 40.0, 18.0};
    const double r[3] = {5.0, 7.0, 4.0};
    for (int f = 0; f < n_frames; ++f) {
        GrayImage img(96, 64, 200);
        std::vector<DefectObservation> list;
        for (int i = 0; i < 3; ++i) {
            const double x = cx[i] + 0.8 * f, y = cy[i] + 0.3 * f;
            synth::paint_disk(img, x, y, r[i], 40);
            DefectObservation o;
            o.frame = f;
            o.box = {x - r[i] - 1, y - r[i] - 1, x + r[i] + 1, y + r[i] + 1};
            o.center_x = x;
            o.center_y = y;
            o.confidence = 0.9;
            list.push_back(o);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", f);
        write_gray_image((dir.path / frames_sub / name).string(), img);
        data.frames.push_back(std::move(list));
    }
    write_detections(dir.file(detections_name), data, Calibration{}, kDetectionsSchema);
}

}  // namespace

TEST_CASE("evaluate: perfect predictions and determinism") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 3);
    const std::string metrics1 = dir.file("m1.csv");
    const std::string metrics2 = dir.file("m2.csv");
    REQUIRE(run_cli("evaluate " + dir.file("det.csv") + " " + dir.file("det.csv") + " -o " +
                    metrics1) == 0);
    REQUIRE(run_cli("evaluate " + dir.file("det.csv") + " " + dir.file("det.csv") + " -o " +
                    metrics2) == 0);
    CHECK(slurp(metrics1) == slurp(metrics2));

    // Self-evaluation is perfect at every cutoff.
    const std::string text = slurp(metrics1);
    std::istringstream lines(text);
    std::string line;
    bool saw_rows = false;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        saw_rows = true;
        CHECK(line.substr(line.size() - 2) == ",1");  // f1 column == 1
    }
    CHECK(saw_rows);
    CHECK(text.find("# tie_break:") != std::string::npos);
    // The usual operating point is on the default grid.
    CHECK(text.find("0.15,all") != std::string::npos);
}

TEST_CASE("segment -> track -> analyze pipeline is deterministic across threads") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 4);

    const std::string obs1 = dir.file("obs1.csv"), obs2 = dir.file("obs2.csv");
    REQUIRE(run_cli("--threads 1 segment " + dir.file("frames") + " " + dir.file("det.csv") +
                    " -o " + obs1) == 0);
    REQUIRE(run_cli("--threads 8 segment " + dir.file("frames") + " " + dir.file("det.csv") +
                    " -o " + obs2) == 0);
    CHECK(slurp(obs1) == slurp(obs2));

    // Sizes are ellipse-fitted, not fallbacks.
    CHECK(slurp(obs1).find("# fallback_sizes: 0") != std::string::npos);

    const std::string trk1 = dir.file("trk1.csv"), trk2 = dir.file("trk2.csv");
    REQUIRE(run_cli("track " + obs1 + " -o " + trk1 + " --drift-correct --drift-table " +
                    dir.file("drift1.csv")) == 0);
    REQUIRE(run_cli("track " + obs1 + " -o " + trk2 + " --drift-correct --drift-table " +
                    dir.file("drift2.csv")) == 0);
    CHECK(slurp(trk1) == slurp(trk2));
    CHECK(slurp(dir.file("drift1.csv")) == slurp(dir.file("drift2.csv")));
    CHECK(slurp(trk1).find("# trajectories: 3") != std::string::npos);

    REQUIRE(run_cli("analyze " + trk1 + " -o " + dir.file("analysis1")) == 0);
    REQUIRE(run_cli("analyze " + trk1 + " -o " + dir.file("analysis2")) == 0);
    for (const char* name : {"frame_stats.csv", "growth.csv", "deff_histogram.csv",
                             "diffusion.csv"}) {
        CHECK(slurp((dir.path / "analysis1" / name).string()) ==
              slurp((dir.path / "analysis2" / name).string()));
    }

    // Ellipse-refit centers wobble at the aliasing level as disks drift, so
    // the segmented pipeline only gets near zero after drift correction.
    const std::string diff = slurp((dir.path / "analysis1" / "diffusion.csv").string());
    std::istringstream lines(diff);
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        ++rows;
        const auto last_comma = line.find_last_of(',');
        CHECK(std::stod(line.substr(last_comma + 1)) < 0.01);
    }
    CHECK(rows == 3);
}

TEST_CASE("track --drift-correct cancels rigid translation exactly on box centers") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 5);
    const std::string trk = dir.file("trk.csv");
    REQUIRE(run_cli("track " + dir.file("det.csv") + " -o " + trk + " --drift-correct") == 0);
    const TrajectoryData data = read_trajectories(trk);
    REQUIRE(data.trajectories.size() == 3);
    for (const auto& t : data.trajectories) {
        REQUIRE(t.observations.size() == 5);
        for (size_t i = 1; i < t.observations.size(); ++i) {
            CHECK(std::abs(t.observations[i].center_x - t.observations[0].center_x) < 1e-9);
            CHECK(std::abs(t.observations[i].center_y - t.observations[0].center_y) < 1e-9);
        }
    }
}

TEST_CASE("noise: zero magnitude is byte-identical, seeds reproduce") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 2);

    REQUIRE(run_cli("noise " + dir.file("frames") + " -o " + dir.file("zero") +
                    " --model gaussian --variance 0") == 0);
    for (const auto& f : list_frame_files(dir.file("frames"))) {
        CHECK(slurp(f.path.string()) ==
              slurp((dir.path / "zero" / f.path.filename()).string()));
    }

    REQUIRE(run_cli("--threads 1 noise " + dir.file("frames") + " -o " + dir.file("n1") +
                    " --model saltpepper --amount 0.1 --seed 42") == 0);
    REQUIRE(run_cli("--threads 8 noise " + dir.file("frames") + " -o " + dir.file("n2") +
                    " --model saltpepper --amount 0.1 --seed 42") == 0);
    REQUIRE(run_cli("noise " + dir.file("frames") + " -o " + dir.file("n3") +
                    " --model saltpepper --amount 0.1 --seed 43") == 0);
    for (const auto& f : list_frame_files(dir.file("frames"))) {
        const std::string name = f.path.filename().string();
        CHECK(slurp((dir.path / "n1" / name).string()) == slurp((dir.path / "n2" / name).string()));
        CHECK(slurp((dir.path / "n1" / name).string()) != slurp((dir.path / "n3" / name).string()));
    }

    CHECK(run_cli("noise " + dir.file("frames") + " -o " + dir.file("bad") +
                  " --model saltpepper --amount 1.5") != 0);
}

TEST_CASE("locate finds the fixture defects without a detector") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 2);
    const std::string out = dir.file("located.csv");
    // Diameter must span the largest defect (radius 7).
    REQUIRE(run_cli("locate " + dir.file("frames") + " -o " + out + " --diameter 15") == 0);
    const DetectionData data = read_detections(out);
    CHECK(data.frames.size() == 2);
    for (const auto& frame : data.frames) CHECK(frame.size() == 3);
}

TEST_CASE("evaluate handles frame-set mismatch with a warning, not a failure") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 4);
    // Truth file keeps only frames 0-2.
    DetectionData truth = read_detections(dir.file("det.csv"));
    truth.frames.pop_back();
    write_detections(dir.file("truth.csv"), truth, Calibration{}, kDetectionsSchema);

    const std::string cmd = std::string(LOOPTRACK_CLI_PATH) + " evaluate " +
                            dir.file("det.csv") + " " + dir.file("truth.csv") + " -o " +
                            dir.file("m.csv") + " 2>" + dir.file("stderr.txt");
    REQUIRE(std::system(cmd.c_str()) == 0);
    const std::string err = slurp(dir.file("stderr.txt"));
    CHECK(err.find("warn:") != std::string::npos);
    CHECK(err.find("intersection") != std::string::npos);
    // Intersection is perfect, so pooled row at the lowest cutoff is F1=1.
    CHECK(slurp(dir.file("m.csv")).find("0.05,all,9,0,0,1,1,1") != std::string::npos);

    // Pooled rows equal a recomputation from the summed per-frame counts.
    std::istringstream lines(slurp(dir.file("m.csv")));
    std::string line;
    std::map<std::string, std::array<long, 3>> sums;  // cutoff -> tp,fp,fn
    std::map<std::string, MetricsReport> pooled;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        const char* s = line.c_str();
        char scope[32];
        double cutoff, p, r, f1;
        long tp, fp, fn;
        REQUIRE(std::sscanf(s, "%lf,%31[^,],%ld,%ld,%ld,%lf,%lf,%lf", &cutoff, scope, &tp, &fp,
                            &fn, &p, &r, &f1) == 8);
        const std::string key = std::to_string(cutoff);
        if (std::string(scope) == "all") {
            pooled[key] = metrics_from_counts(tp, fp, fn, cutoff);
            CHECK(pooled[key].f1 == doctest::Approx(f1).epsilon(1e-8));
        } else {
            sums[key][0] += tp;
            sums[key][1] += fp;
            sums[key][2] += fn;
        }
    }
    REQUIRE_FALSE(pooled.empty());
    for (const auto& [key, m] : pooled) {
        CHECK(m.tp == sums[key][0]);
        CHECK(m.fp == sums[key][1]);
        CHECK(m.fn == sums[key][2]);
    }
}

TEST_CASE("import-boxes converts inclusive pixel indices to unit squares") {
    TempDir dir;
    {
        std::ofstream out(dir.file("plain.csv"));
        out << "0,10,20,19,29\n";   // inclusive indices -> [10,20)x[20,30)
        out << "0,5,5,5,5\n";       // single-pixel box
        out << "1,3,4,2,9\n";       // invalid after conversion? x_max+1=3 == x_min -> skip
    }
    REQUIRE(run_cli("import-boxes " + dir.file("plain.csv") + " -o " + dir.file("gt.csv")) == 0);
    const DetectionData data = read_detections(dir.file("gt.csv"));
    CHECK(data.schema == kGroundTruthSchema);
    REQUIRE(data.total_observations() == 2);
    const auto& box = data.frames[0][0].box;
    CHECK(box.x_min == 10.0);
    CHECK(box.x_max == 20.0);
    CHECK(box.y_max == 30.0);
    CHECK(data.frames[0][1].box.area() == doctest::Approx(1.0));
}

TEST_CASE("analyze honors --roi and --bins") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 4);
    const std::string trk = dir.file("trk.csv");
    REQUIRE(run_cli("track " + dir.file("det.csv") + " -o " + trk) == 0);
    // ROI keeps only the defect near x=48..51 (plus drift), y=40ish.
    REQUIRE(run_cli("analyze " + trk + " -o " + dir.file("roi_out") +
                    " --roi 40:60,30:50 --bins 1:21:40") == 0);
    const std::string stats = slurp((dir.path / "roi_out" / "frame_stats.csv").string());
    std::istringstream lines(stats);
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) {
        if (line.empty() || line[0] == '#') continue;
        ++rows;
        CHECK(line.find(",1,") != std::string::npos);  // raw_count column == 1
    }
    CHECK(rows == 4);
    const std::string hist = slurp((dir.path / "roi_out" / "deff_histogram.csv").string());
    CHECK(hist.find("# bins: 1:21:40") != std::string::npos);
    std::istringstream hist_lines(hist);
    int bins = 0;
    while (std::getline(hist_lines, line))
        if (!line.empty() && line[0] != '#') ++bins;
    CHECK(bins == 40);

    REQUIRE(run_cli("analyze " + trk + " -o " + dir.file("json_out") + " --format json") == 0);
    const std::string json_text = slurp((dir.path / "json_out" / "frame_stats.json").string());
    CHECK(json_text.find("\"columns\"") != std::string::npos);
    CHECK(json_text.find("\"rows\"") != std::string::npos);
}

TEST_CASE("track reports oversized subnetworks as a fatal error naming the frame") {
    TempDir dir;
    DetectionData data;
    for (long f = 0; f < 2; ++f) {
        std::vector<DefectObservation> list;
        for (int i = 0; i < 8; ++i) {
            DefectObservation o;
            o.frame = f;
            o.center_x = 10.0 + i + 0.4 * f;
            o.center_y = 10.0;
            o.box = {o.center_x - 1, 9, o.center_x + 1, 11};
            list.push_back(o);
        }
        data.frames.push_back(std::move(list));
    }
    write_detections(dir.file("dense.csv"), data, Calibration{}, kDetectionsSchema);
    const std::string cmd = std::string(LOOPTRACK_CLI_PATH) + " track " + dir.file("dense.csv") +
                            " --max-subnet 6 -o " + dir.file("t.csv") + " 2>" +
                            dir.file("stderr.txt");
    CHECK(std::system(cmd.c_str()) != 0);
    const std::string err = slurp(dir.file("stderr.txt"));
    CHECK(err.find("frame 1") != std::string::npos);
    CHECK(err.find("search-range") != std::string::npos);
}

TEST_CASE("segment flags every detection on uniform frames as fallback") {
    TempDir dir;
    fs::create_directories(dir.path / "flat");
    write_gray_image((dir.path / "flat" / "frame_0000.png").string(), GrayImage(96, 64, 130));
    DetectionData det;
    std::vector<DefectObservation> list;
    for (int i = 0; i < 3; ++i) {
        DefectObservation o;
        o.frame = 0;
        o.box = {10.0 + 25 * i, 10, 25.0 + 25 * i, 25};
        o.center_x = o.box.center_x();
        o.center_y = o.box.center_y();
        o.confidence = 0.8;
        list.push_back(o);
    }
    det.frames.push_back(list);
    write_detections(dir.file("det.csv"), det, Calibration{}, kDetectionsSchema);

    REQUIRE(run_cli("segment " + dir.file("flat") + " " + dir.file("det.csv") + " -o " +
                    dir.file("obs.csv")) == 0);
    const std::string text = slurp(dir.file("obs.csv"));
    CHECK(text.find("# fallback_sizes: 3") != std::string::npos);
    const DetectionData back = read_detections(dir.file("obs.csv"));
    for (const auto& frame : back.frames)
        for (const auto& o : frame) {
            CHECK(o.size_is_fallback);
            REQUIRE(o.size_nm.has_value());
            // Fallback size is the longest box side in nm.
            CHECK(*o.size_nm == doctest::Approx(15.0 / Calibration{}.pixels_per_nm));
        }
}

TEST_CASE("LOOPTRACK_CALIBRATION supplies the default constants") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 2);
    {
        std::ofstream out(dir.file("cal.json"));
        out << R"({"pixels_per_nm": 5.0, "visibility_factor": 2.0})";
    }
    const std::string cmd = "LOOPTRACK_CALIBRATION=" + dir.file("cal.json") + " " +
                            std::string(LOOPTRACK_CLI_PATH) + " evaluate " + dir.file("det.csv") +
                            " " + dir.file("det.csv") + " -o " + dir.file("m.csv") +
                            " >/dev/null 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    const std::string text = slurp(dir.file("m.csv"));
    CHECK(text.find("# pixels_per_nm: 5") != std::string::npos);
    CHECK(text.find("# visibility_factor: 2") != std::string::npos);
}

TEST_CASE("evaluate --nms-iou removes duplicate predictions before matching") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 2);
    // Duplicate every prediction with a slightly lower confidence.
    DetectionData pred = read_detections(dir.file("det.csv"));
    for (auto& frame : pred.frames) {
        const auto originals = frame;
        for (auto o : originals) {
            o.box = o.box.shifted(0.5, 0.5);
            o.confidence = 0.5;
            frame.push_back(o);
        }
    }
    write_detections(dir.file("dup.csv"), pred, Calibration{}, kDetectionsSchema);

    REQUIRE(run_cli("evaluate " + dir.file("dup.csv") + " " + dir.file("det.csv") + " -o " +
                    dir.file("raw.csv")) == 0);
    REQUIRE(run_cli("evaluate " + dir.file("dup.csv") + " " + dir.file("det.csv") +
                    " --nms-iou 0.45 -o " + dir.file("nms.csv")) == 0);
    // Without NMS the duplicates are false positives; with it they vanish.
    CHECK(slurp(dir.file("raw.csv")).find("0.15,all,6,6,0,0.5,1,") != std::string::npos);
    CHECK(slurp(dir.file("nms.csv")).find("0.15,all,6,0,0,1,1,1") != std::string::npos);
}

TEST_CASE("missing frames and bad inputs exit nonzero") {
    TempDir dir;
    write_scene(dir, "frames", "det.csv", 3);
    fs::remove(dir.path / "frames" / "frame_0001.png");
    fs::remove(dir.path / "frames" / "frame_0002.png");
    const std::string cmd = std::string(LOOPTRACK_CLI_PATH) + " segment " + dir.file("frames") +
                            " " + dir.file("det.csv") + " -o " + dir.file("x.csv") + " 2>" +
                            dir.file("stderr.txt");
    CHECK(std::system(cmd.c_str()) != 0);
    const std::string err = slurp(dir.file("stderr.txt"));
    CHECK(err.find("1, 2") != std::string::npos);  // missing indices are listed
    CHECK(run_cli("track " + dir.file("does_not_exist.csv")) != 0);
    CHECK(run_cli("analyze " + dir.file("det.csv")) != 0);  // wrong schema
}
