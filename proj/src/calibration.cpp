#include "looptrack/calibration.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace looptrack {

void Calibration::validate() const {
    if (!(pixels_per_nm > 0.0)) throw std::invalid_argument("pixels_per_nm must be > 0");
    if (image_width_px <= 0 || image_height_px <= 0)
        throw std::invalid_argument("image dimensions must be positive");
    if (!(dose_rate_dpa_per_s > 0.0)) throw std::invalid_argument("dose_rate_dpa_per_s must be > 0");
    if (!(sample_volume_nm3 > 0.0)) throw std::invalid_argument("sample_volume_nm3 must be > 0");
    if (!(visibility_factor >= 1.0)) throw std::invalid_argument("visibility_factor must be >= 1");
    if (!std::isfinite(dpa_intercept) || !std::isfinite(dpa_per_frame))
        throw std::invalid_argument("dpa mapping constants must be finite");
}

double frame_to_dpa(long frame, const Calibration& cal) {
    return cal.dpa_intercept + static_cast<double>(frame) * cal.dpa_per_frame;
}

long dpa_to_frame(double dpa, const Calibration& cal) {
    return std::lround((dpa - cal.dpa_intercept) / cal.dpa_per_frame);
}

double dpa_to_time_s(double dpa, const Calibration& cal) {
    if (dpa < 0.0) throw std::domain_error("dpa must be non-negative");
    return dpa / cal.dose_rate_dpa_per_s;
}

double px_to_nm(double length_px, const Calibration& cal) {
    if (length_px < 0.0) throw std::domain_error("length_px must be non-negative");
    return length_px / cal.pixels_per_nm;
}

double nm_to_px(double length_nm, const Calibration& cal) {
    if (length_nm < 0.0) throw std::domain_error("length_nm must be non-negative");
    return length_nm * cal.pixels_per_nm;
}

Calibration calibration_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("calibration JSON parse error: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("calibration JSON must be an object");

    Calibration cal;
    for (const auto& [key, value] : j.items()) {
        if (key == "pixels_per_nm") cal.pixels_per_nm = value.get<double>();
        else if (key == "image_width_px") cal.image_width_px = value.get<int>();
        else if (key == "image_height_px") cal.image_height_px = value.get<int>();
        else if (key == "dpa_intercept") cal.dpa_intercept = value.get<double>();
        else if (key == "dpa_per_frame") cal.dpa_per_frame = value.get<double>();
        else if (key == "dose_rate_dpa_per_s") cal.dose_rate_dpa_per_s = value.get<double>();
        else if (key == "sample_volume_nm3") cal.sample_volume_nm3 = value.get<double>();
        else if (key == "visibility_factor") cal.visibility_factor = value.get<double>();
        else throw std::invalid_argument("unknown calibration field: " + key);
    }
    cal.validate();
    return cal;
}

Calibration load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open calibration file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return calibration_from_json(buf.str());
}

namespace {

std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string calibration_to_json(const Calibration& cal) {
    std::ostringstream out;
    out << "{\n"
        << "  \"pixels_per_nm\": " << num17(cal.pixels_per_nm) << ",\n"
        << "  \"image_width_px\": " << cal.image_width_px << ",\n"
        << "  \"image_height_px\": " << cal.image_height_px << ",\n"
        << "  \"dpa_intercept\": " << num17(cal.dpa_intercept) << ",\n"
        << "  \"dpa_per_frame\": " << num17(cal.dpa_per_frame) << ",\n"
        << "  \"dose_rate_dpa_per_s\": " << num17(cal.dose_rate_dpa_per_s) << ",\n"
        << "  \"sample_volume_nm3\": " << num17(cal.sample_volume_nm3) << ",\n"
        << "  \"visibility_factor\": " << num17(cal.visibility_factor) << "\n"
        << "}\n";
    return out.str();
}

std::string calibration_hash(const Calibration& cal) {
    const std::string canon = calibration_to_json(cal);
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace looptrack
