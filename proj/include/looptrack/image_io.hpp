#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "looptrack/image.hpp"

namespace looptrack {

/// 8-bit grayscale PNG or TIFF, selected by extension (.png/.tif/.tiff,
/// case-insensitive). PNG inputs in other layouts (16-bit, palette, RGB,
/// alpha) are converted to 8-bit gray on read; TIFF inputs must be
/// single-channel 8- or 16-bit. Throws std::runtime_error on failure.
GrayImage read_gray_image(const std::string& path);

/// Writes exactly the pixel payload, no timestamps or tool tags, so repeated
/// writes of the same image are byte-identical.
void write_gray_image(const std::string& path, const GrayImage& img);

struct FrameFile {
    long frame = 0;
    std::filesystem::path path;
};

/// Image files in `dir`, lexically ordered. The frame number is the last run
/// of digits in the stem (zero padding keeps lexical and numeric order in
/// agreement); files without digits are numbered by position. Duplicate frame
/// numbers are an error.
std::vector<FrameFile> list_frame_files(const std::string& dir);

}  // namespace looptrack
