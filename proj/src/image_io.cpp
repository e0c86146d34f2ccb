#include "looptrack/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <set>
#include <stdexcept>

#include <png.h>
#include <tiffio.h>

namespace looptrack {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

GrayImage read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open image: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Coerce everything to 8-bit gray.
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    GrayImage img(w, h);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<size_t>(y)] = img.pixels.data() + static_cast<size_t>(y) * w;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const GrayImage& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() +
                                                 static_cast<size_t>(y) * img.width));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

GrayImage read_tiff(const std::string& path) {
    TIFFSetErrorHandler(nullptr);
    TIFFSetWarningHandler(nullptr);
    TIFF* tif = TIFFOpen(path.c_str(), "r");
    if (!tif) throw std::runtime_error("cannot open image: " + path);

    std::uint32_t w = 0, h = 0;
    std::uint16_t bits = 8, samples = 1;
    TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
    TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &samples);
    if (w == 0 || h == 0 || samples != 1 || (bits != 8 && bits != 16)) {
        TIFFClose(tif);
        throw std::runtime_error(path + ": only single-channel 8/16-bit TIFF is supported");
    }

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    std::vector<std::uint8_t> scanline(TIFFScanlineSize(tif));
    for (std::uint32_t y = 0; y < h; ++y) {
        if (TIFFReadScanline(tif, scanline.data(), y) < 0) {
            TIFFClose(tif);
            throw std::runtime_error("failed to decode TIFF: " + path);
        }
        for (std::uint32_t x = 0; x < w; ++x) {
            img.at(static_cast<int>(x), static_cast<int>(y)) =
                bits == 8 ? scanline[x]
                          : static_cast<std::uint8_t>(
                                reinterpret_cast<const std::uint16_t*>(scanline.data())[x] >> 8);
        }
    }
    TIFFClose(tif);
    return img;
}

void write_tiff(const std::string& path, const GrayImage& img) {
    TIFF* tif = TIFFOpen(path.c_str(), "w");
    if (!tif) throw std::runtime_error("cannot open for writing: " + path);
    TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(img.width));
    TIFFSetField(tif, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(img.height));
    TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, 8);
    TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, 1);
    TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
    TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
    TIFFSetField(tif, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
    TIFFSetField(tif, TIFFTAG_ROWSPERSTRIP, 1);
    for (int y = 0; y < img.height; ++y) {
        if (TIFFWriteScanline(tif,
                              const_cast<std::uint8_t*>(img.pixels.data() +
                                                        static_cast<size_t>(y) * img.width),
                              static_cast<std::uint32_t>(y)) < 0) {
            TIFFClose(tif);
            throw std::runtime_error("failed to encode TIFF: " + path);
        }
    }
    TIFFClose(tif);
}

bool is_image_ext(const std::string& ext) {
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

}  // namespace

GrayImage read_gray_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".tif" || ext == ".tiff") return read_tiff(path);
    throw std::runtime_error(path + ": unsupported image extension (need .png/.tif/.tiff)");
}

void write_gray_image(const std::string& path, const GrayImage& img) {
    if (img.width <= 0 || img.height <= 0)
        throw std::invalid_argument("write_gray_image: empty image");
    const std::string ext = lower_ext(path);
    if (ext == ".png") return write_png(path, img);
    if (ext == ".tif" || ext == ".tiff") return write_tiff(path, img);
    throw std::runtime_error(path + ": unsupported image extension (need .png/.tif/.tiff)");
}

std::vector<FrameFile> list_frame_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);

    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (is_image_ext(lower_ext(entry.path()))) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

    std::vector<FrameFile> files;
    std::set<long> seen;
    for (size_t i = 0; i < paths.size(); ++i) {
        const std::string stem = paths[i].stem().string();
        long frame = static_cast<long>(i);
        auto end = stem.find_last_of("0123456789");
        if (end != std::string::npos) {
            size_t begin = end;
            while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
            frame = std::strtol(stem.substr(begin, end - begin + 1).c_str(), nullptr, 10);
        }
        if (!seen.insert(frame).second)
            throw std::runtime_error(dir + ": duplicate frame number " + std::to_string(frame));
        files.push_back({frame, paths[i]});
    }
    return files;
}

}  // namespace looptrack
