#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fect {

// Single-channel 8-bit raster, row-major.
struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(std::size_t h, std::size_t w, std::uint8_t fill = 0)
        : height(h), width(w), pixels(h * w, fill) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
    bool in_bounds(long r, long c) const {
        return r >= 0 && c >= 0 && r < static_cast<long>(height) &&
               c < static_cast<long>(width);
    }
};

// Binary mask, 1 = foreground.
struct BinaryMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    BinaryMask() = default;
    BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
        : height(h), width(w), values(h * w, fill) {}

    std::uint8_t& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
    bool in_bounds(long r, long c) const {
        return r >= 0 && c >= 0 && r < static_cast<long>(height) &&
               c < static_cast<long>(width);
    }
    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (auto v : values) n += (v != 0);
        return n;
    }
};

struct PixelCoord {
    long row = 0;
    long col = 0;
    bool operator==(const PixelCoord&) const = default;
};

// One labeled image: raster, epithelial mask, cell centroids, class label.
struct ImageSample {
    std::string id;
    GrayImage image;
    BinaryMask mask;
    std::vector<PixelCoord> centroids;
    int label = 0;
};

// NetPBM binary formats. P5 carries one plane; P6 is accepted and converted
// to gray by integer luminance rounding. maxval above 255 is rejected.
GrayImage parse_netpbm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_p5(const GrayImage& img);

// Reads a P5 file as a mask: any nonzero gray value is foreground.
BinaryMask threshold_to_mask(const GrayImage& img);

GrayImage load_netpbm_file(const std::string& path);
void save_netpbm_file(const std::string& path, const GrayImage& img);

} // namespace fect
