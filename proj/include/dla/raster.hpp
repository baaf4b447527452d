#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dla {

// 8-bit grayscale image, row-major, origin top-left.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;

    Raster() = default;
    Raster(int w, int h, uint8_t fill = 255)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

class PngError : public std::runtime_error {
public:
    explicit PngError(const std::string& m) : std::runtime_error(m) {}
};

// Bilinear resample to the given size.
Raster resize_raster(const Raster& img, int out_w, int out_h);

// Output size with the shorter side scaled to `shorter` and the aspect
// ratio kept, shrunk further if the longer side would exceed `long_cap`.
std::pair<int, int> scaled_size(int w, int h, int shorter, int long_cap);

// Deterministic grayscale PNG: filter None, stored deflate blocks.
std::vector<uint8_t> encode_png(const Raster& img);
void write_png(const std::string& path, const Raster& img);

// Reads non-interlaced 8-bit PNGs (gray, gray+alpha, RGB, RGBA; all filter
// types, stored/fixed/dynamic deflate). Color images collapse to luma.
Raster decode_png(const std::vector<uint8_t>& bytes);
Raster read_png(const std::string& path);

} // namespace dla
