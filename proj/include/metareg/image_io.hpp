#pragma once

// Grayscale PNG read/write used by the dataset loader and the fixture
// generator.  Pixels travel as doubles in [0,1].

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace metareg {

struct GrayImage {
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<double> pixels;  // row-major, [0,1]
};

// Decodes any PNG (any bit depth / color type) to grayscale.
GrayImage read_png_gray(const std::string& path);

void write_png_gray(const std::string& path, std::int64_t width, std::int64_t height,
                    std::span<const double> pixels);

// Bilinear resample to the requested size.
GrayImage resize_bilinear(const GrayImage& src, std::int64_t width, std::int64_t height);

}  // namespace metareg
