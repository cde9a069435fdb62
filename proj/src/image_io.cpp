#include "metareg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "metareg/errors.hpp"

namespace metareg {

GrayImage read_png_gray(const std::string& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw IoError("read_png_gray: cannot open '" + path + "': " + img.message);
    img.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("read_png_gray: cannot decode '" + path + "': " + msg);
    }
    GrayImage out;
    out.width = img.width;
    out.height = img.height;
    out.pixels.resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = buf[i] / 255.0;
    return out;
}

void write_png_gray(const std::string& path, std::int64_t width, std::int64_t height,
                    std::span<const double> pixels) {
    if (static_cast<std::int64_t>(pixels.size()) != width * height)
        throw IoError("write_png_gray: " + std::to_string(pixels.size()) + " pixels for " +
                      std::to_string(width) + "x" + std::to_string(height));
    std::vector<png_byte> buf(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double v = std::clamp(pixels[i], 0.0, 1.0);
        buf[i] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("write_png_gray: cannot write '" + path + "': " + img.message);
}

GrayImage resize_bilinear(const GrayImage& src, std::int64_t width, std::int64_t height) {
    if (src.width < 1 || src.height < 1)
        throw IoError("resize_bilinear: empty source image");
    GrayImage out;
    out.width = width;
    out.height = height;
    out.pixels.resize(static_cast<std::size_t>(width * height));
    const double sx = static_cast<double>(src.width) / static_cast<double>(width);
    const double sy = static_cast<double>(src.height) / static_cast<double>(height);
    for (std::int64_t y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
        const auto y0 = static_cast<std::int64_t>(fy);
        const auto y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::int64_t x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
            const auto x0 = static_cast<std::int64_t>(fx);
            const auto x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = src.pixels[y0 * src.width + x0] * (1 - wx) +
                               src.pixels[y0 * src.width + x1] * wx;
            const double bot = src.pixels[y1 * src.width + x0] * (1 - wx) +
                               src.pixels[y1 * src.width + x1] * wx;
            out.pixels[static_cast<std::size_t>(y * width + x)] = top * (1 - wy) + bot * wy;
        }
    }
    return out;
}

}  // namespace metareg
