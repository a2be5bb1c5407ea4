#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "firepost/geometry.hpp"

namespace firepost {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb& a, const Rgb& b) = default;
};

/// 8-bit RGB raster, row-major.
class ImageBuffer {
  public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, Rgb fill = Rgb{})
        : width_(width), height_(height), pixels_(checked_size(width, height), fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return pixels_.size(); }

    Rgb& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    const Rgb& at(int x, int y) const {
        return pixels_[static_cast<std::size_t>(y) * width_ + x];
    }

    const std::vector<Rgb>& pixels() const { return pixels_; }
    std::vector<Rgb>& pixels() { return pixels_; }

    friend bool operator==(const ImageBuffer& a, const ImageBuffer& b) = default;

  private:
    static std::size_t checked_size(int width, int height) {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("ImageBuffer: dimensions must be positive");
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<Rgb> pixels_;
};

/// ITU-R BT.601 luma, in [0,255].
inline double luma(const Rgb& p) {
    return 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
}

namespace detail {

inline int ppm_next_token(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comment lines between header fields.
    for (;;) {
        const int c = in.peek();
        if (c == EOF) throw std::runtime_error(path + ": truncated header");
        if (c == '#') {
            std::string comment;
            std::getline(in, comment);
            continue;
        }
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        break;
    }
    int value = 0;
    if (!(in >> value)) throw std::runtime_error(path + ": malformed header field");
    return value;
}

}  // namespace detail

/// Load a binary PPM (P6) or PGM (P5, replicated to 3 channels), maxval 255.
/// Anything else is rejected with the detected format named in the error.
inline ImageBuffer load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");

    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in) throw std::runtime_error(path + ": truncated file");

    const bool p6 = (m0 == 'P' && m1 == '6');
    const bool p5 = (m0 == 'P' && m1 == '5');
    if (!p6 && !p5) {
        std::string fmt;
        if (static_cast<unsigned char>(m0) == 0x89 && m1 == 'P')
            fmt = "PNG";
        else if (static_cast<unsigned char>(m0) == 0xFF &&
                 static_cast<unsigned char>(m1) == 0xD8)
            fmt = "JPEG";
        else
            fmt = std::string("magic '") + m0 + m1 + "'";
        throw std::runtime_error(path + ": unsupported image format (" + fmt +
                                 "); expected binary PPM (P6) or PGM (P5)");
    }

    const int width = detail::ppm_next_token(in, path);
    const int height = detail::ppm_next_token(in, path);
    const int maxval = detail::ppm_next_token(in, path);
    if (width <= 0 || height <= 0)
        throw std::runtime_error(path + ": non-positive dimensions");
    if (maxval != 255)
        throw std::runtime_error(path + ": unsupported maxval " +
                                 std::to_string(maxval) + " (only 255)");
    in.get();  // single whitespace byte after maxval

    const std::size_t n = static_cast<std::size_t>(width) * height;
    ImageBuffer img(width, height);
    if (p6) {
        std::vector<char> raw(n * 3);
        in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size())
            throw std::runtime_error(path + ": truncated pixel data");
        for (std::size_t i = 0; i < n; ++i) {
            img.pixels()[i] = Rgb{static_cast<std::uint8_t>(raw[3 * i]),
                                  static_cast<std::uint8_t>(raw[3 * i + 1]),
                                  static_cast<std::uint8_t>(raw[3 * i + 2])};
        }
    } else {
        std::vector<char> raw(n);
        in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size())
            throw std::runtime_error(path + ": truncated pixel data");
        for (std::size_t i = 0; i < n; ++i) {
            const auto v = static_cast<std::uint8_t>(raw[i]);
            img.pixels()[i] = Rgb{v, v, v};
        }
    }
    return img;
}

inline void save_ppm(const ImageBuffer& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<char> raw;
    raw.reserve(img.pixel_count() * 3);
    for (const Rgb& p : img.pixels()) {
        raw.push_back(static_cast<char>(p.r));
        raw.push_back(static_cast<char>(p.g));
        raw.push_back(static_cast<char>(p.b));
    }
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

/// Pixel rectangle covered by a box: floor the mins, ceil the maxes, clamp
/// into the image, and never collapse below 1x1.
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 1, y1 = 1;  // half-open
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};

inline PixelRect box_to_pixel_rect(const BoundingBox& box, int width, int height) {
    int x0 = static_cast<int>(std::floor(box.x_min));
    int y0 = static_cast<int>(std::floor(box.y_min));
    int x1 = static_cast<int>(std::ceil(box.x_max));
    int y1 = static_cast<int>(std::ceil(box.y_max));
    x0 = std::clamp(x0, 0, width - 1);
    y0 = std::clamp(y0, 0, height - 1);
    x1 = std::clamp(x1, x0 + 1, width);
    y1 = std::clamp(y1, y0 + 1, height);
    return PixelRect{x0, y0, x1, y1};
}

inline ImageBuffer crop(const ImageBuffer& image, const BoundingBox& box) {
    const PixelRect r = box_to_pixel_rect(box, image.width(), image.height());
    ImageBuffer out(r.width(), r.height());
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) out.at(x - r.x0, y - r.y0) = image.at(x, y);
    return out;
}

}  // namespace firepost
