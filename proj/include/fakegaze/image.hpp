#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fakegaze/tensor.hpp"

namespace fakegaze {

// 8-bit RGB image, interleaved row-major (the PPM pixel order).
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // width * height * 3 bytes

    static Image create(int width, int height);

    std::uint8_t& at(int x, int y, int c) {
        return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
    }

    bool operator==(const Image& other) const = default;
};

// Binary PPM (P6, maxval 255). encode emits exactly
// "P6\n<w> <h>\n255\n" + raw RGB; decode accepts any well-formed P6 stream
// (header whitespace and '#' comments included) and throws DataError —
// prefixed with `origin` — on bad magic, maxval != 255, malformed header,
// short pixel data, or trailing bytes. decode(encode(x)) == x bit-exactly.
std::string encode_ppm(const Image& img);
Image decode_ppm(const std::string& bytes, const std::string& origin);

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Bilinear resampling with half-pixel centers: source coordinate of output
// pixel x is (x + 0.5) * in/out - 0.5, edge-clamped; channels are rounded to
// nearest. Identity when sizes match; constant images stay constant.
Image bilinear_resize(const Image& img, int out_width, int out_height);

// [3 x H x W] float tensor, channel-planar, values scaled to [0, 1].
Tensor image_to_tensor(const Image& img);

}  // namespace fakegaze
