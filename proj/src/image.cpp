#include "fakegaze/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fakegaze/errors.hpp"

namespace fakegaze {

Image Image::create(int width, int height) {
    if (width < 1 || height < 1) {
        throw ContractError("image dimensions must be positive, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
    Image img;
    img.width = width;
    img.height = height;
    img.pixels.assign(static_cast<std::size_t>(width) * height * 3, 0);
    return img;
}

std::string encode_ppm(const Image& img) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
        throw ContractError("cannot encode malformed image");
    }
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                      "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

namespace {

class PpmHeaderReader {
public:
    PpmHeaderReader(const std::string& bytes, std::size_t start, const std::string& origin)
        : bytes_(bytes), origin_(origin), pos_(start) {}

    // Reads the next whitespace-delimited header token, skipping '#' comments.
    std::string token(const char* what) {
        skip_space_and_comments();
        std::size_t start = pos_;
        while (pos_ < bytes_.size() && !is_space(bytes_[pos_]) && bytes_[pos_] != '#') ++pos_;
        if (pos_ == start) {
            throw DataError(origin_ + ": truncated PPM header while reading " +
                            std::string(what));
        }
        return bytes_.substr(start, pos_ - start);
    }

    int int_token(const char* what) {
        const std::string t = token(what);
        if (t.empty() || t.size() > 9 ||
            !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            throw DataError(origin_ + ": PPM " + std::string(what) + " is not a number: '" + t +
                            "'");
        }
        return std::stoi(t);
    }

    // The header ends with exactly one whitespace byte before the raster.
    void finish_header() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            throw DataError(origin_ + ": PPM header not terminated by whitespace");
        }
        ++pos_;
    }

    std::size_t pos() const { return pos_; }

private:
    static bool is_space(char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

Image decode_ppm(const std::string& bytes, const std::string& origin) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw DataError(origin + ": bad magic (not a binary P6 PPM)");
    }
    PpmHeaderReader r(bytes, 2, origin);
    const int width = r.int_token("width");
    const int height = r.int_token("height");
    const int maxval = r.int_token("maxval");
    if (width < 1 || height < 1) {
        throw DataError(origin + ": non-positive PPM dimensions " + std::to_string(width) + "x" +
                        std::to_string(height));
    }
    if (maxval != 255) {
        throw DataError(origin + ": unsupported PPM maxval " + std::to_string(maxval) +
                        " (only 255)");
    }
    r.finish_header();
    const std::size_t raster_start = r.pos();
    const std::size_t expected = static_cast<std::size_t>(width) * height * 3;
    const std::size_t available = bytes.size() - raster_start;
    if (available < expected) {
        throw DataError(origin + ": short pixel data (" + std::to_string(available) + " of " +
                        std::to_string(expected) + " bytes)");
    }
    if (available > expected) {
        throw DataError(origin + ": " + std::to_string(available - expected) +
                        " trailing bytes after pixel data");
    }
    Image img = Image::create(width, height);
    std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data()) + raster_start, expected,
                img.pixels.begin());
    return img;
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open image file '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_ppm(bytes, path);
}

void write_ppm(const std::string& path, const Image& img) {
    const std::string bytes = encode_ppm(img);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw DataError("failed writing image to '" + path + "'");
}

Image bilinear_resize(const Image& img, int out_width, int out_height) {
    if (out_width < 1 || out_height < 1) {
        throw ContractError("resize target must be positive, got " + std::to_string(out_width) +
                            "x" + std::to_string(out_height));
    }
    if (out_width == img.width && out_height == img.height) return img;
    Image out = Image::create(out_width, out_height);
    const double sx = static_cast<double>(img.width) / out_width;
    const double sy = static_cast<double>(img.height) / out_height;
    for (int y = 0; y < out_height; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        const double ty = fy - y0;
        const int y1 = std::clamp(y0 + 1, 0, img.height - 1);
        y0 = std::clamp(y0, 0, img.height - 1);
        for (int x = 0; x < out_width; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            const double tx = fx - x0;
            const int x1 = std::clamp(x0 + 1, 0, img.width - 1);
            x0 = std::clamp(x0, 0, img.width - 1);
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - tx) * img.at(x0, y0, c) + tx * img.at(x1, y0, c);
                const double bot = (1.0 - tx) * img.at(x0, y1, c) + tx * img.at(x1, y1, c);
                const double v = (1.0 - ty) * top + ty * bot;
                out.at(x, y, c) =
                    static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return out;
}

Tensor image_to_tensor(const Image& img) {
    if (img.width < 1 || img.height < 1) throw ContractError("cannot convert empty image");
    Tensor t({3, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
    float* p = t.data();
    const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::size_t at = static_cast<std::size_t>(y) * img.width + x;
            for (int c = 0; c < 3; ++c) {
                p[c * plane + at] = static_cast<float>(img.at(x, y, c)) / 255.0f;
            }
        }
    }
    return t;
}

}  // namespace fakegaze
