#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "tacit/error.hpp"

namespace tacit {

/// 8-bit RGB image, interleaved row-major (HWC). This is also the byte
/// layout used inside dataset shards and PPM files.
struct ImageU8 {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;  // height*width*3

    ImageU8() = default;
    ImageU8(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0) {}

    uint8_t& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    uint8_t at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    bool operator==(const ImageU8& o) const {
        return height == o.height && width == o.width && data == o.data;
    }
};

/// Float image in planar channel-major layout (CHW), values nominally [0,1].
template <typename T>
struct Image {
    int height = 0;
    int width = 0;
    std::vector<T> data;  // 3*height*width, channel planes

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, T(0)) {}

    T& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    T at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    bool operator==(const Image& o) const {
        return height == o.height && width == o.width && data == o.data;
    }
};

using ImageF32 = Image<float>;
using ImageF64 = Image<double>;

/// u8 HWC -> float CHW, scaled to [0,1].
template <typename T>
Image<T> to_float(const ImageU8& img) {
    Image<T> out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(c, y, x) = static_cast<T>(img.at(y, x, c)) / T(255);
    return out;
}

/// float CHW -> u8 HWC; values clamped to [0,1] then scaled, round-to-nearest.
template <typename T>
ImageU8 to_u8(const Image<T>& img) {
    ImageU8 out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                T v = std::clamp(img.at(c, y, x), T(0), T(1));
                out.at(y, x, c) = static_cast<uint8_t>(v * T(255) + T(0.5));
            }
    return out;
}

template <typename T>
Image<T> clip01(Image<T> img) {
    for (auto& v : img.data) v = std::clamp(v, T(0), T(1));
    return img;
}

inline void write_ppm(const ImageU8& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(bool(out), ErrorCategory::io_error, "cannot open for writing: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    require(bool(out), ErrorCategory::io_error, "write failed: " + path);
}

inline ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), ErrorCategory::io_error, "cannot open: " + path);

    auto next_token = [&in, &path]() {
        std::string tok;
        for (;;) {
            int ch = in.get();
            require(ch != EOF, ErrorCategory::format_error, "truncated ppm header: " + path);
            if (ch == '#') {  // comment to end of line
                while (ch != EOF && ch != '\n') ch = in.get();
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
    };

    require(next_token() == "P6", ErrorCategory::format_error, "not a binary ppm: " + path);
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    require(w > 0 && h > 0, ErrorCategory::format_error, "bad ppm dimensions: " + path);
    require(maxval == 255, ErrorCategory::format_error, "unsupported ppm maxval: " + path);

    ImageU8 img(h, w);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    require(in.gcount() == static_cast<std::streamsize>(img.data.size()),
            ErrorCategory::format_error, "truncated ppm payload: " + path);
    return img;
}

}  // namespace tacit
