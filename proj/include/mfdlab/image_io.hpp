#pragma once

// Lossless 8-bit image import/export (binary PPM). Only the CLI touches
// files; the pipeline itself stays in real-valued space.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "mfdlab/image.hpp"

namespace mfdlab {

template <typename T>
void write_ppm(const std::string& path, const Image<T>& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_ppm: cannot open " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    const std::size_t n = img.pixel_count();
    std::string buf;
    buf.reserve(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = static_cast<double>(img.data[c * n + i]);
            const int byte = static_cast<int>(std::lround(std::min(std::max(v, 0.0), 1.0) * 255.0));
            buf.push_back(static_cast<char>(byte));
        }
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("write_ppm: write failed for " + path);
}

template <typename T>
Image<T> read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw DataError("read_ppm: not a binary PPM: " + path);
    auto next_token = [&f, &path]() {
        std::string tok;
        while (f >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(f, rest);
                continue;
            }
            return tok;
        }
        throw DataError("read_ppm: truncated header in " + path);
    };
    const std::size_t w = std::stoul(next_token());
    const std::size_t h = std::stoul(next_token());
    const std::size_t maxval = std::stoul(next_token());
    if (maxval != 255) throw DataError("read_ppm: only 8-bit PPM supported");
    f.get();  // single whitespace after header
    std::string buf(3 * h * w, '\0');
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("read_ppm: truncated pixel data in " + path);
    Image<T> img(h, w);
    const std::size_t n = h * w;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c)
            img.data[c * n + i] =
                static_cast<T>(static_cast<unsigned char>(buf[3 * i + c])) / T(255);
    return img;
}

}  // namespace mfdlab
