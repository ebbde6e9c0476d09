#pragma once

// Image type (planar RGB, values in [0,1]) plus the four fingerprint-agnostic
// perturbations and the image-quality metrics used for attack reporting.

#include <array>
#include <cmath>
#include <limits>

#include "mfdlab/common.hpp"
#include "mfdlab/numerics.hpp"
#include "mfdlab/tensor.hpp"

namespace mfdlab {

template <typename T>
struct Image {
    std::size_t height = 0, width = 0;
    Tensor<T> data;  // shape {3, height, width}

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), data({3, h, w}) {}

    static constexpr std::size_t kChannels = 3;

    std::size_t pixel_count() const { return height * width; }
    std::size_t value_count() const { return 3 * height * width; }

    T& at(std::size_t c, std::size_t r, std::size_t col) { return data.at(c, r, col); }
    const T& at(std::size_t c, std::size_t r, std::size_t col) const {
        return data.at(c, r, col);
    }

    Tensor<T> channel(std::size_t c) const {
        Tensor<T> out({height, width});
        const T* src = data.data() + c * pixel_count();
        std::copy(src, src + pixel_count(), out.data());
        return out;
    }

    void set_channel(std::size_t c, const Tensor<T>& plane) {
        std::copy(plane.data(), plane.data() + pixel_count(), data.data() + c * pixel_count());
    }

    /// Uniform channel mean; the grayscale used by the extractors.
    Tensor<T> grayscale() const {
        Tensor<T> out({height, width});
        const std::size_t n = pixel_count();
        for (std::size_t i = 0; i < n; ++i)
            out[i] = (data[i] + data[n + i] + data[2 * n + i]) / T(3);
        return out;
    }

    void clamp01() {
        for (auto& v : data.values()) v = std::min(std::max(v, T(0)), T(1));
    }

    bool valid() const {
        if (data.size() != value_count()) return false;
        for (const T& v : data.values())
            if (!(v >= T(0) && v <= T(1))) return false;
        return true;
    }
};

enum class PerturbationKind { Noise, Blur, Jpeg, Resize };

template <typename T>
struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::Noise;
    T parameter = T(0);  // sigma, sigma, quality, scale
};

inline const char* perturbation_name(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::Noise: return "noise";
        case PerturbationKind::Blur: return "blur";
        case PerturbationKind::Jpeg: return "jpeg";
        case PerturbationKind::Resize: return "resize";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Metrics

template <typename T>
double psnr(const Image<T>& a, const Image<T>& b) {
    if (a.height != b.height || a.width != b.width)
        throw ConfigError("psnr: shape mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

template <typename T>
double linf_distance(const Image<T>& a, const Image<T>& b) {
    if (a.height != b.height || a.width != b.width)
        throw ConfigError("linf_distance: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) -
                                 static_cast<double>(b.data[i])));
    return m;
}

// ---------------------------------------------------------------------------
// Perturbations

template <typename T>
Image<T> add_gaussian_noise(const Image<T>& x, T sigma, std::uint64_t seed) {
    if (sigma < T(0)) throw ConfigError("add_gaussian_noise: sigma must be >= 0");
    Image<T> out = x;
    if (sigma == T(0)) return out;
    Rng rng(mix_seed(seed, 0x6e6f6973ULL));
    for (auto& v : out.data.values())
        v += sigma * static_cast<T>(rng.normal());
    out.clamp01();
    return out;
}

template <typename T>
Image<T> gaussian_blur(const Image<T>& x, T sigma, std::size_t kernel_size) {
    if (kernel_size % 2 == 0) throw ConfigError("gaussian_blur: kernel size must be odd");
    const Tensor<T> k = gaussian_kernel(sigma, kernel_size);
    Image<T> out(x.height, x.width);
    for (std::size_t c = 0; c < 3; ++c)
        out.set_channel(c, conv2(x.channel(c), k, Boundary::Reflect));
    out.clamp01();
    return out;
}

namespace detail {

inline const std::array<int, 64>& jpeg_luminance_base() {
    static const std::array<int, 64> t = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    return t;
}

inline const std::array<int, 64>& jpeg_chrominance_base() {
    static const std::array<int, 64> t = {
        17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
        24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
        99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};
    return t;
}

/// Conventional quality scaling: scale = 5000/q below 50, else 200-2q;
/// entries floor((base*scale+50)/100), clamped to >= 1.
inline std::array<int, 64> jpeg_table(const std::array<int, 64>& base, int quality) {
    const int scale = (quality < 50) ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> t{};
    for (std::size_t i = 0; i < 64; ++i)
        t[i] = std::max(1, (base[i] * scale + 50) / 100);
    return t;
}

/// Quantize/dequantize the orthonormal blockwise DCT of one plane
/// (values on the 0..255 scale, level-shifted by -128).
template <typename T>
Tensor<T> quantize_plane(const Tensor<T>& plane, const std::array<int, 64>& table) {
    const std::size_t h = plane.extent(0), w = plane.extent(1);
    Tensor<T> shifted({h, w});
    for (std::size_t i = 0; i < plane.size(); ++i) shifted[i] = plane[i] - T(128);
    Tensor<T> coefs = dct2_blocks(shifted, 8);
    const std::size_t nblocks = coefs.extent(0);
    for (std::size_t b = 0; b < nblocks; ++b)
        for (std::size_t u = 0; u < 8; ++u)
            for (std::size_t v = 0; v < 8; ++v) {
                const T q = static_cast<T>(table[u * 8 + v]);
                T& cv = coefs.at(b, u, v);
                cv = static_cast<T>(std::round(static_cast<double>(cv / q))) * q;
            }
    Tensor<T> rec = idct2_blocks(coefs, h, w);
    for (std::size_t i = 0; i < rec.size(); ++i) rec[i] += T(128);
    return rec;
}

}  // namespace detail

/// JPEG compression modeled as the quantization roundtrip: YCbCr (4:4:4),
/// blockwise DCT, quantize/dequantize with quality-scaled standard tables,
/// inverse. No entropy coding stage.
template <typename T>
Image<T> jpeg_roundtrip(const Image<T>& x, int quality) {
    if (quality < 1 || quality > 100) throw ConfigError("jpeg_roundtrip: quality out of range");
    const std::size_t h = x.height, w = x.width, n = x.pixel_count();
    Tensor<T> yp({h, w}), cb({h, w}), cr({h, w});
    for (std::size_t i = 0; i < n; ++i) {
        const double r = static_cast<double>(x.data[i]) * 255.0;
        const double g = static_cast<double>(x.data[n + i]) * 255.0;
        const double b = static_cast<double>(x.data[2 * n + i]) * 255.0;
        yp[i] = static_cast<T>(0.299 * r + 0.587 * g + 0.114 * b);
        cb[i] = static_cast<T>(-0.168736 * r - 0.331264 * g + 0.5 * b + 128.0);
        cr[i] = static_cast<T>(0.5 * r - 0.418688 * g - 0.081312 * b + 128.0);
    }
    const auto lum = detail::jpeg_table(detail::jpeg_luminance_base(), quality);
    const auto chr = detail::jpeg_table(detail::jpeg_chrominance_base(), quality);
    yp = detail::quantize_plane(yp, lum);
    cb = detail::quantize_plane(cb, chr);
    cr = detail::quantize_plane(cr, chr);
    Image<T> out(h, w);
    for (std::size_t i = 0; i < n; ++i) {
        const double yv = static_cast<double>(yp[i]);
        const double cbv = static_cast<double>(cb[i]) - 128.0;
        const double crv = static_cast<double>(cr[i]) - 128.0;
        out.data[i] = static_cast<T>((yv + 1.402 * crv) / 255.0);
        out.data[n + i] = static_cast<T>((yv - 0.344136 * cbv - 0.714136 * crv) / 255.0);
        out.data[2 * n + i] = static_cast<T>((yv + 1.772 * cbv) / 255.0);
    }
    out.clamp01();
    return out;
}

/// Isotropic bilinear downsample to round(scale * size) followed by bilinear
/// upsample back to the original size.
template <typename T>
Image<T> resize_cycle(const Image<T>& x, T scale) {
    if (!(scale > T(0)) || scale > T(1)) throw ConfigError("resize_cycle: scale must be in (0,1]");
    const auto mid_h = static_cast<std::size_t>(
        std::llround(static_cast<double>(scale) * static_cast<double>(x.height)));
    const auto mid_w = static_cast<std::size_t>(
        std::llround(static_cast<double>(scale) * static_cast<double>(x.width)));
    if (mid_h < 2 || mid_w < 2) throw ConfigError("resize_cycle: intermediate size below 2px");
    Image<T> out(x.height, x.width);
    for (std::size_t c = 0; c < 3; ++c) {
        const Tensor<T> down = resample_bilinear(x.channel(c), mid_h, mid_w);
        out.set_channel(c, resample_bilinear(down, x.height, x.width));
    }
    out.clamp01();
    return out;
}

template <typename T>
Image<T> apply_perturbation(const PerturbationSpec<T>& spec, const Image<T>& x,
                            std::uint64_t seed) {
    switch (spec.kind) {
        case PerturbationKind::Noise: return add_gaussian_noise(x, spec.parameter, seed);
        case PerturbationKind::Blur: return gaussian_blur(x, spec.parameter, 3);
        case PerturbationKind::Jpeg:
            return jpeg_roundtrip(x, static_cast<int>(std::lround(
                                         static_cast<double>(spec.parameter))));
        case PerturbationKind::Resize: return resize_cycle(x, spec.parameter);
    }
    throw ConfigError("apply_perturbation: unknown kind");
}

}  // namespace mfdlab
