#pragma once

// Deterministic tensor math used by the frequency-domain extractors:
// 2-D FFT, blockwise DCT-II, radial/angular spectrum averaging, circular
// autocorrelation, small-kernel convolution and bilinear resampling.
// Forward FFT is unnormalized; the inverse carries 1/(H*W).

#include <cmath>
#include <complex>
#include <vector>

#include "mfdlab/tensor.hpp"

namespace mfdlab {

namespace detail {

inline bool is_pow2(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey on interleaved complex data.
template <typename T>
void fft1_pow2(std::vector<std::complex<T>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u(a[i + k]);
                const std::complex<double> v = std::complex<double>(a[i + k + len / 2]) * w;
                a[i + k] = std::complex<T>(u + v);
                a[i + k + len / 2] = std::complex<T>(u - v);
                w *= wl;
            }
        }
    }
}

// O(n^2) DFT fallback for non power-of-two extents; desk sizes are small.
template <typename T>
void dft1_naive(std::vector<std::complex<T>>& a, bool inverse) {
    const std::size_t n = a.size();
    std::vector<std::complex<T>> out(n);
    const double sign = inverse ? 2.0 : -2.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = sign * M_PI * static_cast<double>(k * t % n) / static_cast<double>(n);
            acc += std::complex<double>(a[t]) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = std::complex<T>(acc);
    }
    a.swap(out);
}

template <typename T>
void fft1(std::vector<std::complex<T>>& a, bool inverse) {
    if (a.size() < 2) return;
    if (is_pow2(a.size()))
        fft1_pow2(a, inverse);
    else
        dft1_naive(a, inverse);
}

}  // namespace detail

template <typename T>
ComplexGrid<T> fft2(const Tensor<T>& x) {
    if (x.rank() != 2 || x.extent(0) < 2 || x.extent(1) < 2)
        throw ConfigError("fft2: input must be at least 2x2");
    if (!x.all_finite()) throw DataError("fft2: non-finite input");
    const std::size_t h = x.extent(0), w = x.extent(1);
    ComplexGrid<T> g(h, w);
    std::vector<std::complex<T>> row(w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) row[c] = std::complex<T>(x.at(r, c), T(0));
        detail::fft1(row, false);
        for (std::size_t c = 0; c < w; ++c) {
            g.re[g.idx(r, c)] = row[c].real();
            g.im[g.idx(r, c)] = row[c].imag();
        }
    }
    std::vector<std::complex<T>> col(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r)
            col[r] = std::complex<T>(g.re[g.idx(r, c)], g.im[g.idx(r, c)]);
        detail::fft1(col, false);
        for (std::size_t r = 0; r < h; ++r) {
            g.re[g.idx(r, c)] = col[r].real();
            g.im[g.idx(r, c)] = col[r].imag();
        }
    }
    return g;
}

/// Inverse transform carrying the 1/(H*W) factor; returns the real part.
template <typename T>
Tensor<T> ifft2(const ComplexGrid<T>& g) {
    const std::size_t h = g.rows, w = g.cols;
    ComplexGrid<T> t = g;
    std::vector<std::complex<T>> row(w), col(h);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c)
            row[c] = std::complex<T>(t.re[t.idx(r, c)], t.im[t.idx(r, c)]);
        detail::fft1(row, true);
        for (std::size_t c = 0; c < w; ++c) {
            t.re[t.idx(r, c)] = row[c].real();
            t.im[t.idx(r, c)] = row[c].imag();
        }
    }
    Tensor<T> out({h, w});
    const T norm = T(1) / static_cast<T>(h * w);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r)
            col[r] = std::complex<T>(t.re[t.idx(r, c)], t.im[t.idx(r, c)]);
        detail::fft1(col, true);
        for (std::size_t r = 0; r < h; ++r) out.at(r, c) = col[r].real() * norm;
    }
    return out;
}

/// Full complex inverse (both parts), for adjoint computations.
template <typename T>
ComplexGrid<T> ifft2_complex(const ComplexGrid<T>& g) {
    const std::size_t h = g.rows, w = g.cols;
    ComplexGrid<T> t = g;
    std::vector<std::complex<T>> row(w), col(h);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c)
            row[c] = std::complex<T>(t.re[t.idx(r, c)], t.im[t.idx(r, c)]);
        detail::fft1(row, true);
        for (std::size_t c = 0; c < w; ++c) {
            t.re[t.idx(r, c)] = row[c].real();
            t.im[t.idx(r, c)] = row[c].imag();
        }
    }
    const T norm = T(1) / static_cast<T>(h * w);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r)
            col[r] = std::complex<T>(t.re[t.idx(r, c)], t.im[t.idx(r, c)]);
        detail::fft1(col, true);
        for (std::size_t r = 0; r < h; ++r) {
            t.re[t.idx(r, c)] = col[r].real() * norm;
            t.im[t.idx(r, c)] = col[r].imag() * norm;
        }
    }
    return t;
}

/// Moves DC to the grid center (even extents: index H/2, W/2).
template <typename V>
void fftshift_inplace(std::size_t h, std::size_t w, std::vector<V>& data) {
    std::vector<V> tmp(data.size());
    const std::size_t sh = h / 2, sw = w / 2;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            tmp[((r + sh) % h) * w + ((c + sw) % w)] = data[r * w + c];
    data.swap(tmp);
}

template <typename T>
Tensor<T> power_spectrum_centered(const Tensor<T>& x) {
    const ComplexGrid<T> g = fft2(x);
    Tensor<T> psd({g.rows, g.cols});
    for (std::size_t i = 0; i < g.size(); ++i) psd[i] = g.magnitude2(i);
    fftshift_inplace(g.rows, g.cols, psd.values());
    return psd;
}

// ---------------------------------------------------------------------------
// Blockwise DCT-II (orthonormal)

namespace detail {
template <typename T>
std::vector<T> dct_basis(std::size_t b) {
    std::vector<T> m(b * b);
    for (std::size_t u = 0; u < b; ++u) {
        const double a = (u == 0) ? std::sqrt(1.0 / static_cast<double>(b))
                                  : std::sqrt(2.0 / static_cast<double>(b));
        for (std::size_t x = 0; x < b; ++x)
            m[u * b + x] = static_cast<T>(
                a * std::cos((2.0 * static_cast<double>(x) + 1.0) * static_cast<double>(u) *
                             M_PI / (2.0 * static_cast<double>(b))));
    }
    return m;
}

inline std::size_t reflect_index(long long i, long long n) {
    // symmetric reflection: -1 -> 0, n -> n-1
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return static_cast<std::size_t>(i);
}
}  // namespace detail

/// Per-block orthonormal 2-D DCT-II over non-overlapping blocks. Inputs not
/// divisible by the block size are reflect-padded to the next multiple;
/// the returned shape is {blocks_y * blocks_x, block, block} with blocks in
/// row-major block order.
template <typename T>
Tensor<T> dct2_blocks(const Tensor<T>& x, std::size_t block) {
    if (block < 2) throw ConfigError("dct2_blocks: block size must be >= 2");
    if (x.rank() != 2) throw ConfigError("dct2_blocks: rank-2 input expected");
    const std::size_t h = x.extent(0), w = x.extent(1);
    const std::size_t nby = (h + block - 1) / block, nbx = (w + block - 1) / block;
    const std::vector<T> basis = detail::dct_basis<T>(block);
    Tensor<T> out({nby * nbx, block, block});
    std::vector<T> blk(block * block), tmp(block * block);
    for (std::size_t by = 0; by < nby; ++by) {
        for (std::size_t bx = 0; bx < nbx; ++bx) {
            for (std::size_t r = 0; r < block; ++r)
                for (std::size_t c = 0; c < block; ++c) {
                    const std::size_t sr = detail::reflect_index(
                        static_cast<long long>(by * block + r), static_cast<long long>(h));
                    const std::size_t sc = detail::reflect_index(
                        static_cast<long long>(bx * block + c), static_cast<long long>(w));
                    blk[r * block + c] = x.at(sr, sc);
                }
            // C = B * X * B^T
            for (std::size_t u = 0; u < block; ++u)
                for (std::size_t c = 0; c < block; ++c) {
                    T s = T(0);
                    for (std::size_t r = 0; r < block; ++r)
                        s += basis[u * block + r] * blk[r * block + c];
                    tmp[u * block + c] = s;
                }
            for (std::size_t u = 0; u < block; ++u)
                for (std::size_t v = 0; v < block; ++v) {
                    T s = T(0);
                    for (std::size_t c = 0; c < block; ++c)
                        s += tmp[u * block + c] * basis[v * block + c];
                    out.at(by * nbx + bx, u, v) = s;
                }
        }
    }
    return out;
}

/// Inverse of dct2_blocks, cropped back to h x w.
template <typename T>
Tensor<T> idct2_blocks(const Tensor<T>& coefs, std::size_t h, std::size_t w) {
    const std::size_t block = coefs.extent(1);
    const std::size_t nby = (h + block - 1) / block, nbx = (w + block - 1) / block;
    const std::vector<T> basis = detail::dct_basis<T>(block);
    Tensor<T> out({h, w});
    std::vector<T> tmp(block * block), blk(block * block);
    for (std::size_t by = 0; by < nby; ++by) {
        for (std::size_t bx = 0; bx < nbx; ++bx) {
            // X = B^T * C * B
            for (std::size_t r = 0; r < block; ++r)
                for (std::size_t v = 0; v < block; ++v) {
                    T s = T(0);
                    for (std::size_t u = 0; u < block; ++u)
                        s += basis[u * block + r] * coefs.at(by * nbx + bx, u, v);
                    tmp[r * block + v] = s;
                }
            for (std::size_t r = 0; r < block; ++r)
                for (std::size_t c = 0; c < block; ++c) {
                    T s = T(0);
                    for (std::size_t v = 0; v < block; ++v)
                        s += tmp[r * block + v] * basis[v * block + c];
                    blk[r * block + c] = s;
                }
            for (std::size_t r = 0; r < block && by * block + r < h; ++r)
                for (std::size_t c = 0; c < block && bx * block + c < w; ++c)
                    out.at(by * block + r, bx * block + c) = blk[r * block + c];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Radial and angular spectrum averaging (input: centered PSD)

/// Precomputed integer-radius binning for an H x W centered grid.
/// Bin r collects pixels whose rounded Euclidean radius equals r; radii at
/// the partially covered corners (>= bin_count) are left out.
struct RadialBins {
    std::size_t rows = 0, cols = 0;
    std::size_t bin_count = 0;
    std::vector<int> bin_of;  // -1 when excluded
    std::vector<std::size_t> counts;

    RadialBins(std::size_t h, std::size_t w) : rows(h), cols(w) {
        const double ch = static_cast<double>(h / 2), cw = static_cast<double>(w / 2);
        const double corner = std::hypot(ch - 1.0, cw - 1.0);
        bin_count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(corner)));
        bin_of.assign(h * w, -1);
        counts.assign(bin_count, 0);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const double d = std::hypot(static_cast<double>(r) - ch,
                                            static_cast<double>(c) - cw);
                const auto bin = static_cast<long long>(std::llround(d));
                if (bin < static_cast<long long>(bin_count)) {
                    bin_of[r * w + c] = static_cast<int>(bin);
                    ++counts[static_cast<std::size_t>(bin)];
                }
            }
    }
};

inline std::size_t radial_bin_count(std::size_t h, std::size_t w) {
    return RadialBins(h, w).bin_count;
}

template <typename T>
std::vector<T> radial_average(const Tensor<T>& psd, const RadialBins& bins) {
    std::vector<T> sums(bins.bin_count, T(0));
    for (std::size_t i = 0; i < psd.size(); ++i)
        if (bins.bin_of[i] >= 0) sums[static_cast<std::size_t>(bins.bin_of[i])] += psd[i];
    for (std::size_t r = 0; r < bins.bin_count; ++r)
        sums[r] /= static_cast<T>(bins.counts[r]);
    return sums;
}

template <typename T>
std::vector<T> radial_average(const Tensor<T>& psd) {
    return radial_average(psd, RadialBins(psd.extent(0), psd.extent(1)));
}

/// Scatter adjoint of radial_average: routes bin cotangents back to pixels.
template <typename T>
void radial_average_adjoint(const std::vector<T>& grad_bins, const RadialBins& bins,
                            Tensor<T>& grad_psd) {
    for (std::size_t i = 0; i < grad_psd.size(); ++i)
        if (bins.bin_of[i] >= 0) {
            const auto b = static_cast<std::size_t>(bins.bin_of[i]);
            grad_psd[i] += grad_bins[b] / static_cast<T>(bins.counts[b]);
        }
}

/// Sector assignment over the half-plane [0, pi); conjugate symmetry folds
/// opposite directions together. The DC pixel carries no direction and is
/// excluded.
struct AngularBins {
    std::size_t rows = 0, cols = 0, sectors = 0;
    std::vector<int> sector_of;  // -1 for DC
    std::vector<std::size_t> counts;

    AngularBins(std::size_t h, std::size_t w, std::size_t n) : rows(h), cols(w), sectors(n) {
        if (n < 1) throw ConfigError("angular_average: need at least one sector");
        const double ch = static_cast<double>(h / 2), cw = static_cast<double>(w / 2);
        sector_of.assign(h * w, -1);
        counts.assign(n, 0);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const double dy = static_cast<double>(r) - ch;
                const double dx = static_cast<double>(c) - cw;
                if (dy == 0.0 && dx == 0.0) continue;
                double a = std::atan2(dy, dx);
                if (a < 0.0) a += M_PI;
                if (a >= M_PI) a -= M_PI;
                auto s = static_cast<std::size_t>(a / M_PI * static_cast<double>(n));
                if (s >= n) s = n - 1;
                sector_of[r * w + c] = static_cast<int>(s);
                ++counts[s];
            }
    }
};

template <typename T>
std::vector<T> angular_average(const Tensor<T>& psd, const AngularBins& bins) {
    std::vector<T> sums(bins.sectors, T(0));
    for (std::size_t i = 0; i < psd.size(); ++i)
        if (bins.sector_of[i] >= 0) sums[static_cast<std::size_t>(bins.sector_of[i])] += psd[i];
    for (std::size_t s = 0; s < bins.sectors; ++s)
        if (bins.counts[s] > 0) sums[s] /= static_cast<T>(bins.counts[s]);
    return sums;
}

template <typename T>
std::vector<T> angular_average(const Tensor<T>& psd, std::size_t n_sectors) {
    return angular_average(psd, AngularBins(psd.extent(0), psd.extent(1), n_sectors));
}

template <typename T>
void angular_average_adjoint(const std::vector<T>& grad_bins, const AngularBins& bins,
                             Tensor<T>& grad_psd) {
    for (std::size_t i = 0; i < grad_psd.size(); ++i)
        if (bins.sector_of[i] >= 0) {
            const auto s = static_cast<std::size_t>(bins.sector_of[i]);
            if (bins.counts[s] > 0) grad_psd[i] += grad_bins[s] / static_cast<T>(bins.counts[s]);
        }
}

// ---------------------------------------------------------------------------
// Circular autocorrelation

/// Normalized circular autocorrelation over lags [-half, half]^2, flattened
/// row-major with the zero lag at the center (value 1). Zero-variance input
/// yields all zeros with center 1.
template <typename T>
std::vector<T> autocorr2(const Tensor<T>& x, std::size_t half) {
    const std::size_t h = x.extent(0), w = x.extent(1);
    const std::size_t side = 2 * half + 1;
    if (side > h || side > w) throw ConfigError("autocorr2: window exceeds grid");
    T mean = T(0);
    for (std::size_t i = 0; i < x.size(); ++i) mean += x[i];
    mean /= static_cast<T>(x.size());
    Tensor<T> centered({h, w});
    for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - mean;
    ComplexGrid<T> f = fft2(centered);
    ComplexGrid<T> p(h, w);
    for (std::size_t i = 0; i < f.size(); ++i) p.re[i] = f.magnitude2(i);
    const Tensor<T> corr = ifft2(p);
    const T lag0 = corr.at(0, 0);
    std::vector<T> out(side * side, T(0));
    out[half * side + half] = T(1);
    if (!(lag0 > T(0))) return out;  // degenerate constant input
    for (long long du = -static_cast<long long>(half); du <= static_cast<long long>(half); ++du)
        for (long long dv = -static_cast<long long>(half); dv <= static_cast<long long>(half);
             ++dv) {
            const std::size_t r = static_cast<std::size_t>((du + static_cast<long long>(h)) %
                                                           static_cast<long long>(h));
            const std::size_t c = static_cast<std::size_t>((dv + static_cast<long long>(w)) %
                                                           static_cast<long long>(w));
            out[static_cast<std::size_t>(du + static_cast<long long>(half)) * side +
                static_cast<std::size_t>(dv + static_cast<long long>(half))] =
                corr.at(r, c) / lag0;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Convolution / kernels / resampling

enum class Boundary { Reflect, Zero };

template <typename T>
Tensor<T> conv2(const Tensor<T>& x, const Tensor<T>& kernel, Boundary mode = Boundary::Reflect) {
    if (kernel.size() == 0) throw ConfigError("conv2: empty kernel");
    if (kernel.extent(0) % 2 == 0 || kernel.extent(1) % 2 == 0)
        throw ConfigError("conv2: kernel extents must be odd");
    const std::size_t h = x.extent(0), w = x.extent(1);
    const long long kh = static_cast<long long>(kernel.extent(0));
    const long long kw = static_cast<long long>(kernel.extent(1));
    const long long oy = kh / 2, ox = kw / 2;
    Tensor<T> out({h, w});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            T s = T(0);
            for (long long i = 0; i < kh; ++i)
                for (long long j = 0; j < kw; ++j) {
                    const long long sr = static_cast<long long>(r) + i - oy;
                    const long long sc = static_cast<long long>(c) + j - ox;
                    T v;
                    if (mode == Boundary::Reflect) {
                        v = x.at(detail::reflect_index(sr, static_cast<long long>(h)),
                                 detail::reflect_index(sc, static_cast<long long>(w)));
                    } else {
                        v = (sr < 0 || sc < 0 || sr >= static_cast<long long>(h) ||
                             sc >= static_cast<long long>(w))
                                ? T(0)
                                : x.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
                    }
                    s += v * kernel.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
                }
            out.at(r, c) = s;
        }
    return out;
}

/// Adjoint of conv2 (scatter form), needed for input gradients.
template <typename T>
Tensor<T> conv2_adjoint(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                        std::size_t h, std::size_t w, Boundary mode = Boundary::Reflect) {
    const long long kh = static_cast<long long>(kernel.extent(0));
    const long long kw = static_cast<long long>(kernel.extent(1));
    const long long oy = kh / 2, ox = kw / 2;
    Tensor<T> grad_in({h, w});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            const T g = grad_out.at(r, c);
            if (g == T(0)) continue;
            for (long long i = 0; i < kh; ++i)
                for (long long j = 0; j < kw; ++j) {
                    const long long sr = static_cast<long long>(r) + i - oy;
                    const long long sc = static_cast<long long>(c) + j - ox;
                    const T kv = kernel.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
                    if (mode == Boundary::Reflect) {
                        grad_in.at(detail::reflect_index(sr, static_cast<long long>(h)),
                                   detail::reflect_index(sc, static_cast<long long>(w))) += g * kv;
                    } else if (sr >= 0 && sc >= 0 && sr < static_cast<long long>(h) &&
                               sc < static_cast<long long>(w)) {
                        grad_in.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc)) +=
                            g * kv;
                    }
                }
        }
    return grad_in;
}

template <typename T>
Tensor<T> gaussian_kernel(T sigma, std::size_t size) {
    if (!(sigma > T(0))) throw ConfigError("gaussian_kernel: sigma must be positive");
    if (size % 2 == 0 || size == 0) throw ConfigError("gaussian_kernel: size must be odd");
    Tensor<T> k({size, size});
    const long long half = static_cast<long long>(size) / 2;
    T sum = T(0);
    for (long long i = -half; i <= half; ++i)
        for (long long j = -half; j <= half; ++j) {
            const T v = static_cast<T>(std::exp(
                -(static_cast<double>(i * i + j * j)) / (2.0 * static_cast<double>(sigma) *
                                                         static_cast<double>(sigma))));
            k.at(static_cast<std::size_t>(i + half), static_cast<std::size_t>(j + half)) = v;
            sum += v;
        }
    k *= T(1) / sum;
    return k;
}

/// Bilinear resampling with half-pixel center alignment; exact on constants.
template <typename T>
Tensor<T> resample_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    if (out_h < 1 || out_w < 1) throw ConfigError("resample_bilinear: nonpositive target size");
    const std::size_t h = x.extent(0), w = x.extent(1);
    Tensor<T> out({out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        double fy = (static_cast<double>(r) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const T wy = static_cast<T>(fy - static_cast<double>(y0));
        for (std::size_t c = 0; c < out_w; ++c) {
            double fx = (static_cast<double>(c) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const T wx = static_cast<T>(fx - static_cast<double>(x0));
            const T top = x.at(y0, x0) * (T(1) - wx) + x.at(y0, x1) * wx;
            const T bot = x.at(y1, x0) * (T(1) - wx) + x.at(y1, x1) * wx;
            out.at(r, c) = top * (T(1) - wy) + bot * wy;
        }
    }
    return out;
}

/// 1-D linear resample of a profile to m points (center-aligned).
template <typename T>
std::vector<T> resample_linear(const std::vector<T>& v, std::size_t m) {
    if (m < 1) throw ConfigError("resample_linear: nonpositive target size");
    const std::size_t n = v.size();
    std::vector<T> out(m);
    const double s = static_cast<double>(n) / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        double f = (static_cast<double>(i) + 0.5) * s - 0.5;
        f = std::min(std::max(f, 0.0), static_cast<double>(n - 1));
        const auto i0 = static_cast<std::size_t>(f);
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        const T t = static_cast<T>(f - static_cast<double>(i0));
        out[i] = v[i0] * (T(1) - t) + v[i1] * t;
    }
    return out;
}

template <typename T>
std::vector<T> resample_linear_adjoint(const std::vector<T>& grad_out, std::size_t n) {
    const std::size_t m = grad_out.size();
    std::vector<T> grad_in(n, T(0));
    const double s = static_cast<double>(n) / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        double f = (static_cast<double>(i) + 0.5) * s - 0.5;
        f = std::min(std::max(f, 0.0), static_cast<double>(n - 1));
        const auto i0 = static_cast<std::size_t>(f);
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        const T t = static_cast<T>(f - static_cast<double>(i0));
        grad_in[i0] += grad_out[i] * (T(1) - t);
        grad_in[i1] += grad_out[i] * t;
    }
    return grad_in;
}

}  // namespace mfdlab
