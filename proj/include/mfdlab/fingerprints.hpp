#pragma once

// The extractor registry: one entry per fingerprinting method, with the
// hard extractor, a differentiable soft variant where the method admits one,
// and input-gradient (vector-Jacobian) paths for the differentiable methods.
// Capability flags drive attack-path selection.

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mfdlab/autodiff.hpp"
#include "mfdlab/genbank.hpp"
#include "mfdlab/image.hpp"
#include "mfdlab/numerics.hpp"

namespace mfdlab {

enum class MethodId {
    Saturation,
    Cooccurrence,
    Crossband,
    ManifoldRgb,
    Residual,
    RadialSpectrum,
    Powerlaw,
    DctStats,
    ResidualAutocorr,
    Spectra,
    ManifoldFreq,
    Learned,
    ManifoldLearned,
};

enum class Domain { Rgb, Frequency, Learned };

struct ExtractorDescriptor {
    MethodId id = MethodId::Saturation;
    std::string name;             // stable CLI identifier
    std::string literature_tag;   // method citation ("Durall20", ...)
    Domain domain = Domain::Rgb;
    bool differentiable = false;  // exact input gradients available
    bool soft_approx = false;     // differentiable analytic approximation available
};

inline const std::vector<ExtractorDescriptor>& registry() {
    static const std::vector<ExtractorDescriptor> methods = {
        {MethodId::Saturation, "saturation", "McCloskey18", Domain::Rgb, false, true},
        {MethodId::Cooccurrence, "cooccurrence", "Nataraj19", Domain::Rgb, false, true},
        {MethodId::Crossband, "crossband", "Nowroozi22", Domain::Rgb, false, true},
        {MethodId::ManifoldRgb, "manifold_rgb", "Song24-RGB", Domain::Rgb, false, false},
        {MethodId::Residual, "residual", "Marra19a", Domain::Frequency, false, true},
        {MethodId::RadialSpectrum, "radial_spectrum", "Durall20", Domain::Frequency, false, true},
        {MethodId::Powerlaw, "powerlaw", "Dzanic20", Domain::Frequency, false, true},
        {MethodId::DctStats, "dct_stats", "Giudice21", Domain::Frequency, true, false},
        {MethodId::ResidualAutocorr, "residual_autocorr", "Corvi23-R", Domain::Frequency, true,
         false},
        {MethodId::Spectra, "spectra", "Corvi23-S", Domain::Frequency, true, false},
        {MethodId::ManifoldFreq, "manifold_freq", "Song24-Freq", Domain::Frequency, false, false},
        {MethodId::Learned, "learned", "Wang20", Domain::Learned, true, false},
        {MethodId::ManifoldLearned, "manifold_learned", "Song24-SL", Domain::Learned, false,
         false},
    };
    return methods;
}

inline const ExtractorDescriptor& descriptor(MethodId id) {
    for (const auto& d : registry())
        if (d.id == id) return d;
    throw ConfigError("unknown method id");
}

inline const ExtractorDescriptor& descriptor(const std::string& name) {
    for (const auto& d : registry())
        if (d.name == name) return d;
    throw ConfigError("unknown method: " + name);
}

/// Autocorrelation window scales with image size: half = min(H,W)/8, which
/// reproduces the published 65x65 window at 256x256.
inline std::size_t autocorr_half(std::size_t h, std::size_t w) {
    return std::max<std::size_t>(1, std::min(h, w) / 8);
}

/// Declared output shape for an extractor at the given image size.
inline std::vector<std::size_t> output_shape(MethodId id, std::size_t h, std::size_t w,
                                             std::size_t q_bins, std::size_t feat_dim) {
    switch (id) {
        case MethodId::Saturation: return {4};
        case MethodId::Cooccurrence: return {3, q_bins, q_bins};
        case MethodId::Crossband: return {6, q_bins, q_bins};
        case MethodId::ManifoldRgb: return {3, h, w};
        case MethodId::Residual: return {3, h, w};
        case MethodId::RadialSpectrum: return {radial_bin_count(h, w)};
        case MethodId::Powerlaw: return {3};
        case MethodId::DctStats: return {63};
        case MethodId::ResidualAutocorr: {
            const std::size_t side = 2 * autocorr_half(h, w) + 1;
            return {side * side};
        }
        case MethodId::Spectra: return {144};
        case MethodId::ManifoldFreq: return {h, w};
        case MethodId::Learned: return {feat_dim};
        case MethodId::ManifoldLearned: return {feat_dim};
    }
    throw ConfigError("output_shape: unknown method");
}

// ---------------------------------------------------------------------------
// Shared assets

/// Reference embeddings for the manifold-deviation extractors.
template <typename T>
struct ManifoldRefs {
    std::vector<std::vector<T>> rgb, freq, learned;
};

template <typename T>
std::vector<T> penultimate_features(const Network<T>& net, const Image<T>& x);

template <typename T>
struct ExtractorAssets {
    std::size_t q_bins = 64;          // co-occurrence quantization
    T tau_saturation = T(0.05);       // attack-time soft temperatures
    T tau_cooccurrence = T(0.02);
    ManifoldRefs<T> refs;
    const Network<T>* learned_cnn = nullptr;

    std::size_t feature_dim() const {
        return learned_cnn ? learned_cnn->layers.back().in_features : 512;
    }
};

namespace detail {

template <typename T>
Tensor<T> residual_plane(const Tensor<T>& plane) {
    static thread_local Tensor<T> kernel;
    if (kernel.size() == 0) kernel = gaussian_kernel(T(1), std::size_t(5));
    Tensor<T> blurred = conv2(plane, kernel, Boundary::Reflect);
    Tensor<T> out({plane.extent(0), plane.extent(1)});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = plane[i] - blurred[i];
    return out;
}

template <typename T>
Tensor<T> residual_plane_adjoint(const Tensor<T>& grad) {
    static thread_local Tensor<T> kernel;
    if (kernel.size() == 0) kernel = gaussian_kernel(T(1), std::size_t(5));
    Tensor<T> back = conv2_adjoint(grad, kernel, grad.extent(0), grad.extent(1),
                                   Boundary::Reflect);
    Tensor<T> out({grad.extent(0), grad.extent(1)});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = grad[i] - back[i];
    return out;
}

inline const std::array<std::size_t, 64>& zigzag_order() {
    static const std::array<std::size_t, 64> order = [] {
        std::array<std::size_t, 64> o{};
        std::size_t u = 0, v = 0;
        for (std::size_t k = 0; k < 64; ++k) {
            o[k] = u * 8 + v;
            if ((u + v) % 2 == 0) {  // moving up-right
                if (v == 7)
                    ++u;
                else if (u == 0)
                    ++v;
                else {
                    --u;
                    ++v;
                }
            } else {  // moving down-left
                if (u == 7)
                    ++v;
                else if (v == 0)
                    ++u;
                else {
                    ++u;
                    --v;
                }
            }
        }
        return o;
    }();
    return order;
}

/// Quintic smoothstep ramp: exactly 0 below -1 and 1 above +1, C2-smooth.
template <typename T>
T smooth_ramp(T t) {
    if (t <= T(-1)) return T(0);
    if (t >= T(1)) return T(1);
    const T t2 = t * t;
    return T(0.5) + (T(15) * t - T(10) * t * t2 + T(3) * t2 * t2 * t) / T(16);
}

template <typename T>
T smooth_ramp_deriv(T t) {
    if (t <= T(-1) || t >= T(1)) return T(0);
    const T u = T(1) - t * t;
    return T(15) * u * u / T(16);
}

template <typename T>
std::size_t hard_bin(T v, std::size_t q) {
    const auto b = static_cast<long long>(static_cast<double>(v) * static_cast<double>(q));
    if (b < 0) return 0;
    return std::min<std::size_t>(static_cast<std::size_t>(b), q - 1);
}

/// Soft bin membership around value v: weights over [lo, hi) bin range.
/// Membership in bin i ramps between edges i/q and (i+1)/q with radius tau;
/// the outermost bins keep their tails so the weights sum to one exactly.
template <typename T>
struct SoftBins {
    std::size_t lo = 0, hi = 0;
    std::array<T, 64> w{}, dw{};

    SoftBins(T v, std::size_t q, T tau) {
        const double span = static_cast<double>(tau) * static_cast<double>(q);
        const long long center = static_cast<long long>(static_cast<double>(v) *
                                                        static_cast<double>(q));
        const long long rad = static_cast<long long>(span) + 2;
        lo = static_cast<std::size_t>(std::max<long long>(0, center - rad));
        hi = static_cast<std::size_t>(
            std::min<long long>(static_cast<long long>(q), center + rad + 1));
        if (hi - lo > 64) {  // clamp pathological temperatures
            hi = lo + 64;
        }
        for (std::size_t i = lo; i < hi; ++i) {
            const T e0 = static_cast<T>(i) / static_cast<T>(q);
            const T e1 = static_cast<T>(i + 1) / static_cast<T>(q);
            const T r0 = (i == 0) ? T(1) : smooth_ramp((v - e0) / tau);
            const T r1 = (i + 1 == q) ? T(0) : smooth_ramp((v - e1) / tau);
            w[i - lo] = r0 - r1;
            const T d0 = (i == 0) ? T(0) : smooth_ramp_deriv((v - e0) / tau) / tau;
            const T d1 = (i + 1 == q) ? T(0) : smooth_ramp_deriv((v - e1) / tau) / tau;
            dw[i - lo] = d0 - d1;
        }
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Hard extractors

/// Fractions of under/over-exposed values at one and two 8-bit steps.
template <typename T>
std::vector<T> extract_saturation(const Image<T>& x) {
    const T delta = T(1) / T(255);
    const auto n = static_cast<T>(x.data.size());
    std::vector<T> out(4, T(0));
    for (const T v : x.data.values()) {
        if (v <= delta) out[0] += T(1);
        if (v >= T(1) - delta) out[1] += T(1);
        if (v <= 2 * delta) out[2] += T(1);
        if (v >= T(1) - 2 * delta) out[3] += T(1);
    }
    for (auto& v : out) v /= n;
    return out;
}

/// Per-channel co-occurrence of horizontally adjacent quantized values.
template <typename T>
std::vector<T> extract_cooccurrence(const Image<T>& x, std::size_t q) {
    const std::size_t h = x.height, w = x.width, n = x.pixel_count();
    std::vector<T> out(3 * q * q, T(0));
    const T inv = T(1) / static_cast<T>(h * (w - 1));
    for (std::size_t c = 0; c < 3; ++c) {
        const T* plane = x.data.data() + c * n;
        T* m = out.data() + c * q * q;
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t col = 0; col + 1 < w; ++col) {
                const std::size_t b1 = detail::hard_bin(plane[r * w + col], q);
                const std::size_t b2 = detail::hard_bin(plane[r * w + col + 1], q);
                m[b1 * q + b2] += inv;
            }
    }
    return out;
}

/// Three intra-channel matrices plus three same-pixel cross-channel
/// matrices (R-G, R-B, G-B), each normalized.
template <typename T>
std::vector<T> extract_crossband(const Image<T>& x, std::size_t q) {
    const std::size_t n = x.pixel_count();
    std::vector<T> out(6 * q * q, T(0));
    const std::vector<T> intra = extract_cooccurrence(x, q);
    std::copy(intra.begin(), intra.end(), out.begin());
    const T inv = T(1) / static_cast<T>(n);
    const std::size_t pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (std::size_t k = 0; k < 3; ++k) {
        const T* a = x.data.data() + pairs[k][0] * n;
        const T* b = x.data.data() + pairs[k][1] * n;
        T* m = out.data() + (3 + k) * q * q;
        for (std::size_t i = 0; i < n; ++i)
            m[detail::hard_bin(a[i], q) * q + detail::hard_bin(b[i], q)] += inv;
    }
    return out;
}

/// Image minus its Gaussian-blur denoised version, per channel.
template <typename T>
std::vector<T> extract_residual(const Image<T>& x) {
    std::vector<T> out;
    out.reserve(x.value_count());
    for (std::size_t c = 0; c < 3; ++c) {
        const Tensor<T> r = detail::residual_plane(x.channel(c));
        out.insert(out.end(), r.values().begin(), r.values().end());
    }
    return out;
}

/// log1p-compressed radial average of the grayscale power spectrum.
template <typename T>
std::vector<T> extract_radial_spectrum(const Image<T>& x) {
    const Tensor<T> psd = power_spectrum_centered(x.grayscale());
    std::vector<T> bins = radial_average(psd);
    for (auto& v : bins) v = std::log1p(v);
    return bins;
}

/// Least-squares fit of log S = log a - b log f over the upper half of the
/// radial bins; returns [a, b, rms residual].
template <typename T>
std::array<T, 3> fit_power_law(const std::vector<T>& profile) {
    const std::size_t r = profile.size();
    const std::size_t i0 = std::max<std::size_t>(1, r / 2);
    const std::size_t n = r - i0;
    if (n < 2) throw ConfigError("fit_power_law: too few bins");
    double sx = 0.0, sy = 0.0;
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = std::log(static_cast<double>(i0 + i));
        ys[i] = std::log(std::max(static_cast<double>(profile[i0 + i]), 1e-30));
        sx += xs[i];
        sy += ys[i];
    }
    const double xbar = sx / static_cast<double>(n), ybar = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - xbar) * (xs[i] - xbar);
        sxy += (xs[i] - xbar) * (ys[i] - ybar);
    }
    const double slope = sxy / sxx;
    const double intercept = ybar - slope * xbar;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double resid = ys[i] - (intercept + slope * xs[i]);
        ss += resid * resid;
    }
    return {static_cast<T>(std::exp(intercept)), static_cast<T>(-slope),
            static_cast<T>(std::sqrt(ss / static_cast<double>(n)))};
}

template <typename T>
std::vector<T> extract_powerlaw(const Image<T>& x) {
    const Tensor<T> psd = power_spectrum_centered(x.grayscale());
    const auto fit = fit_power_law(radial_average(psd));
    return {fit[0], fit[1], fit[2]};
}

/// Mean absolute AC coefficient per position over fully covered 8x8 blocks
/// of the grayscale, in zig-zag order (63 values).
template <typename T>
std::vector<T> extract_dct_stats(const Image<T>& x) {
    const Tensor<T> gray = x.grayscale();
    const std::size_t h = x.height, w = x.width;
    const Tensor<T> coefs = dct2_blocks(gray, 8);
    const std::size_t nbx = (w + 7) / 8;
    const std::size_t full_y = h / 8, full_x = w / 8;
    if (full_y == 0 || full_x == 0) throw ConfigError("extract_dct_stats: image below 8x8");
    const auto& zz = detail::zigzag_order();
    std::vector<T> out(63, T(0));
    for (std::size_t by = 0; by < full_y; ++by)
        for (std::size_t bx = 0; bx < full_x; ++bx) {
            const T* blk = coefs.data() + (by * nbx + bx) * 64;
            for (std::size_t j = 1; j < 64; ++j)
                out[j - 1] += std::abs(blk[zz[j]]);
        }
    const T inv = T(1) / static_cast<T>(full_y * full_x);
    for (auto& v : out) v *= inv;
    return out;
}

/// Normalized circular autocorrelation of the channel-averaged residual.
template <typename T>
std::vector<T> extract_residual_autocorr(const Image<T>& x) {
    const Tensor<T> r = detail::residual_plane(x.grayscale());
    return autocorr2(r, autocorr_half(x.height, x.width));
}

/// Radial average resampled to 72 bins concatenated with a 72-sector angular
/// average, both log1p-compressed.
template <typename T>
std::vector<T> extract_spectra(const Image<T>& x) {
    const Tensor<T> psd = power_spectrum_centered(x.grayscale());
    std::vector<T> rad = resample_linear(radial_average(psd), std::size_t(72));
    std::vector<T> ang = angular_average(psd, std::size_t(72));
    std::vector<T> out;
    out.reserve(144);
    for (T v : rad) out.push_back(std::log1p(v));
    for (T v : ang) out.push_back(std::log1p(v));
    return out;
}

// ---------------------------------------------------------------------------
// Manifold deviations and learned features

template <typename T>
std::vector<T> penultimate_features(const Network<T>& net, const Image<T>& x) {
    Tensor<T> batch({1, x.data.size()});
    std::copy(x.data.data(), x.data.data() + x.data.size(), batch.data());
    const auto cache = forward(net, batch);
    const Tensor<T>& feats = cache.inputs.back();  // input of the final dense head
    return feats.values();
}

template <typename T>
std::vector<T> embed_for_domain(Domain domain, const Image<T>& x,
                                const ExtractorAssets<T>& assets) {
    switch (domain) {
        case Domain::Rgb: return x.data.values();
        case Domain::Frequency: {
            const ComplexGrid<T> f = fft2(x.grayscale());
            std::vector<T> mag(f.size());
            for (std::size_t i = 0; i < mag.size(); ++i)
                mag[i] = std::sqrt(f.magnitude2(i));
            return mag;
        }
        case Domain::Learned: {
            if (!assets.learned_cnn)
                throw ConfigError("manifold_learned: no trained network available");
            return penultimate_features(*assets.learned_cnn, x);
        }
    }
    throw ConfigError("embed_for_domain: unknown domain");
}

/// Deviation from the nearest reference embedding (Euclidean, linear scan).
template <typename T>
std::vector<T> extract_manifold(Domain domain, const Image<T>& x,
                                const ExtractorAssets<T>& assets) {
    const std::vector<std::vector<T>>* refs = nullptr;
    switch (domain) {
        case Domain::Rgb: refs = &assets.refs.rgb; break;
        case Domain::Frequency: refs = &assets.refs.freq; break;
        case Domain::Learned: refs = &assets.refs.learned; break;
    }
    if (!refs || refs->empty()) throw ConfigError("extract_manifold: empty reference set");
    const std::vector<T> e = embed_for_domain(domain, x, assets);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < refs->size(); ++r) {
        double d = 0.0;
        const auto& ref = (*refs)[r];
        for (std::size_t i = 0; i < e.size(); ++i) {
            const double diff = static_cast<double>(e[i]) - static_cast<double>(ref[i]);
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = r;
        }
    }
    std::vector<T> out(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) out[i] = e[i] - (*refs)[best][i];
    return out;
}

/// Builds manifold reference sets from dedicated real-proxy samples.
template <typename T>
ManifoldRefs<T> build_manifold_refs(std::uint64_t seed, std::size_t count, std::size_t size,
                                    const Network<T>* learned_cnn) {
    if (count == 0) throw ConfigError("build_manifold_refs: need at least one reference");
    ManifoldRefs<T> refs;
    refs.rgb.resize(count);
    refs.freq.resize(count);
    if (learned_cnn) refs.learned.resize(count);
    ExtractorAssets<T> dummy;
    dummy.learned_cnn = learned_cnn;
    parallel_for(count, [&](std::size_t i) {
        const Image<T> img = sample_real_proxy<T>(mix_seed(seed, 0x726566ULL, i), size);
        refs.rgb[i] = img.data.values();
        refs.freq[i] = embed_for_domain(Domain::Frequency, img, dummy);
        if (learned_cnn) refs.learned[i] = embed_for_domain(Domain::Learned, img, dummy);
    });
    return refs;
}

// ---------------------------------------------------------------------------
// Soft variants (differentiable relaxations)

template <typename T>
std::vector<T> soft_saturation(const Image<T>& x, T tau) {
    if (!(tau > T(0))) throw ConfigError("soft_saturation: tau must be positive");
    const T delta = T(1) / T(255);
    const auto n = static_cast<T>(x.data.size());
    std::vector<T> out(4, T(0));
    for (const T v : x.data.values()) {
        out[0] += detail::smooth_ramp((delta - v) / tau);
        out[1] += detail::smooth_ramp((v - (T(1) - delta)) / tau);
        out[2] += detail::smooth_ramp((2 * delta - v) / tau);
        out[3] += detail::smooth_ramp((v - (T(1) - 2 * delta)) / tau);
    }
    for (auto& v : out) v /= n;
    return out;
}

template <typename T>
Tensor<T> soft_saturation_vjp(const Image<T>& x, T tau, const std::vector<T>& cotangent) {
    const T delta = T(1) / T(255);
    const auto n = static_cast<T>(x.data.size());
    Tensor<T> grad({3, x.height, x.width});
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const T v = x.data[i];
        T g = T(0);
        g -= cotangent[0] * detail::smooth_ramp_deriv((delta - v) / tau) / tau;
        g += cotangent[1] * detail::smooth_ramp_deriv((v - (T(1) - delta)) / tau) / tau;
        g -= cotangent[2] * detail::smooth_ramp_deriv((2 * delta - v) / tau) / tau;
        g += cotangent[3] * detail::smooth_ramp_deriv((v - (T(1) - 2 * delta)) / tau) / tau;
        grad[i] = g / n;
    }
    return grad;
}

template <typename T>
std::vector<T> soft_cooccurrence(const Image<T>& x, std::size_t q, T tau) {
    if (!(tau > T(0))) throw ConfigError("soft_cooccurrence: tau must be positive");
    const std::size_t h = x.height, w = x.width, n = x.pixel_count();
    std::vector<T> out(3 * q * q, T(0));
    const T inv = T(1) / static_cast<T>(h * (w - 1));
    for (std::size_t c = 0; c < 3; ++c) {
        const T* plane = x.data.data() + c * n;
        T* m = out.data() + c * q * q;
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t col = 0; col + 1 < w; ++col) {
                const detail::SoftBins<T> a(plane[r * w + col], q, tau);
                const detail::SoftBins<T> b(plane[r * w + col + 1], q, tau);
                for (std::size_t i = a.lo; i < a.hi; ++i) {
                    const T wa = a.w[i - a.lo] * inv;
                    if (wa == T(0)) continue;
                    for (std::size_t j = b.lo; j < b.hi; ++j)
                        m[i * q + j] += wa * b.w[j - b.lo];
                }
            }
    }
    return out;
}

template <typename T>
Tensor<T> soft_cooccurrence_vjp(const Image<T>& x, std::size_t q, T tau,
                                const std::vector<T>& cotangent) {
    const std::size_t h = x.height, w = x.width, n = x.pixel_count();
    Tensor<T> grad({3, h, w});
    const T inv = T(1) / static_cast<T>(h * (w - 1));
    for (std::size_t c = 0; c < 3; ++c) {
        const T* plane = x.data.data() + c * n;
        const T* g = cotangent.data() + c * q * q;
        T* gp = grad.data() + c * n;
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t col = 0; col + 1 < w; ++col) {
                const detail::SoftBins<T> a(plane[r * w + col], q, tau);
                const detail::SoftBins<T> b(plane[r * w + col + 1], q, tau);
                T d1 = T(0), d2 = T(0);
                for (std::size_t i = a.lo; i < a.hi; ++i)
                    for (std::size_t j = b.lo; j < b.hi; ++j) {
                        const T gij = g[i * q + j];
                        if (gij == T(0)) continue;
                        d1 += gij * a.dw[i - a.lo] * b.w[j - b.lo];
                        d2 += gij * a.w[i - a.lo] * b.dw[j - b.lo];
                    }
                gp[r * w + col] += d1 * inv;
                gp[r * w + col + 1] += d2 * inv;
            }
    }
    return grad;
}

template <typename T>
std::vector<T> soft_crossband(const Image<T>& x, std::size_t q, T tau) {
    const std::size_t n = x.pixel_count();
    std::vector<T> out(6 * q * q, T(0));
    const std::vector<T> intra = soft_cooccurrence(x, q, tau);
    std::copy(intra.begin(), intra.end(), out.begin());
    const T inv = T(1) / static_cast<T>(n);
    const std::size_t pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (std::size_t k = 0; k < 3; ++k) {
        const T* a = x.data.data() + pairs[k][0] * n;
        const T* b = x.data.data() + pairs[k][1] * n;
        T* m = out.data() + (3 + k) * q * q;
        for (std::size_t i = 0; i < n; ++i) {
            const detail::SoftBins<T> wa(a[i], q, tau);
            const detail::SoftBins<T> wb(b[i], q, tau);
            for (std::size_t bi = wa.lo; bi < wa.hi; ++bi) {
                const T v = wa.w[bi - wa.lo] * inv;
                if (v == T(0)) continue;
                for (std::size_t bj = wb.lo; bj < wb.hi; ++bj)
                    m[bi * q + bj] += v * wb.w[bj - wb.lo];
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> soft_crossband_vjp(const Image<T>& x, std::size_t q, T tau,
                             const std::vector<T>& cotangent) {
    const std::size_t n = x.pixel_count();
    const std::vector<T> intra_cot(cotangent.begin(),
                                   cotangent.begin() + static_cast<long>(3 * q * q));
    Tensor<T> grad = soft_cooccurrence_vjp(x, q, tau, intra_cot);
    const T inv = T(1) / static_cast<T>(n);
    const std::size_t pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (std::size_t k = 0; k < 3; ++k) {
        const T* a = x.data.data() + pairs[k][0] * n;
        const T* b = x.data.data() + pairs[k][1] * n;
        const T* g = cotangent.data() + (3 + k) * q * q;
        T* ga = grad.data() + pairs[k][0] * n;
        T* gb = grad.data() + pairs[k][1] * n;
        for (std::size_t i = 0; i < n; ++i) {
            const detail::SoftBins<T> wa(a[i], q, tau);
            const detail::SoftBins<T> wb(b[i], q, tau);
            T da = T(0), db = T(0);
            for (std::size_t bi = wa.lo; bi < wa.hi; ++bi)
                for (std::size_t bj = wb.lo; bj < wb.hi; ++bj) {
                    const T gij = g[bi * q + bj];
                    if (gij == T(0)) continue;
                    da += gij * wa.dw[bi - wa.lo] * wb.w[bj - wb.lo];
                    db += gij * wa.w[bi - wa.lo] * wb.dw[bj - wb.lo];
                }
            ga[i] += da * inv;
            gb[i] += db * inv;
        }
    }
    return grad;
}

/// The residual extractor is already linear in the image; its soft variant
/// is the same map.
template <typename T>
std::vector<T> soft_residual(const Image<T>& x) {
    return extract_residual(x);
}

template <typename T>
Tensor<T> soft_residual_vjp(const Image<T>& x, const std::vector<T>& cotangent) {
    const std::size_t n = x.pixel_count();
    Tensor<T> grad({3, x.height, x.width});
    for (std::size_t c = 0; c < 3; ++c) {
        Tensor<T> gc({x.height, x.width});
        std::copy(cotangent.begin() + static_cast<long>(c * n),
                  cotangent.begin() + static_cast<long>((c + 1) * n), gc.data());
        const Tensor<T> back = detail::residual_plane_adjoint(gc);
        std::copy(back.data(), back.data() + n, grad.data() + c * n);
    }
    return grad;
}

namespace detail {

/// dL/d(gray) for a cotangent on the centered power spectrum, via the
/// adjoint of x -> |DFT(x)|^2.
template <typename T>
Tensor<T> psd_vjp_to_plane(const Tensor<T>& plane, Tensor<T> grad_psd_centered) {
    const std::size_t h = plane.extent(0), w = plane.extent(1);
    // undo the center shift
    std::vector<T>& g = grad_psd_centered.values();
    std::vector<T> unshifted(g.size());
    const std::size_t sh = h / 2, sw = w / 2;
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
            unshifted[r * w + c] = g[((r + sh) % h) * w + ((c + sw) % w)];
    const ComplexGrid<T> f = fft2(plane);
    ComplexGrid<T> prod(h, w);
    for (std::size_t i = 0; i < prod.size(); ++i) {
        prod.re[i] = unshifted[i] * f.re[i];
        prod.im[i] = unshifted[i] * f.im[i];
    }
    const ComplexGrid<T> back = ifft2_complex(prod);
    Tensor<T> grad({h, w});
    const T scale = T(2) * static_cast<T>(h * w);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = scale * back.re[i];
    return grad;
}

/// Spreads a grayscale gradient to the three channels (channel mean).
template <typename T>
Tensor<T> gray_to_image_grad(const Tensor<T>& gray_grad, std::size_t h, std::size_t w) {
    Tensor<T> grad({3, h, w});
    const std::size_t n = h * w;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i) grad[c * n + i] = gray_grad[i] / T(3);
    return grad;
}

}  // namespace detail

/// The radial spectrum is smooth in the image; the soft variant shares the
/// exact computation and exposes the gradient path.
template <typename T>
std::vector<T> soft_radial(const Image<T>& x) {
    return extract_radial_spectrum(x);
}

template <typename T>
Tensor<T> soft_radial_vjp(const Image<T>& x, const std::vector<T>& cotangent) {
    const Tensor<T> gray = x.grayscale();
    const Tensor<T> psd = power_spectrum_centered(gray);
    const RadialBins bins(x.height, x.width);
    const std::vector<T> profile = radial_average(psd, bins);
    std::vector<T> dprofile(cotangent.size());
    for (std::size_t i = 0; i < cotangent.size(); ++i)
        dprofile[i] = cotangent[i] / (T(1) + profile[i]);
    Tensor<T> dpsd({x.height, x.width});
    radial_average_adjoint(dprofile, bins, dpsd);
    const Tensor<T> dgray = detail::psd_vjp_to_plane(gray, std::move(dpsd));
    return detail::gray_to_image_grad(dgray, x.height, x.width);
}

template <typename T>
std::vector<T> soft_powerlaw(const Image<T>& x) {
    return extract_powerlaw(x);
}

template <typename T>
Tensor<T> soft_powerlaw_vjp(const Image<T>& x, const std::vector<T>& cotangent) {
    const Tensor<T> gray = x.grayscale();
    const Tensor<T> psd = power_spectrum_centered(gray);
    const RadialBins bins(x.height, x.width);
    const std::vector<T> profile = radial_average(psd, bins);
    const std::size_t r = profile.size();
    const std::size_t i0 = std::max<std::size_t>(1, r / 2);
    const std::size_t n = r - i0;
    std::vector<double> xs(n), ys(n);
    double sx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = std::log(static_cast<double>(i0 + i));
        ys[i] = std::log(std::max(static_cast<double>(profile[i0 + i]), 1e-30));
        sx += xs[i];
    }
    const double xbar = sx / static_cast<double>(n);
    double sxx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - xbar) * (xs[i] - xbar);
        sy += ys[i];
    }
    const double ybar = sy / static_cast<double>(n);
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) sxy += (xs[i] - xbar) * (ys[i] - ybar);
    const double slope = sxy / sxx, intercept = ybar - slope * xbar;
    const double a = std::exp(intercept);
    std::vector<double> resid(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        resid[i] = ys[i] - (intercept + slope * xs[i]);
        ss += resid[i] * resid[i];
    }
    const double rms = std::sqrt(ss / static_cast<double>(n));

    // cotangent on [a, b, rms] pulled back to the log-profile values
    std::vector<T> dprofile(r, T(0));
    for (std::size_t j = 0; j < n; ++j) {
        const double wj = (xs[j] - xbar) / sxx;        // d slope / d y_j
        const double dcj = 1.0 / static_cast<double>(n) - wj * xbar;  // d intercept / d y_j
        double dyj = static_cast<double>(cotangent[0]) * a * dcj -
                     static_cast<double>(cotangent[1]) * wj;
        if (rms > 1e-15) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dres = (i == j ? 1.0 : 0.0) - dcj - xs[i] * wj;
                acc += resid[i] * dres;
            }
            dyj += static_cast<double>(cotangent[2]) * acc /
                   (static_cast<double>(n) * rms);
        }
        const double sval = std::max(static_cast<double>(profile[i0 + j]), 1e-30);
        dprofile[i0 + j] = static_cast<T>(dyj / sval);
    }
    Tensor<T> dpsd({x.height, x.width});
    radial_average_adjoint(dprofile, bins, dpsd);
    const Tensor<T> dgray = detail::psd_vjp_to_plane(gray, std::move(dpsd));
    return detail::gray_to_image_grad(dgray, x.height, x.width);
}

// ---------------------------------------------------------------------------
// Gradients of the hard differentiable extractors

template <typename T>
Tensor<T> dct_stats_vjp(const Image<T>& x, const std::vector<T>& cotangent) {
    const Tensor<T> gray = x.grayscale();
    const std::size_t h = x.height, w = x.width;
    const Tensor<T> coefs = dct2_blocks(gray, 8);
    const std::size_t nbx = (w + 7) / 8;
    const std::size_t full_y = h / 8, full_x = w / 8;
    const auto& zz = detail::zigzag_order();
    const T inv = T(1) / static_cast<T>(full_y * full_x);
    Tensor<T> dcoefs(coefs.shape());
    for (std::size_t by = 0; by < full_y; ++by)
        for (std::size_t bx = 0; bx < full_x; ++bx) {
            const std::size_t b = by * nbx + bx;
            const T* blk = coefs.data() + b * 64;
            T* dblk = dcoefs.data() + b * 64;
            for (std::size_t j = 1; j < 64; ++j) {
                const T c = blk[zz[j]];
                const T sign = (c > T(0)) ? T(1) : (c < T(0) ? T(-1) : T(0));
                dblk[zz[j]] = sign * cotangent[j - 1] * inv;
            }
        }
    // orthonormal blocks: the adjoint of the DCT is its inverse
    const Tensor<T> dgray = idct2_blocks(dcoefs, h, w);
    return detail::gray_to_image_grad(dgray, h, w);
}

template <typename T>
Tensor<T> residual_autocorr_vjp(const Image<T>& x, const std::vector<T>& cotangent) {
    const std::size_t h = x.height, w = x.width;
    const Tensor<T> gray = x.grayscale();
    const Tensor<T> r = detail::residual_plane(gray);
    const std::size_t half = autocorr_half(h, w);
    const std::size_t side = 2 * half + 1;

    T mean = T(0);
    for (std::size_t i = 0; i < r.size(); ++i) mean += r[i];
    mean /= static_cast<T>(r.size());
    Tensor<T> centered({h, w});
    for (std::size_t i = 0; i < r.size(); ++i) centered[i] = r[i] - mean;
    const ComplexGrid<T> f = fft2(centered);
    ComplexGrid<T> p(h, w);
    for (std::size_t i = 0; i < f.size(); ++i) p.re[i] = f.magnitude2(i);
    const Tensor<T> corr = ifft2(p);
    const T lag0 = corr.at(0, 0);
    if (!(lag0 > T(0))) return Tensor<T>({3, h, w});  // constant input: zero gradient

    // cotangent on normalized window -> cotangent on the full correlation grid
    Tensor<T> dcorr({h, w});
    T dlag0 = T(0);
    for (long long du = -static_cast<long long>(half); du <= static_cast<long long>(half); ++du)
        for (long long dv = -static_cast<long long>(half); dv <= static_cast<long long>(half);
             ++dv) {
            if (du == 0 && dv == 0) continue;  // center pinned to 1
            const T g = cotangent[static_cast<std::size_t>(du + static_cast<long long>(half)) *
                                      side +
                                  static_cast<std::size_t>(dv + static_cast<long long>(half))];
            if (g == T(0)) continue;
            const std::size_t rr = static_cast<std::size_t>(
                (du + static_cast<long long>(h)) % static_cast<long long>(h));
            const std::size_t cc = static_cast<std::size_t>(
                (dv + static_cast<long long>(w)) % static_cast<long long>(w));
            dcorr.at(rr, cc) += g / lag0;
            dlag0 -= g * corr.at(rr, cc) / (lag0 * lag0);
        }
    dcorr.at(0, 0) += dlag0;

    // corr = Re(IFFT(P)): adjoint is dP = Re(FFT(dcorr)) / (H*W)
    const ComplexGrid<T> fd = fft2(dcorr);
    ComplexGrid<T> prod(h, w);
    const T invhw = T(1) / static_cast<T>(h * w);
    for (std::size_t i = 0; i < prod.size(); ++i) {
        const T dp = fd.re[i] * invhw;
        prod.re[i] = dp * f.re[i];
        prod.im[i] = dp * f.im[i];
    }
    const ComplexGrid<T> back = ifft2_complex(prod);
    Tensor<T> dcentered({h, w});
    const T scale = T(2) * static_cast<T>(h * w);
    for (std::size_t i = 0; i < dcentered.size(); ++i) dcentered[i] = scale * back.re[i];

    // mean subtraction, then the residual adjoint, then the channel split
    T gmean = T(0);
    for (std::size_t i = 0; i < dcentered.size(); ++i) gmean += dcentered[i];
    gmean /= static_cast<T>(dcentered.size());
    for (std::size_t i = 0; i < dcentered.size(); ++i) dcentered[i] -= gmean;
    const Tensor<T> dgray = detail::residual_plane_adjoint(dcentered);
    return detail::gray_to_image_grad(dgray, h, w);
}

template <typename T>
Tensor<T> spectra_vjp(const Image<T>& x, const std::vector<T>& cotangent) {
    const Tensor<T> gray = x.grayscale();
    const Tensor<T> psd = power_spectrum_centered(gray);
    const RadialBins rb(x.height, x.width);
    const AngularBins ab(x.height, x.width, 72);
    const std::vector<T> rad_full = radial_average(psd, rb);
    const std::vector<T> rad72 = resample_linear(rad_full, std::size_t(72));
    const std::vector<T> ang = angular_average(psd, ab);

    std::vector<T> drad72(72), dang(72);
    for (std::size_t i = 0; i < 72; ++i) {
        drad72[i] = cotangent[i] / (T(1) + rad72[i]);
        dang[i] = cotangent[72 + i] / (T(1) + ang[i]);
    }
    const std::vector<T> drad_full = resample_linear_adjoint(drad72, rad_full.size());
    Tensor<T> dpsd({x.height, x.width});
    radial_average_adjoint(drad_full, rb, dpsd);
    angular_average_adjoint(dang, ab, dpsd);
    const Tensor<T> dgray = detail::psd_vjp_to_plane(gray, std::move(dpsd));
    return detail::gray_to_image_grad(dgray, x.height, x.width);
}

// ---------------------------------------------------------------------------
// Unified dispatch

/// Hard extraction for any registered method.
template <typename T>
std::vector<T> extract(MethodId id, const Image<T>& x, const ExtractorAssets<T>& assets) {
    if (!x.data.all_finite()) throw DataError("extract: non-finite image");
    switch (id) {
        case MethodId::Saturation: return extract_saturation(x);
        case MethodId::Cooccurrence: return extract_cooccurrence(x, assets.q_bins);
        case MethodId::Crossband: return extract_crossband(x, assets.q_bins);
        case MethodId::ManifoldRgb: return extract_manifold(Domain::Rgb, x, assets);
        case MethodId::Residual: return extract_residual(x);
        case MethodId::RadialSpectrum: return extract_radial_spectrum(x);
        case MethodId::Powerlaw: return extract_powerlaw(x);
        case MethodId::DctStats: return extract_dct_stats(x);
        case MethodId::ResidualAutocorr: return extract_residual_autocorr(x);
        case MethodId::Spectra: return extract_spectra(x);
        case MethodId::ManifoldFreq: return extract_manifold(Domain::Frequency, x, assets);
        case MethodId::Learned: {
            if (!assets.learned_cnn) throw ConfigError("learned: no trained network");
            return penultimate_features(*assets.learned_cnn, x);
        }
        case MethodId::ManifoldLearned: return extract_manifold(Domain::Learned, x, assets);
    }
    throw ConfigError("extract: unknown method");
}

/// Soft extraction; only valid for methods whose descriptor has soft_approx.
template <typename T>
std::vector<T> extract_soft(MethodId id, const Image<T>& x, const ExtractorAssets<T>& assets) {
    switch (id) {
        case MethodId::Saturation: return soft_saturation(x, assets.tau_saturation);
        case MethodId::Cooccurrence:
            return soft_cooccurrence(x, assets.q_bins, assets.tau_cooccurrence);
        case MethodId::Crossband:
            return soft_crossband(x, assets.q_bins, assets.tau_cooccurrence);
        case MethodId::Residual: return soft_residual(x);
        case MethodId::RadialSpectrum: return soft_radial(x);
        case MethodId::Powerlaw: return soft_powerlaw(x);
        default: throw ConfigError("extract_soft: method has no analytic approximation");
    }
}

/// Input gradient of the soft extractor for a given output cotangent.
template <typename T>
Tensor<T> extract_soft_vjp(MethodId id, const Image<T>& x, const ExtractorAssets<T>& assets,
                           const std::vector<T>& cotangent) {
    switch (id) {
        case MethodId::Saturation: return soft_saturation_vjp(x, assets.tau_saturation, cotangent);
        case MethodId::Cooccurrence:
            return soft_cooccurrence_vjp(x, assets.q_bins, assets.tau_cooccurrence, cotangent);
        case MethodId::Crossband:
            return soft_crossband_vjp(x, assets.q_bins, assets.tau_cooccurrence, cotangent);
        case MethodId::Residual: return soft_residual_vjp(x, cotangent);
        case MethodId::RadialSpectrum: return soft_radial_vjp(x, cotangent);
        case MethodId::Powerlaw: return soft_powerlaw_vjp(x, cotangent);
        default: throw ConfigError("extract_soft_vjp: method has no analytic approximation");
    }
}

/// Input gradient of the hard extractor for the directly differentiable
/// methods (the learned CNN handles its own gradients end to end).
template <typename T>
Tensor<T> extract_hard_vjp(MethodId id, const Image<T>& x, const ExtractorAssets<T>&,
                           const std::vector<T>& cotangent) {
    switch (id) {
        case MethodId::DctStats: return dct_stats_vjp(x, cotangent);
        case MethodId::ResidualAutocorr: return residual_autocorr_vjp(x, cotangent);
        case MethodId::Spectra: return spectra_vjp(x, cotangent);
        default: throw ConfigError("extract_hard_vjp: method is not directly differentiable");
    }
}

// ---------------------------------------------------------------------------
// Fingerprint dump format

template <typename T>
void write_fingerprints(const std::string& path, const std::string& extractor_id,
                        const std::vector<std::size_t>& shape,
                        const std::vector<std::vector<T>>& rows) {
    std::ofstream f(path);
    if (!f) throw DataError("write_fingerprints: cannot open " + path);
    f << "# extractor=" << extractor_id << " shape=";
    for (std::size_t i = 0; i < shape.size(); ++i) f << (i ? "x" : "") << shape[i];
    f << " rows=" << rows.size() << "\n";
    f << std::setprecision(17);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            f << (i ? " " : "") << static_cast<double>(row[i]);
        f << "\n";
    }
    if (!f) throw DataError("write_fingerprints: write failed for " + path);
}

template <typename T>
std::vector<std::vector<T>> read_fingerprints(const std::string& path,
                                              std::string* extractor_id = nullptr) {
    std::ifstream f(path);
    if (!f) throw DataError("read_fingerprints: cannot open " + path);
    std::string header;
    std::getline(f, header);
    if (header.rfind("# extractor=", 0) != 0)
        throw DataError("read_fingerprints: missing header in " + path);
    if (extractor_id) {
        const std::size_t start = header.find('=') + 1;
        *extractor_id = header.substr(start, header.find(' ', start) - start);
    }
    std::vector<std::vector<T>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::vector<T> row;
        double v;
        while (ss >> v) row.push_back(static_cast<T>(v));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace mfdlab
