#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "mfdlab/numerics.hpp"

using namespace mfdlab;

namespace {

Tensor<double> random_grid(std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> t({h, w});
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

// Direct O(n^4) DFT used as the independent oracle.
ComplexGrid<double> dft2_naive(const Tensor<double>& x) {
    const std::size_t h = x.extent(0), w = x.extent(1);
    ComplexGrid<double> g(h, w);
    for (std::size_t ky = 0; ky < h; ++ky)
        for (std::size_t kx = 0; kx < w; ++kx) {
            std::complex<double> acc(0, 0);
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < w; ++c) {
                    const double ang = -2.0 * M_PI *
                                       (static_cast<double>(ky * r) / static_cast<double>(h) +
                                        static_cast<double>(kx * c) / static_cast<double>(w));
                    acc += x.at(r, c) * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            g.re[g.idx(ky, kx)] = acc.real();
            g.im[g.idx(ky, kx)] = acc.imag();
        }
    return g;
}

// Naive orthonormal 2-D DCT-II of one block, the O(n^4) oracle.
Tensor<double> dct2_naive(const Tensor<double>& blk) {
    const std::size_t b = blk.extent(0);
    Tensor<double> out({b, b});
    for (std::size_t u = 0; u < b; ++u)
        for (std::size_t v = 0; v < b; ++v) {
            const double au = (u == 0) ? std::sqrt(1.0 / b) : std::sqrt(2.0 / b);
            const double av = (v == 0) ? std::sqrt(1.0 / b) : std::sqrt(2.0 / b);
            double s = 0.0;
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t c = 0; c < b; ++c)
                    s += blk.at(r, c) *
                         std::cos((2.0 * r + 1.0) * u * M_PI / (2.0 * b)) *
                         std::cos((2.0 * c + 1.0) * v * M_PI / (2.0 * b));
            out.at(u, v) = au * av * s;
        }
    return out;
}

}  // namespace

TEST_CASE("fft2 constant grid concentrates in the DC bin") {
    const double c = 0.37;
    Tensor<double> x({8, 8}, c);
    const auto g = fft2(x);
    CHECK(g.re[0] == Catch::Approx(64.0 * c).margin(1e-9));
    CHECK(g.im[0] == Catch::Approx(0.0).margin(1e-9));
    for (std::size_t i = 1; i < g.size(); ++i) {
        CHECK(std::abs(g.re[i]) < 1e-9);
        CHECK(std::abs(g.im[i]) < 1e-9);
    }
}

TEST_CASE("fft2 of a single impulse is flat in magnitude") {
    Tensor<double> x({4, 4});
    x.at(0, 0) = 1.0;
    const auto g = fft2(x);
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(std::sqrt(g.magnitude2(i)) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("fft2 satisfies Parseval against direct summation") {
    const auto x = random_grid(16, 16, 42);
    double space = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) space += x[i] * x[i];
    const auto g = fft2(x);
    double freq = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) freq += g.magnitude2(i);
    freq /= 256.0;
    CHECK(freq == Catch::Approx(space).epsilon(1e-9));
}

TEST_CASE("fft2 matches the naive DFT and inverts exactly") {
    const auto x = random_grid(12, 20, 7);  // exercises the non power-of-two path
    const auto fast = fft2(x);
    const auto slow = dft2_naive(x);
    for (std::size_t i = 0; i < fast.size(); ++i) {
        CHECK(fast.re[i] == Catch::Approx(slow.re[i]).margin(1e-7));
        CHECK(fast.im[i] == Catch::Approx(slow.im[i]).margin(1e-7));
    }
    const auto back = ifft2(fast);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(back[i] == Catch::Approx(x[i]).margin(1e-9));
}

TEST_CASE("fft2 rejects non-finite input") {
    Tensor<double> x({4, 4});
    x[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fft2(x), DataError);
}

TEST_CASE("fft2 is linear") {
    const auto x = random_grid(16, 16, 1);
    const auto y = random_grid(16, 16, 2);
    const double a = 1.7, b = -0.4;
    Tensor<double> z({16, 16});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * x[i] + b * y[i];
    const auto gx = fft2(x), gy = fft2(y), gz = fft2(z);
    for (std::size_t i = 0; i < gz.size(); ++i) {
        CHECK(gz.re[i] == Catch::Approx(a * gx.re[i] + b * gy.re[i]).margin(1e-9));
        CHECK(gz.im[i] == Catch::Approx(a * gx.im[i] + b * gy.im[i]).margin(1e-9));
    }
}

TEST_CASE("dct2_blocks of a constant block is DC-only") {
    const double v = 0.81;
    Tensor<double> x({8, 8}, v);
    const auto coefs = dct2_blocks(x, 8);
    CHECK(coefs.at(0, 0, 0) == Catch::Approx(8.0 * v).margin(1e-9));
    for (std::size_t u = 0; u < 8; ++u)
        for (std::size_t w = 0; w < 8; ++w)
            if (u != 0 || w != 0) CHECK(std::abs(coefs.at(0, u, w)) < 1e-9);
}

TEST_CASE("dct2_blocks matches the naive DCT oracle and round-trips") {
    const auto x = random_grid(16, 16, 11);
    const auto coefs = dct2_blocks(x, 8);
    for (std::size_t by = 0; by < 2; ++by)
        for (std::size_t bx = 0; bx < 2; ++bx) {
            Tensor<double> blk({8, 8});
            for (std::size_t r = 0; r < 8; ++r)
                for (std::size_t c = 0; c < 8; ++c)
                    blk.at(r, c) = x.at(by * 8 + r, bx * 8 + c);
            const auto expect = dct2_naive(blk);
            for (std::size_t u = 0; u < 8; ++u)
                for (std::size_t v = 0; v < 8; ++v)
                    CHECK(coefs.at(by * 2 + bx, u, v) ==
                          Catch::Approx(expect.at(u, v)).margin(1e-9));
        }
    const auto back = idct2_blocks(coefs, 16, 16);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(back[i] == Catch::Approx(x[i]).margin(1e-9));
}

TEST_CASE("dct2_blocks preserves per-block energy") {
    const auto x = random_grid(16, 16, 12);
    const auto coefs = dct2_blocks(x, 8);
    for (std::size_t by = 0; by < 2; ++by)
        for (std::size_t bx = 0; bx < 2; ++bx) {
            double es = 0.0, ec = 0.0;
            for (std::size_t r = 0; r < 8; ++r)
                for (std::size_t c = 0; c < 8; ++c) {
                    es += x.at(by * 8 + r, bx * 8 + c) * x.at(by * 8 + r, bx * 8 + c);
                    ec += coefs.at(by * 2 + bx, r, c) * coefs.at(by * 2 + bx, r, c);
                }
            CHECK(ec == Catch::Approx(es).epsilon(1e-9));
        }
}

TEST_CASE("dct2_blocks reflect-pads non-divisible input and round-trips") {
    const auto x = random_grid(13, 10, 13);
    const auto coefs = dct2_blocks(x, 8);
    CHECK(coefs.extent(0) == 4);
    CHECK(coefs.extent(1) == 8);
    const auto back = idct2_blocks(coefs, 13, 10);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(back[i] == Catch::Approx(x[i]).margin(1e-9));
    CHECK_THROWS_AS(dct2_blocks(x, 1), ConfigError);
}

TEST_CASE("radial_average flat field and DC delta") {
    Tensor<double> flat({64, 64}, 1.0);
    const auto bins = radial_average(flat);
    CHECK(bins.size() == radial_bin_count(64, 64));
    for (const double b : bins) CHECK(b == Catch::Approx(1.0).margin(1e-12));

    Tensor<double> delta({64, 64});
    delta.at(32, 32) = 5.0;  // centered DC position
    const auto d = radial_average(delta);
    CHECK(d[0] > 0.0);
    for (std::size_t r = 1; r < d.size(); ++r) CHECK(d[r] == 0.0);
}

TEST_CASE("radial_average yields 179 bins at 256x256") {
    CHECK(radial_bin_count(256, 256) == 179);
}

TEST_CASE("radial_average is mass consistent with a pixel-loop oracle") {
    const std::size_t n = 64;
    auto psd = random_grid(n, n, 5);
    for (auto& v : psd.values()) v = std::abs(v);
    const RadialBins rb(n, n);
    const auto bins = radial_average(psd, rb);
    double weighted = 0.0, mass = 0.0;
    std::size_t covered = 0;
    for (std::size_t r = 0; r < rb.bin_count; ++r) {
        weighted += bins[r] * static_cast<double>(rb.counts[r]);
        covered += rb.counts[r];
    }
    for (std::size_t i = 0; i < psd.size(); ++i)
        if (rb.bin_of[i] >= 0) mass += psd[i];
    CHECK(weighted == Catch::Approx(mass).epsilon(1e-9));
    CHECK(covered > psd.size() * 9 / 10);  // only corner radii excluded
}

TEST_CASE("angular_average basics") {
    Tensor<double> flat({64, 64}, 2.5);
    const auto sectors = angular_average(flat, std::size_t(8));
    for (const double s : sectors) CHECK(s == Catch::Approx(2.5).margin(1e-12));

    Tensor<double> horiz({64, 64});
    for (std::size_t c = 0; c < 64; ++c)
        if (c != 32) horiz.at(32, c) = 1.0;  // energy on the horizontal frequency axis
    const auto hsec = angular_average(horiz, std::size_t(8));
    for (std::size_t s = 1; s < hsec.size(); ++s) CHECK(hsec[0] > hsec[s]);

    CHECK_THROWS_AS(angular_average(flat, std::size_t(0)), ConfigError);
}

TEST_CASE("angular_average reconstructs the non-DC mean") {
    const std::size_t n = 32;
    auto psd = random_grid(n, n, 9);
    for (auto& v : psd.values()) v = std::abs(v);
    const AngularBins ab(n, n, 16);
    const auto sectors = angular_average(psd, ab);
    double weighted = 0.0, total = 0.0;
    std::size_t cnt = 0;
    for (std::size_t s = 0; s < 16; ++s) weighted += sectors[s] * static_cast<double>(ab.counts[s]);
    for (std::size_t i = 0; i < psd.size(); ++i)
        if (ab.sector_of[i] >= 0) {
            total += psd[i];
            ++cnt;
        }
    CHECK(cnt == n * n - 1);
    CHECK(weighted / static_cast<double>(cnt) ==
          Catch::Approx(total / static_cast<double>(cnt)).epsilon(1e-6));
}

TEST_CASE("autocorr2 white noise has small off-center lags") {
    const std::size_t n = 64;
    Rng rng(99);
    Tensor<double> x({n, n});
    for (auto& v : x.values()) v = rng.normal();
    const auto ac = autocorr2(x, std::size_t(4));
    const std::size_t side = 9;
    const double bound = 5.0 / std::sqrt(static_cast<double>(n * n));
    for (std::size_t i = 0; i < ac.size(); ++i) {
        if (i == (side * side) / 2) {
            CHECK(ac[i] == Catch::Approx(1.0).margin(1e-12));
        } else {
            CHECK(std::abs(ac[i]) < bound);
        }
    }
}

TEST_CASE("autocorr2 window of half 32 has 4225 lags") {
    Rng rng(3);
    Tensor<double> x({256, 256});
    for (auto& v : x.values()) v = rng.uniform();
    CHECK(autocorr2(x, std::size_t(32)).size() == 4225);
}

TEST_CASE("autocorr2 matches direct shift-and-multiply and sees periodicity") {
    const std::size_t n = 32;
    Rng rng(17);
    Tensor<double> x({n, n});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            x.at(r, c) = std::sin(2.0 * M_PI * static_cast<double>(r) / 8.0) *
                             std::sin(2.0 * M_PI * static_cast<double>(c) / 8.0) +
                         0.1 * rng.normal();
    const std::size_t half = 10;
    const auto ac = autocorr2(x, half);

    // direct circular autocorrelation oracle
    double mean = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mean += x[i];
    mean /= static_cast<double>(x.size());
    auto direct = [&](long long du, long long dv) {
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t r2 = (r + static_cast<std::size_t>(du + 64)) % n;
                const std::size_t c2 = (c + static_cast<std::size_t>(dv + 64)) % n;
                s += (x.at(r, c) - mean) * (x.at(r2, c2) - mean);
            }
        return s;
    };
    const double lag0 = direct(0, 0);
    const std::size_t side = 2 * half + 1;
    for (long long du = -3; du <= 3; ++du)
        for (long long dv = -3; dv <= 3; ++dv) {
            const double expect = direct(du, dv) / lag0;
            const double got = ac[static_cast<std::size_t>(du + 10) * side +
                                  static_cast<std::size_t>(dv + 10)];
            CHECK(got == Catch::Approx(expect).margin(1e-9));
        }

    // period-8 vertical pattern: lag (8,0) is a local maximum
    const auto at = [&](long long du, long long dv) {
        return ac[static_cast<std::size_t>(du + 10) * side + static_cast<std::size_t>(dv + 10)];
    };
    CHECK(at(8, 0) > at(7, 0));
    CHECK(at(8, 0) > at(9, 0));
    CHECK(at(8, 0) > at(8, 1));
    CHECK(at(8, 0) > at(8, -1));
}

TEST_CASE("autocorr2 degenerate input yields delta") {
    Tensor<double> x({16, 16}, 0.5);
    const auto ac = autocorr2(x, std::size_t(3));
    for (std::size_t i = 0; i < ac.size(); ++i)
        CHECK(ac[i] == (i == ac.size() / 2 ? 1.0 : 0.0));
}

TEST_CASE("conv2 and gaussian_kernel basics") {
    Tensor<double> x({16, 16}, 0.4);
    const auto k = gaussian_kernel(0.5, std::size_t(3));
    double ks = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) ks += k[i];
    CHECK(ks == Catch::Approx(1.0).margin(1e-12));
    const auto y = conv2(x, k);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == Catch::Approx(0.4).margin(1e-12));

    Tensor<double> empty;
    CHECK_THROWS_AS(conv2(x, empty), ConfigError);
    CHECK_THROWS_AS(gaussian_kernel(0.5, std::size_t(4)), ConfigError);
    CHECK_THROWS_AS(gaussian_kernel(0.0, std::size_t(3)), ConfigError);
}

TEST_CASE("conv2_adjoint is the transpose of conv2") {
    const auto x = random_grid(9, 9, 21);
    const auto g = random_grid(9, 9, 22);
    const auto k = gaussian_kernel(1.0, std::size_t(5));
    const auto cx = conv2(x, k);
    const auto adj = conv2_adjoint(g, k, 9, 9);
    // <conv(x), g> == <x, adjoint(g)>
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * g[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * adj[i];
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("resample_bilinear reproduces a linear ramp through a 0.9x cycle") {
    const std::size_t n = 64;
    Tensor<double> ramp({n, n});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            ramp.at(r, c) = static_cast<double>(c) / static_cast<double>(n - 1);
    const auto down = resample_bilinear(ramp, 58, 58);
    const auto up = resample_bilinear(down, n, n);
    double max_err = 0.0;
    for (std::size_t i = 0; i < ramp.size(); ++i)
        max_err = std::max(max_err, std::abs(up[i] - ramp[i]));
    CHECK(max_err < 1e-3);
    CHECK_THROWS_AS(resample_bilinear(ramp, 0, 10), ConfigError);
}

TEST_CASE("linear ops are linear on random instances") {
    const auto x = random_grid(16, 16, 31);
    const auto y = random_grid(16, 16, 32);
    const double a = 0.6, b = 2.3;
    Tensor<double> z({16, 16});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * x[i] + b * y[i];

    const auto dz = dct2_blocks(z, 8), dx = dct2_blocks(x, 8), dy = dct2_blocks(y, 8);
    for (std::size_t i = 0; i < dz.size(); ++i)
        CHECK(dz[i] == Catch::Approx(a * dx[i] + b * dy[i]).margin(1e-9));

    const auto rz = radial_average(z), rx = radial_average(x), ry = radial_average(y);
    for (std::size_t i = 0; i < rz.size(); ++i)
        CHECK(rz[i] == Catch::Approx(a * rx[i] + b * ry[i]).margin(1e-9));

    const auto az = angular_average(z, std::size_t(12)), ax = angular_average(x, std::size_t(12)),
               ay = angular_average(y, std::size_t(12));
    for (std::size_t i = 0; i < az.size(); ++i)
        CHECK(az[i] == Catch::Approx(a * ax[i] + b * ay[i]).margin(1e-9));
}
