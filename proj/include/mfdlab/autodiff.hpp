#pragma once

// Minimal differentiable-network core: dense and 3x3 convolutional layers,
// ReLU, max/global pooling, softmax-cross-entropy and MSE heads, Adam, and a
// deterministic training loop. Reverse mode produces gradients for both the
// parameters and the network input; the latter is what gradient attacks need.

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "mfdlab/common.hpp"
#include "mfdlab/tensor.hpp"

namespace mfdlab {

enum class LayerKind { Dense, Conv, Relu, MaxPool, GlobalPool, InputScale };
enum class Head { SoftmaxCrossEntropy, MeanSquaredError };

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    // dense
    std::size_t in_features = 0, out_features = 0;
    // conv / pooling; conv kernels are 3x3 with zero padding 1
    std::size_t in_channels = 0, out_channels = 0, stride = 1;
    std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;

    std::size_t input_size() const {
        switch (kind) {
            case LayerKind::Dense:
            case LayerKind::InputScale: return in_features;
            default: return in_channels * in_h * in_w;
        }
    }
    std::size_t output_size() const {
        switch (kind) {
            case LayerKind::Dense:
            case LayerKind::InputScale: return out_features;
            case LayerKind::GlobalPool: return in_channels;
            default: return out_channels * out_h * out_w;
        }
    }
};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
struct Network {
    std::vector<LayerSpec> layers;
    Head head = Head::SoftmaxCrossEntropy;
    std::vector<Tensor<T>> weights;  // empty tensor for parameter-free layers
    std::vector<Tensor<T>> biases;
    std::size_t input_size = 0;
    std::size_t output_size = 0;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += w.size();
        for (const auto& b : biases) n += b.size();
        return n;
    }

    bool finite_parameters() const {
        for (const auto& w : weights)
            if (!w.all_finite()) return false;
        for (const auto& b : biases)
            if (!b.all_finite()) return false;
        return true;
    }
};

namespace detail {

template <typename T>
void kaiming_init(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.values()) v = static_cast<T>(rng.normal() * scale);
}

}  // namespace detail

/// MLP with the fixed hidden stack and ReLU activations.
template <typename T>
Network<T> make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                    std::size_t output_dim, Head head, std::uint64_t seed) {
    Network<T> net;
    net.head = head;
    net.input_size = input_dim;
    net.output_size = output_dim;
    Rng rng(mix_seed(seed, 0x6d6c70ULL));
    std::size_t prev = input_dim;
    auto add_dense = [&](std::size_t out, bool relu) {
        LayerSpec d;
        d.kind = LayerKind::Dense;
        d.in_features = prev;
        d.out_features = out;
        net.layers.push_back(d);
        Tensor<T> w({out, prev});
        detail::kaiming_init(w, prev, rng);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Tensor<T>({out}));
        if (relu) {
            LayerSpec r;
            r.kind = LayerKind::Relu;
            r.in_features = out;
            r.out_features = out;
            net.layers.push_back(r);
            net.weights.push_back(Tensor<T>{});
            net.biases.push_back(Tensor<T>{});
        }
        prev = out;
    };
    for (std::size_t hdim : hidden) add_dense(hdim, true);
    add_dense(output_dim, false);
    return net;
}

/// Four-block CNN (64->128->256->512 by default): 3x3 convolutions with
/// stride 2 in the first two blocks, stride 1 afterwards, each followed by
/// ReLU and 2x2 max pooling, then global average pooling and a dense head.
template <typename T>
Network<T> make_cnn(std::size_t in_channels, std::size_t h, std::size_t w,
                    const std::vector<std::size_t>& channels, std::size_t output_dim, Head head,
                    std::uint64_t seed) {
    Network<T> net;
    net.head = head;
    net.input_size = in_channels * h * w;
    net.output_size = output_dim;
    Rng rng(mix_seed(seed, 0x636e6eULL));
    std::size_t c = in_channels, ch_h = h, ch_w = w;

    // fixed input centering x -> 2x - 1; [0,1] pixels otherwise keep the
    // first layer biased at the 1e-4 learning rate
    LayerSpec scale;
    scale.kind = LayerKind::InputScale;
    scale.in_features = net.input_size;
    scale.out_features = net.input_size;
    net.layers.push_back(scale);
    net.weights.push_back(Tensor<T>{});
    net.biases.push_back(Tensor<T>{});

    for (std::size_t b = 0; b < channels.size(); ++b) {
        const std::size_t stride = (b < 2) ? 2 : 1;
        LayerSpec conv;
        conv.kind = LayerKind::Conv;
        conv.in_channels = c;
        conv.out_channels = channels[b];
        conv.stride = stride;
        conv.in_h = ch_h;
        conv.in_w = ch_w;
        conv.out_h = (ch_h + 2 - 3) / stride + 1;
        conv.out_w = (ch_w + 2 - 3) / stride + 1;
        net.layers.push_back(conv);
        Tensor<T> wt({channels[b], c * 9});
        detail::kaiming_init(wt, c * 9, rng);
        net.weights.push_back(std::move(wt));
        net.biases.push_back(Tensor<T>({channels[b]}));
        c = channels[b];
        ch_h = conv.out_h;
        ch_w = conv.out_w;

        LayerSpec relu;
        relu.kind = LayerKind::Relu;
        relu.in_channels = c;
        relu.in_h = ch_h;
        relu.in_w = ch_w;
        relu.out_h = ch_h;
        relu.out_w = ch_w;
        relu.out_channels = c;
        net.layers.push_back(relu);
        net.weights.push_back(Tensor<T>{});
        net.biases.push_back(Tensor<T>{});

        if (ch_h >= 2 && ch_w >= 2) {
            LayerSpec pool;
            pool.kind = LayerKind::MaxPool;
            pool.in_channels = c;
            pool.out_channels = c;
            pool.in_h = ch_h;
            pool.in_w = ch_w;
            pool.out_h = ch_h / 2;
            pool.out_w = ch_w / 2;
            net.layers.push_back(pool);
            net.weights.push_back(Tensor<T>{});
            net.biases.push_back(Tensor<T>{});
            ch_h /= 2;
            ch_w /= 2;
        }
    }
    LayerSpec gap;
    gap.kind = LayerKind::GlobalPool;
    gap.in_channels = c;
    gap.out_channels = c;
    gap.in_h = ch_h;
    gap.in_w = ch_w;
    gap.out_h = 1;
    gap.out_w = 1;
    net.layers.push_back(gap);
    net.weights.push_back(Tensor<T>{});
    net.biases.push_back(Tensor<T>{});

    LayerSpec dense;
    dense.kind = LayerKind::Dense;
    dense.in_features = c;
    dense.out_features = output_dim;
    net.layers.push_back(dense);
    Tensor<T> wt({output_dim, c});
    detail::kaiming_init(wt, c, rng);
    net.weights.push_back(std::move(wt));
    net.biases.push_back(Tensor<T>({output_dim}));
    return net;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename T>
struct ForwardCache {
    std::vector<Tensor<T>> inputs;            // input to each layer, {B, features}
    std::vector<std::vector<int>> pool_pick;  // chosen offset per pooled cell
    Tensor<T> logits;
    std::size_t batch = 0;
};

namespace detail {

// Patch matrices for one image written into a batch-wide buffer: rows are
// the cin*9 kernel taps, this image's columns start at `col` inside a matrix
// whose full row stride is `cols_total`.
template <typename T>
void im2col_strided(const T* img, std::size_t cin, std::size_t h, std::size_t w,
                    std::size_t stride, std::size_t oh, std::size_t ow, T* col,
                    std::size_t cols_total) {
    for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ki = 0; ki < 3; ++ki)
            for (std::size_t kj = 0; kj < 3; ++kj) {
                T* dst = col + ((ci * 3 + ki) * 3 + kj) * cols_total;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long long sy =
                        static_cast<long long>(oy * stride + ki) - 1;
                    if (sy < 0 || sy >= static_cast<long long>(h)) {
                        for (std::size_t ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
                        continue;
                    }
                    const T* src = img + (ci * h + static_cast<std::size_t>(sy)) * w;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long long sx =
                            static_cast<long long>(ox * stride + kj) - 1;
                        dst[oy * ow + ox] =
                            (sx < 0 || sx >= static_cast<long long>(w))
                                ? T(0)
                                : src[static_cast<std::size_t>(sx)];
                    }
                }
            }
}

template <typename T>
void col2im_add_strided(const T* col, std::size_t cin, std::size_t h, std::size_t w,
                        std::size_t stride, std::size_t oh, std::size_t ow, T* img,
                        std::size_t cols_total) {
    for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ki = 0; ki < 3; ++ki)
            for (std::size_t kj = 0; kj < 3; ++kj) {
                const T* src = col + ((ci * 3 + ki) * 3 + kj) * cols_total;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long long sy = static_cast<long long>(oy * stride + ki) - 1;
                    if (sy < 0 || sy >= static_cast<long long>(h)) continue;
                    T* dst = img + (ci * h + static_cast<std::size_t>(sy)) * w;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long long sx = static_cast<long long>(ox * stride + kj) - 1;
                        if (sx >= 0 && sx < static_cast<long long>(w))
                            dst[static_cast<std::size_t>(sx)] += src[oy * ow + ox];
                    }
                }
            }
}

}  // namespace detail

template <typename T>
ForwardCache<T> forward(const Network<T>& net, const Tensor<T>& x) {
    if (x.rank() != 2 || x.extent(1) != net.input_size)
        throw ConfigError("forward: input shape mismatch");
    const std::size_t batch = x.extent(0);
    ForwardCache<T> cache;
    cache.batch = batch;
    cache.inputs.reserve(net.layers.size());
    cache.pool_pick.resize(net.layers.size());
    Tensor<T> cur = x;
    std::vector<T> col;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const LayerSpec& L = net.layers[li];
        cache.inputs.push_back(std::move(cur));
        const Tensor<T>& in = cache.inputs.back();
        switch (L.kind) {
            case LayerKind::Dense: {
                Tensor<T> out({batch, L.out_features});
                ConstMatMap<T> X(in.data(), static_cast<Eigen::Index>(batch),
                                 static_cast<Eigen::Index>(L.in_features));
                ConstMatMap<T> W(net.weights[li].data(),
                                 static_cast<Eigen::Index>(L.out_features),
                                 static_cast<Eigen::Index>(L.in_features));
                MatMap<T> Y(out.data(), static_cast<Eigen::Index>(batch),
                            static_cast<Eigen::Index>(L.out_features));
                Y.noalias() = X * W.transpose();
                const T* b = net.biases[li].data();
                for (std::size_t r = 0; r < batch; ++r)
                    for (std::size_t c = 0; c < L.out_features; ++c)
                        out.at(r, c) += b[c];
                cur = std::move(out);
                break;
            }
            case LayerKind::Conv: {
                // one GEMM per layer over the whole batch
                const std::size_t kk = L.in_channels * 9, patch = L.out_h * L.out_w;
                const std::size_t cols = batch * patch;
                Tensor<T> out({batch, L.out_channels * patch});
                col.resize(kk * cols);
                for (std::size_t bimg = 0; bimg < batch; ++bimg)
                    detail::im2col_strided(in.data() + bimg * in.extent(1), L.in_channels,
                                           L.in_h, L.in_w, L.stride, L.out_h, L.out_w,
                                           col.data() + bimg * patch, cols);
                ConstMatMap<T> W(net.weights[li].data(),
                                 static_cast<Eigen::Index>(L.out_channels),
                                 static_cast<Eigen::Index>(kk));
                ConstMatMap<T> C(col.data(), static_cast<Eigen::Index>(kk),
                                 static_cast<Eigen::Index>(cols));
                RowMat<T> Y(static_cast<Eigen::Index>(L.out_channels),
                            static_cast<Eigen::Index>(cols));
                Y.noalias() = W * C;
                const T* b = net.biases[li].data();
                for (std::size_t bimg = 0; bimg < batch; ++bimg)
                    for (std::size_t co = 0; co < L.out_channels; ++co) {
                        const T* src = Y.data() + co * cols + bimg * patch;
                        T* dst = out.data() + bimg * out.extent(1) + co * patch;
                        const T bias = b[co];
                        for (std::size_t p = 0; p < patch; ++p) dst[p] = src[p] + bias;
                    }
                cur = std::move(out);
                break;
            }
            case LayerKind::Relu: {
                Tensor<T> out({batch, in.extent(1)});
                for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::max(in[i], T(0));
                cur = std::move(out);
                break;
            }
            case LayerKind::InputScale: {
                Tensor<T> out({batch, in.extent(1)});
                for (std::size_t i = 0; i < in.size(); ++i) out[i] = T(2) * in[i] - T(1);
                cur = std::move(out);
                break;
            }
            case LayerKind::MaxPool: {
                const std::size_t patch = L.out_h * L.out_w;
                Tensor<T> out({batch, L.in_channels * patch});
                auto& pick = cache.pool_pick[li];
                pick.assign(batch * L.in_channels * patch, 0);
                for (std::size_t bimg = 0; bimg < batch; ++bimg)
                    for (std::size_t c = 0; c < L.in_channels; ++c) {
                        const T* src = in.data() + bimg * in.extent(1) + c * L.in_h * L.in_w;
                        T* dst = out.data() + bimg * out.extent(1) + c * patch;
                        int* pk = pick.data() + (bimg * L.in_channels + c) * patch;
                        for (std::size_t oy = 0; oy < L.out_h; ++oy)
                            for (std::size_t ox = 0; ox < L.out_w; ++ox) {
                                std::size_t best = 0;
                                T bv = src[(2 * oy) * L.in_w + 2 * ox];
                                const std::size_t offs[4] = {0, 1, L.in_w, L.in_w + 1};
                                for (std::size_t k = 1; k < 4; ++k) {
                                    const T v = src[(2 * oy) * L.in_w + 2 * ox + offs[k]];
                                    if (v > bv) {
                                        bv = v;
                                        best = k;
                                    }
                                }
                                dst[oy * L.out_w + ox] = bv;
                                pk[oy * L.out_w + ox] = static_cast<int>(best);
                            }
                    }
                cur = std::move(out);
                break;
            }
            case LayerKind::GlobalPool: {
                const std::size_t spatial = L.in_h * L.in_w;
                Tensor<T> out({batch, L.in_channels});
                for (std::size_t bimg = 0; bimg < batch; ++bimg)
                    for (std::size_t c = 0; c < L.in_channels; ++c) {
                        const T* src = in.data() + bimg * in.extent(1) + c * spatial;
                        T s = T(0);
                        for (std::size_t p = 0; p < spatial; ++p) s += src[p];
                        out.at(bimg, c) = s / static_cast<T>(spatial);
                    }
                cur = std::move(out);
                break;
            }
        }
    }
    if (!cur.all_finite()) throw ComputeError("forward: non-finite activation");
    cache.logits = std::move(cur);
    return cache;
}

/// Row-wise stable softmax.
template <typename T>
Tensor<T> softmax_probs(const Tensor<T>& logits) {
    Tensor<T> probs = logits;
    const std::size_t batch = logits.extent(0), k = logits.extent(1);
    for (std::size_t r = 0; r < batch; ++r) {
        T mx = probs.at(r, 0);
        for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, probs.at(r, c));
        T sum = T(0);
        for (std::size_t c = 0; c < k; ++c) {
            probs.at(r, c) = std::exp(probs.at(r, c) - mx);
            sum += probs.at(r, c);
        }
        for (std::size_t c = 0; c < k; ++c) probs.at(r, c) /= sum;
    }
    return probs;
}

template <typename T>
struct Gradients {
    std::vector<Tensor<T>> weights;
    std::vector<Tensor<T>> biases;
    Tensor<T> input;  // {B, input_size}
};

/// Reverse pass from d(loss)/d(logits). Parameter gradients are skipped when
/// with_params is false (the attack path only needs input gradients).
template <typename T>
Gradients<T> backward(const Network<T>& net, const ForwardCache<T>& cache,
                      const Tensor<T>& dlogits, bool with_params = true) {
    if (cache.inputs.size() != net.layers.size())
        throw ConfigError("backward: forward cache missing");
    Gradients<T> g;
    if (with_params) {
        g.weights.resize(net.layers.size());
        g.biases.resize(net.layers.size());
    }
    const std::size_t batch = cache.batch;
    Tensor<T> grad = dlogits;
    std::vector<T> col, dcol;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const LayerSpec& L = net.layers[li];
        const Tensor<T>& input = cache.inputs[li];
        switch (L.kind) {
            case LayerKind::Dense: {
                if (with_params) {
                    g.weights[li] = Tensor<T>({L.out_features, L.in_features});
                    g.biases[li] = Tensor<T>({L.out_features});
                    ConstMatMap<T> dY(grad.data(), static_cast<Eigen::Index>(batch),
                                      static_cast<Eigen::Index>(L.out_features));
                    ConstMatMap<T> X(input.data(), static_cast<Eigen::Index>(batch),
                                     static_cast<Eigen::Index>(L.in_features));
                    MatMap<T> dW(g.weights[li].data(),
                                 static_cast<Eigen::Index>(L.out_features),
                                 static_cast<Eigen::Index>(L.in_features));
                    dW.noalias() = dY.transpose() * X;
                    for (std::size_t r = 0; r < batch; ++r)
                        for (std::size_t c = 0; c < L.out_features; ++c)
                            g.biases[li][c] += grad.at(r, c);
                }
                Tensor<T> dX({batch, L.in_features});
                ConstMatMap<T> dY(grad.data(), static_cast<Eigen::Index>(batch),
                                  static_cast<Eigen::Index>(L.out_features));
                ConstMatMap<T> W(net.weights[li].data(),
                                 static_cast<Eigen::Index>(L.out_features),
                                 static_cast<Eigen::Index>(L.in_features));
                MatMap<T> dXm(dX.data(), static_cast<Eigen::Index>(batch),
                              static_cast<Eigen::Index>(L.in_features));
                dXm.noalias() = dY * W;
                grad = std::move(dX);
                break;
            }
            case LayerKind::Conv: {
                const std::size_t kk = L.in_channels * 9, patch = L.out_h * L.out_w;
                const std::size_t cols = batch * patch;
                Tensor<T> dX({batch, L.in_channels * L.in_h * L.in_w});
                // reassemble dY as (out_channels x batch*patch)
                RowMat<T> dY(static_cast<Eigen::Index>(L.out_channels),
                             static_cast<Eigen::Index>(cols));
                for (std::size_t bimg = 0; bimg < batch; ++bimg)
                    for (std::size_t co = 0; co < L.out_channels; ++co)
                        std::copy(grad.data() + bimg * grad.extent(1) + co * patch,
                                  grad.data() + bimg * grad.extent(1) + (co + 1) * patch,
                                  dY.data() + co * cols + bimg * patch);
                if (with_params) {
                    g.weights[li] = Tensor<T>({L.out_channels, kk});
                    g.biases[li] = Tensor<T>({L.out_channels});
                    col.resize(kk * cols);
                    for (std::size_t bimg = 0; bimg < batch; ++bimg)
                        detail::im2col_strided(input.data() + bimg * input.extent(1),
                                               L.in_channels, L.in_h, L.in_w, L.stride, L.out_h,
                                               L.out_w, col.data() + bimg * patch, cols);
                    ConstMatMap<T> C(col.data(), static_cast<Eigen::Index>(kk),
                                     static_cast<Eigen::Index>(cols));
                    MatMap<T> dW(g.weights[li].data(),
                                 static_cast<Eigen::Index>(L.out_channels),
                                 static_cast<Eigen::Index>(kk));
                    dW.noalias() = dY * C.transpose();
                    for (std::size_t co = 0; co < L.out_channels; ++co)
                        g.biases[li][co] = dY.row(static_cast<Eigen::Index>(co)).sum();
                }
                ConstMatMap<T> W(net.weights[li].data(),
                                 static_cast<Eigen::Index>(L.out_channels),
                                 static_cast<Eigen::Index>(kk));
                dcol.resize(kk * cols);
                MatMap<T> dC(dcol.data(), static_cast<Eigen::Index>(kk),
                             static_cast<Eigen::Index>(cols));
                dC.noalias() = W.transpose() * dY;
                for (std::size_t bimg = 0; bimg < batch; ++bimg)
                    detail::col2im_add_strided(dcol.data() + bimg * patch, L.in_channels, L.in_h,
                                               L.in_w, L.stride, L.out_h, L.out_w,
                                               dX.data() + bimg * dX.extent(1), cols);
                grad = std::move(dX);
                break;
            }
            case LayerKind::Relu: {
                for (std::size_t i = 0; i < grad.size(); ++i)
                    if (input[i] <= T(0)) grad[i] = T(0);
                break;
            }
            case LayerKind::InputScale: {
                for (auto& v : grad.values()) v *= T(2);
                break;
            }
            case LayerKind::MaxPool: {
                const std::size_t patch = L.out_h * L.out_w;
                Tensor<T> dX({batch, L.in_channels * L.in_h * L.in_w});
                const auto& pick = cache.pool_pick[li];
                for (std::size_t bimg = 0; bimg < batch; ++bimg)
                    for (std::size_t c = 0; c < L.in_channels; ++c) {
                        T* dst = dX.data() + bimg * dX.extent(1) + c * L.in_h * L.in_w;
                        const T* src = grad.data() + bimg * grad.extent(1) + c * patch;
                        const int* pk = pick.data() + (bimg * L.in_channels + c) * patch;
                        const std::size_t offs[4] = {0, 1, L.in_w, L.in_w + 1};
                        for (std::size_t oy = 0; oy < L.out_h; ++oy)
                            for (std::size_t ox = 0; ox < L.out_w; ++ox) {
                                const std::size_t base = (2 * oy) * L.in_w + 2 * ox;
                                dst[base + offs[pk[oy * L.out_w + ox]]] +=
                                    src[oy * L.out_w + ox];
                            }
                    }
                grad = std::move(dX);
                break;
            }
            case LayerKind::GlobalPool: {
                const std::size_t spatial = L.in_h * L.in_w;
                Tensor<T> dX({batch, L.in_channels * spatial});
                const T inv = T(1) / static_cast<T>(spatial);
                for (std::size_t bimg = 0; bimg < batch; ++bimg)
                    for (std::size_t c = 0; c < L.in_channels; ++c) {
                        const T gv = grad.at(bimg, c) * inv;
                        T* dst = dX.data() + bimg * dX.extent(1) + c * spatial;
                        for (std::size_t p = 0; p < spatial; ++p) dst[p] = gv;
                    }
                grad = std::move(dX);
                break;
            }
        }
    }
    g.input = std::move(grad);
    return g;
}

// ---------------------------------------------------------------------------
// Losses

/// Mean softmax cross-entropy; also emits d(loss)/d(logits).
template <typename T>
double softmax_ce_loss(const Tensor<T>& logits, const std::vector<std::size_t>& labels,
                       Tensor<T>* dlogits = nullptr) {
    const std::size_t batch = logits.extent(0), k = logits.extent(1);
    const Tensor<T> probs = softmax_probs(logits);
    double loss = 0.0;
    if (dlogits) *dlogits = probs;
    for (std::size_t r = 0; r < batch; ++r) {
        const double p = std::max(static_cast<double>(probs.at(r, labels[r])), 1e-300);
        loss -= std::log(p);
        if (dlogits) {
            dlogits->at(r, labels[r]) -= T(1);
        }
    }
    if (dlogits)
        for (auto& v : dlogits->values()) v /= static_cast<T>(batch);
    return loss / static_cast<double>(batch);
}

/// Mean squared error over every output coordinate.
template <typename T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* dpred = nullptr) {
    const auto n = static_cast<double>(pred.size());
    double loss = 0.0;
    if (dpred) *dpred = Tensor<T>({pred.extent(0), pred.extent(1)});
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        loss += d * d;
        if (dpred) (*dpred)[i] = static_cast<T>(2.0 * d / n);
    }
    return loss / n;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m_w, v_w, m_b, v_b;
    std::size_t step = 0;
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState make(const Network<T>& net, double lr) {
        AdamState s;
        s.lr = lr;
        for (const auto& w : net.weights) {
            s.m_w.emplace_back(w.shape(), T(0));
            s.v_w.emplace_back(w.shape(), T(0));
        }
        for (const auto& b : net.biases) {
            s.m_b.emplace_back(b.shape(), T(0));
            s.v_b.emplace_back(b.shape(), T(0));
        }
        return s;
    }
};

namespace detail {
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v,
                 double lr, double b1, double b2, double eps, double bc1, double bc2) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double gi = static_cast<double>(grad[i]);
        const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
        const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        param[i] -= static_cast<T>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
}
}  // namespace detail

/// Standard bias-corrected Adam step over every parameter tensor.
template <typename T>
void adam_step(AdamState<T>& state, Network<T>& net, const Gradients<T>& grads) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t li = 0; li < net.weights.size(); ++li) {
        if (net.weights[li].size() == 0) continue;
        if (grads.weights[li].size() != net.weights[li].size())
            throw ConfigError("adam_step: gradient shape mismatch");
        detail::adam_update(net.weights[li], grads.weights[li], state.m_w[li], state.v_w[li],
                            state.lr, state.beta1, state.beta2, state.eps, bc1, bc2);
        detail::adam_update(net.biases[li], grads.biases[li], state.m_b[li], state.v_b[li],
                            state.lr, state.beta1, state.beta2, state.eps, bc1, bc2);
    }
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch = 32;
    double lr = 1e-4;
    double val_fraction = 0.2;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
};

template <typename T>
struct DataSet {
    Tensor<T> features;               // {N, D}
    std::vector<std::size_t> labels;  // classification
    Tensor<T> targets;                // regression {N, Dout}

    std::size_t size() const { return features.rank() == 2 ? features.extent(0) : 0; }
    bool regression() const { return targets.size() > 0; }
};

struct TrainHistory {
    std::vector<double> train_loss, val_loss, val_accuracy;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    double final_val_loss = 0.0;
};

namespace detail {

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& src, const std::vector<std::size_t>& idx,
                      std::size_t begin, std::size_t end) {
    const std::size_t d = src.extent(1);
    Tensor<T> out({end - begin, d});
    for (std::size_t r = begin; r < end; ++r)
        std::copy(src.data() + idx[r] * d, src.data() + (idx[r] + 1) * d,
                  out.data() + (r - begin) * d);
    return out;
}

}  // namespace detail

/// Deterministic mini-batch training with a seeded validation split, early
/// stopping on validation loss, and best-parameter restore.
template <typename T>
TrainHistory train(Network<T>& net, const DataSet<T>& data, const TrainConfig& config) {
    const std::size_t n = data.size();
    if (n == 0) throw DataError("train: empty dataset");
    if (!(config.val_fraction > 0.0 && config.val_fraction < 1.0))
        throw ConfigError("train: val_fraction must be in (0,1)");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng split_rng(mix_seed(config.seed, 0x73706c6974ULL));
    split_rng.shuffle(order);
    auto n_val = static_cast<std::size_t>(config.val_fraction * static_cast<double>(n));
    n_val = std::min(std::max<std::size_t>(n_val, 1), n - 1);
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());

    auto eval_split = [&](const std::vector<std::size_t>& idx, double* accuracy) {
        double loss = 0.0;
        std::size_t correct = 0, count = 0;
        const std::size_t chunk = 64;
        for (std::size_t b = 0; b < idx.size(); b += chunk) {
            const std::size_t e = std::min(idx.size(), b + chunk);
            const Tensor<T> xb = detail::gather_rows(data.features, idx, b, e);
            auto cache = forward(net, xb);
            if (data.regression()) {
                Tensor<T> tb({e - b, data.targets.extent(1)});
                for (std::size_t r = b; r < e; ++r)
                    std::copy(data.targets.data() + idx[r] * data.targets.extent(1),
                              data.targets.data() + (idx[r] + 1) * data.targets.extent(1),
                              tb.data() + (r - b) * data.targets.extent(1));
                loss += mse_loss(cache.logits, tb) * static_cast<double>(e - b);
            } else {
                std::vector<std::size_t> lb(idx.begin() + static_cast<long>(b),
                                            idx.begin() + static_cast<long>(e));
                for (auto& v : lb) v = data.labels[v];
                loss += softmax_ce_loss(cache.logits, lb) * static_cast<double>(e - b);
                for (std::size_t r = 0; r < e - b; ++r) {
                    std::size_t arg = 0;
                    for (std::size_t c = 1; c < net.output_size; ++c)
                        if (cache.logits.at(r, c) > cache.logits.at(r, arg)) arg = c;
                    if (arg == lb[r]) ++correct;
                }
            }
            count += e - b;
        }
        if (accuracy)
            *accuracy = data.regression()
                            ? 0.0
                            : static_cast<double>(correct) / static_cast<double>(count);
        return loss / static_cast<double>(count);
    };

    AdamState<T> adam = AdamState<T>::make(net, config.lr);
    TrainHistory hist;
    std::vector<Tensor<T>> best_w = net.weights, best_b = net.biases;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(config.seed, 0x65706f6368ULL, epoch));
        shuffle_rng.shuffle(train_idx);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < train_idx.size(); b += config.batch) {
            const std::size_t e = std::min(train_idx.size(), b + config.batch);
            const Tensor<T> xb = detail::gather_rows(data.features, train_idx, b, e);
            auto cache = forward(net, xb);
            Tensor<T> dlogits;
            double loss;
            if (data.regression()) {
                Tensor<T> tb({e - b, data.targets.extent(1)});
                for (std::size_t r = b; r < e; ++r)
                    std::copy(data.targets.data() + train_idx[r] * data.targets.extent(1),
                              data.targets.data() + (train_idx[r] + 1) * data.targets.extent(1),
                              tb.data() + (r - b) * data.targets.extent(1));
                loss = mse_loss(cache.logits, tb, &dlogits);
            } else {
                std::vector<std::size_t> lb(e - b);
                for (std::size_t r = b; r < e; ++r) lb[r - b] = data.labels[train_idx[r]];
                loss = softmax_ce_loss(cache.logits, lb, &dlogits);
            }
            const Gradients<T> grads = backward(net, cache, dlogits, true);
            adam_step(adam, net, grads);
            epoch_loss += loss * static_cast<double>(e - b);
            seen += e - b;
        }
        hist.train_loss.push_back(epoch_loss / static_cast<double>(seen));
        double val_acc = 0.0;
        const double val_loss = eval_split(val_idx, &val_acc);
        hist.val_loss.push_back(val_loss);
        hist.val_accuracy.push_back(val_acc);
        if (val_loss < best_val) {
            best_val = val_loss;
            hist.best_epoch = epoch;
            best_w = net.weights;
            best_b = net.biases;
            since_best = 0;
        } else if (++since_best > config.patience) {
            break;
        }
    }
    hist.final_val_loss = hist.val_loss.back();
    net.weights = std::move(best_w);
    net.biases = std::move(best_b);
    hist.best_val_loss = best_val;
    return hist;
}

}  // namespace mfdlab
