#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "mfdlab/autodiff.hpp"
#include "mfdlab/serialize.hpp"

using namespace mfdlab;

namespace {

double loss_of(Network<double>& net, const Tensor<double>& x,
               const std::vector<std::size_t>& labels, const Tensor<double>& targets) {
    auto cache = forward(net, x);
    if (net.head == Head::SoftmaxCrossEntropy) return softmax_ce_loss(cache.logits, labels);
    return mse_loss(cache.logits, targets);
}

/// Central-difference check of analytic gradients at sampled coordinates.
void check_gradients(Network<double>& net, Tensor<double> x, std::uint64_t seed,
                     std::size_t n_coords = 25, double tol = 1e-4) {
    Rng rng(seed);
    std::vector<std::size_t> labels(x.extent(0));
    for (auto& l : labels) l = rng.below(net.output_size);
    Tensor<double> targets;
    if (net.head == Head::MeanSquaredError) {
        targets = Tensor<double>({x.extent(0), net.output_size});
        for (auto& v : targets.values()) v = rng.uniform(-1.0, 1.0);
    }

    auto cache = forward(net, x);
    Tensor<double> dlogits;
    if (net.head == Head::SoftmaxCrossEntropy)
        softmax_ce_loss(cache.logits, labels, &dlogits);
    else
        mse_loss(cache.logits, targets, &dlogits);
    const Gradients<double> g = backward(net, cache, dlogits, true);

    const double h = 1e-4;
    auto relative_ok = [&](double analytic, double fd) {
        const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
        return std::abs(analytic - fd) / denom < tol;
    };

    // input coordinates
    for (std::size_t k = 0; k < n_coords; ++k) {
        const std::size_t i = rng.below(x.size());
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss_of(net, x, labels, targets);
        x[i] = keep - h;
        const double dn = loss_of(net, x, labels, targets);
        x[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        INFO("input coord " << i);
        CHECK(relative_ok(g.input[i], fd));
    }
    // parameter coordinates across all parameterized layers
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        if (net.weights[li].size() == 0) continue;
        for (std::size_t k = 0; k < n_coords; ++k) {
            auto& w = net.weights[li];
            const std::size_t i = rng.below(w.size());
            const double keep = w[i];
            w[i] = keep + h;
            const double up = loss_of(net, x, labels, targets);
            w[i] = keep - h;
            const double dn = loss_of(net, x, labels, targets);
            w[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            INFO("layer " << li << " weight " << i);
            CHECK(relative_ok(g.weights[li][i], fd));
        }
        // one bias coordinate per layer
        auto& b = net.biases[li];
        const std::size_t i = rng.below(b.size());
        const double keep = b[i];
        b[i] = keep + h;
        const double up = loss_of(net, x, labels, targets);
        b[i] = keep - h;
        const double dn = loss_of(net, x, labels, targets);
        b[i] = keep;
        CHECK(relative_ok(g.biases[li][i], (up - dn) / (2.0 * h)));
    }
}

}  // namespace

TEST_CASE("zero-weight dense net with softmax head is uniform") {
    auto net = make_mlp<double>(6, {}, 4, Head::SoftmaxCrossEntropy, 1);
    net.weights[0].fill(0.0);
    Tensor<double> x({3, 6});
    Rng rng(2);
    for (auto& v : x.values()) v = rng.uniform();
    const auto cache = forward(net, x);
    const auto probs = softmax_probs(cache.logits);
    for (std::size_t r = 0; r < 3; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(probs.at(r, c) == Catch::Approx(0.25).margin(1e-12));
            sum += probs.at(r, c);
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("relu propagates through a one-unit net") {
    auto net = make_mlp<double>(1, {1}, 1, Head::MeanSquaredError, 3);
    net.weights[0].fill(1.0);  // dense 1->1
    net.biases[0].fill(0.0);
    net.weights[2].fill(1.0);  // dense after relu
    net.biases[2].fill(0.0);
    Tensor<double> x({2, 1});
    x[0] = -1.0;
    x[1] = 2.0;
    const auto cache = forward(net, x);
    CHECK(cache.logits[0] == 0.0);
    CHECK(cache.logits[1] == 2.0);
}

TEST_CASE("conv layer matches the direct-convolution oracle") {
    auto net = make_cnn<double>(2, 6, 6, {3}, 4, Head::MeanSquaredError, 17);
    // layer 0 recenters the input, layer 1 is the conv; compare the conv
    // output against a direct convolution of the recentered values
    REQUIRE(net.layers[0].kind == LayerKind::InputScale);
    const LayerSpec& L = net.layers[1];
    REQUIRE(L.kind == LayerKind::Conv);
    Tensor<double> x({1, 2 * 6 * 6});
    Rng rng(5);
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    const auto cache = forward(net, x);
    const auto& w = net.weights[1];
    const auto& b = net.biases[1];
    for (std::size_t co = 0; co < L.out_channels; ++co)
        for (std::size_t oy = 0; oy < L.out_h; ++oy)
            for (std::size_t ox = 0; ox < L.out_w; ++ox) {
                double s = b[co];
                for (std::size_t ci = 0; ci < L.in_channels; ++ci)
                    for (std::size_t ki = 0; ki < 3; ++ki)
                        for (std::size_t kj = 0; kj < 3; ++kj) {
                            const long long sy = static_cast<long long>(oy * L.stride + ki) - 1;
                            const long long sx = static_cast<long long>(ox * L.stride + kj) - 1;
                            if (sy < 0 || sx < 0 || sy >= 6 || sx >= 6) continue;
                            s += w.at(co, ci * 9 + ki * 3 + kj) *
                                 (2.0 * x[ci * 36 + static_cast<std::size_t>(sy) * 6 +
                                          static_cast<std::size_t>(sx)] -
                                  1.0);
                        }
                // cache.inputs[2] is the conv output (input of the relu)
                CHECK(cache.inputs[2][co * L.out_h * L.out_w + oy * L.out_w + ox] ==
                      Catch::Approx(s).margin(1e-9));
            }
}

TEST_CASE("gradients match central finite differences (MLP, both heads)") {
    for (Head head : {Head::SoftmaxCrossEntropy, Head::MeanSquaredError}) {
        auto net = make_mlp<double>(10, {16, 8}, 5, head, 11);
        Tensor<double> x({2, 10});
        Rng rng(12);
        for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
        check_gradients(net, x, 100 + static_cast<std::uint64_t>(head));
    }
}

TEST_CASE("gradients match central finite differences (CNN)") {
    auto net = make_cnn<double>(3, 8, 8, {4, 6, 6, 8}, 5, Head::SoftmaxCrossEntropy, 21);
    Tensor<double> x({2, 3 * 8 * 8});
    Rng rng(22);
    for (auto& v : x.values()) v = rng.uniform(0.0, 1.0);
    check_gradients(net, x, 200);
}

TEST_CASE("cross-entropy gradient at the logits is softmax minus one-hot") {
    Tensor<double> logits({2, 4});
    Rng rng(31);
    for (auto& v : logits.values()) v = rng.uniform(-2.0, 2.0);
    const std::vector<std::size_t> labels = {1, 3};
    Tensor<double> dlogits;
    softmax_ce_loss(logits, labels, &dlogits);
    const auto probs = softmax_probs(logits);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            const double expect = (probs.at(r, c) - (labels[r] == c ? 1.0 : 0.0)) / 2.0;
            CHECK(dlogits.at(r, c) == Catch::Approx(expect).margin(1e-9));
        }
}

TEST_CASE("doubling the loss scale doubles every gradient") {
    auto net = make_mlp<double>(6, {8}, 3, Head::SoftmaxCrossEntropy, 41);
    Tensor<double> x({2, 6});
    Rng rng(42);
    for (auto& v : x.values()) v = rng.uniform();
    const std::vector<std::size_t> labels = {0, 2};
    auto cache = forward(net, x);
    Tensor<double> dlogits;
    softmax_ce_loss(cache.logits, labels, &dlogits);
    const auto g1 = backward(net, cache, dlogits, true);
    for (auto& v : dlogits.values()) v *= 2.0;
    const auto g2 = backward(net, cache, dlogits, true);
    for (std::size_t li = 0; li < g1.weights.size(); ++li)
        for (std::size_t i = 0; i < g1.weights[li].size(); ++i)
            CHECK(g2.weights[li][i] == Catch::Approx(2.0 * g1.weights[li][i]).margin(1e-12));
    for (std::size_t i = 0; i < g1.input.size(); ++i)
        CHECK(g2.input[i] == Catch::Approx(2.0 * g1.input[i]).margin(1e-12));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    auto net = make_mlp<double>(4, {5}, 2, Head::SoftmaxCrossEntropy, 51);
    const auto w0 = net.weights[0].values();
    auto adam = AdamState<double>::make(net, 1e-2);
    Gradients<double> g;
    for (const auto& w : net.weights) g.weights.emplace_back(w.shape(), 0.0);
    for (const auto& b : net.biases) g.biases.emplace_back(b.shape(), 0.0);
    adam_step(adam, net, g);
    CHECK(net.weights[0].values() == w0);
}

TEST_CASE("adam: first-step magnitude is bounded by the learning rate") {
    auto net = make_mlp<double>(4, {}, 2, Head::SoftmaxCrossEntropy, 52);
    const auto w0 = net.weights[0];
    auto adam = AdamState<double>::make(net, 1e-2);
    Gradients<double> g;
    g.weights.emplace_back(net.weights[0].shape(), 0.0);
    g.biases.emplace_back(net.biases[0].shape(), 0.0);
    Rng rng(53);
    for (auto& v : g.weights[0].values()) v = rng.uniform(-3.0, 3.0);
    adam_step(adam, net, g);
    for (std::size_t i = 0; i < w0.size(); ++i)
        CHECK(std::abs(net.weights[0][i] - w0[i]) <= 1e-2 * (1.0 + 1e-6));
}

TEST_CASE("adam: quadratic bowl converges") {
    // f(w) = ||w||^2 from w0 = 1, lr = 1e-2: below 1e-2 within 2000 steps
    Network<double> net;  // container for a single parameter tensor
    net.layers.push_back(LayerSpec{});
    net.weights.emplace_back(std::vector<std::size_t>{8}, 1.0);
    net.biases.emplace_back(std::vector<std::size_t>{8}, 0.0);
    auto adam = AdamState<double>::make(net, 1e-2);
    for (int step = 0; step < 2000; ++step) {
        Gradients<double> g;
        g.weights.emplace_back(net.weights[0].shape(), 0.0);
        g.biases.emplace_back(net.biases[0].shape(), 0.0);
        for (std::size_t i = 0; i < 8; ++i) g.weights[0][i] = 2.0 * net.weights[0][i];
        adam_step(adam, net, g);
    }
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(net.weights[0][i]) < 1e-2);
}

TEST_CASE("training solves a linearly separable toy set") {
    // oracle: data separable by x0 > 0 with margin, so logistic regression fits it
    const std::size_t n = 80;
    DataSet<double> data;
    data.features = Tensor<double>({n, 2});
    data.labels.resize(n);
    Rng rng(61);
    for (std::size_t i = 0; i < n; ++i) {
        const bool cls = i % 2 == 0;
        data.features.at(i, 0) = cls ? rng.uniform(0.5, 1.5) : rng.uniform(-1.5, -0.5);
        data.features.at(i, 1) = rng.uniform(-1.0, 1.0);
        data.labels[i] = cls ? 1 : 0;
    }
    auto net = make_mlp<double>(2, {}, 2, Head::SoftmaxCrossEntropy, 62);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.lr = 0.05;
    cfg.seed = 63;
    train(net, data, cfg);
    std::size_t correct = 0;
    const auto cache = forward(net, data.features);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t pred = cache.logits.at(i, 1) > cache.logits.at(i, 0) ? 1 : 0;
        if (pred == data.labels[i]) ++correct;
    }
    CHECK(correct == n);
}

TEST_CASE("training solves XOR with one hidden layer of 8") {
    const std::size_t reps = 40;
    DataSet<double> data;
    data.features = Tensor<double>({4 * reps, 2});
    data.labels.resize(4 * reps);
    Rng rng(71);
    for (std::size_t i = 0; i < 4 * reps; ++i) {
        const std::size_t a = (i / reps) & 1, b = (i / reps) >> 1;
        data.features.at(i, 0) = static_cast<double>(a) + rng.uniform(-0.05, 0.05);
        data.features.at(i, 1) = static_cast<double>(b) + rng.uniform(-0.05, 0.05);
        data.labels[i] = a ^ b;
    }
    auto net = make_mlp<double>(2, {8}, 2, Head::SoftmaxCrossEntropy, 72);
    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.lr = 0.05;
    cfg.patience = 400;
    cfg.seed = 73;
    train(net, data, cfg);
    const auto cache = forward(net, data.features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t pred = cache.logits.at(i, 1) > cache.logits.at(i, 0) ? 1 : 0;
        if (pred == data.labels[i]) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.99);
}

TEST_CASE("early stopping restores the best validation parameters") {
    DataSet<double> data;
    const std::size_t n = 60;
    data.features = Tensor<double>({n, 3});
    data.labels.resize(n);
    Rng rng(81);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < 3; ++d) data.features.at(i, d) = rng.uniform();
        data.labels[i] = rng.below(2);  // pure noise: validation loss will wander
    }
    auto net = make_mlp<double>(3, {16}, 2, Head::SoftmaxCrossEntropy, 82);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.lr = 0.05;
    cfg.patience = 5;
    cfg.seed = 83;
    const auto hist = train(net, data, cfg);
    CHECK(hist.best_val_loss <= hist.final_val_loss + 1e-12);
    CHECK(hist.best_val_loss == *std::min_element(hist.val_loss.begin(), hist.val_loss.end()));
}

TEST_CASE("training is bitwise reproducible") {
    DataSet<double> data;
    const std::size_t n = 48;
    data.features = Tensor<double>({n, 4});
    data.labels.resize(n);
    Rng rng(91);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < 4; ++d) data.features.at(i, d) = rng.uniform();
        data.labels[i] = i % 3;
    }
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.lr = 1e-3;
    cfg.seed = 92;
    auto n1 = make_mlp<double>(4, {8}, 3, Head::SoftmaxCrossEntropy, 93);
    auto n2 = make_mlp<double>(4, {8}, 3, Head::SoftmaxCrossEntropy, 93);
    train(n1, data, cfg);
    train(n2, data, cfg);
    for (std::size_t li = 0; li < n1.weights.size(); ++li)
        CHECK(n1.weights[li].values() == n2.weights[li].values());

    CHECK_THROWS_AS(train(n1, DataSet<double>{}, cfg), DataError);
}

TEST_CASE("network checkpoints round-trip exactly") {
    auto net = make_cnn<double>(3, 8, 8, {4, 5, 6, 7}, 3, Head::SoftmaxCrossEntropy, 101);
    const std::string path = "/tmp/mfdlab_ckpt_test.bin";
    save_network(path, net, "cfg-hash-123");
    std::string hash;
    const auto back = load_network<double>(path, &hash);
    CHECK(hash == "cfg-hash-123");
    REQUIRE(back.layers.size() == net.layers.size());
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        CHECK(back.weights[li].values() == net.weights[li].values());
        CHECK(back.biases[li].values() == net.biases[li].values());
        CHECK(back.layers[li].kind == net.layers[li].kind);
    }
    Tensor<double> x({1, net.input_size});
    Rng rng(102);
    for (auto& v : x.values()) v = rng.uniform();
    const auto a = forward(net, x);
    const auto b = forward(back, x);
    CHECK(a.logits.values() == b.logits.values());
    std::remove(path.c_str());
}
