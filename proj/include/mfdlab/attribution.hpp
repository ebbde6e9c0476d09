#pragma once

// The three trained models: the attribution classifier h on fingerprints,
// the surrogate classifier h_s on raw images, and the surrogate extractor
// phi_s regressing images to fingerprints. Fingerprints are z-scored with
// training statistics before the MLP; constant coordinates are dropped.

#include <memory>

#include "mfdlab/fingerprints.hpp"
#include "mfdlab/serialize.hpp"

namespace mfdlab {

template <typename T>
struct Standardizer {
    std::vector<T> mean, scale;  // scale = 1/std, or 0 for constant coordinates

    static Standardizer fit(const Tensor<T>& rows) {
        const std::size_t n = rows.extent(0), d = rows.extent(1);
        Standardizer s;
        s.mean.assign(d, T(0));
        s.scale.assign(d, T(0));
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) s.mean[c] += rows.at(r, c);
        for (auto& m : s.mean) m /= static_cast<T>(n);
        std::vector<double> var(d, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                const double dv = static_cast<double>(rows.at(r, c)) -
                                  static_cast<double>(s.mean[c]);
                var[c] += dv * dv;
            }
        for (std::size_t c = 0; c < d; ++c) {
            const double sd = std::sqrt(var[c] / static_cast<double>(n));
            s.scale[c] = sd > 1e-12 ? static_cast<T>(1.0 / sd) : T(0);
        }
        return s;
    }

    void apply_inplace(std::vector<T>& v) const {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mean[i]) * scale[i];
    }

    void apply_rows_inplace(Tensor<T>& rows) const {
        const std::size_t n = rows.extent(0), d = rows.extent(1);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c)
                rows.at(r, c) = (rows.at(r, c) - mean[c]) * scale[c];
    }

    /// Pulls a gradient on standardized values back to raw values.
    void backprop_inplace(std::vector<T>& grad) const {
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= scale[i];
    }
};

/// The MFD system h(phi(x)) for one method: either an MLP over standardized
/// fingerprints, or (for the learned method) the CNN applied end to end.
template <typename T>
struct AttributionModel {
    MethodId method = MethodId::Saturation;
    bool end_to_end = false;  // learned method: the network consumes images
    Network<T> network;
    Standardizer<T> standardizer;
    double clean_accuracy = 0.0;
};

template <typename T>
Tensor<T> extract_rows(MethodId method, const std::vector<LabeledImage<T>>& images,
                       const ExtractorAssets<T>& assets) {
    if (images.empty()) throw DataError("extract_rows: empty dataset");
    const std::size_t d = extract(method, images[0].image, assets).size();
    Tensor<T> rows({images.size(), d});
    parallel_for(images.size(), [&](std::size_t i) {
        const auto v = extract(method, images[i].image, assets);
        std::copy(v.begin(), v.end(), rows.data() + i * d);
    });
    return rows;
}

template <typename T>
Tensor<T> image_rows(const std::vector<LabeledImage<T>>& images) {
    const std::size_t d = images[0].image.data.size();
    Tensor<T> rows({images.size(), d});
    for (std::size_t i = 0; i < images.size(); ++i)
        std::copy(images[i].image.data.data(), images[i].image.data.data() + d,
                  rows.data() + i * d);
    return rows;
}

// ---------------------------------------------------------------------------
// Probabilities and predictions

template <typename T>
Tensor<T> system_probabilities(const AttributionModel<T>& model,
                               const std::vector<LabeledImage<T>>& batch,
                               const ExtractorAssets<T>& assets) {
    if (model.end_to_end) {
        const auto cache = forward(model.network, image_rows(batch));
        return softmax_probs(cache.logits);
    }
    Tensor<T> rows = extract_rows(model.method, batch, assets);
    model.standardizer.apply_rows_inplace(rows);
    const auto cache = forward(model.network, rows);
    return softmax_probs(cache.logits);
}

template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& probs) {
    std::vector<std::size_t> out(probs.extent(0));
    for (std::size_t r = 0; r < probs.extent(0); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.extent(1); ++c)
            if (probs.at(r, c) > probs.at(r, best)) best = c;
        out[r] = best;
    }
    return out;
}

template <typename T>
std::vector<std::size_t> predict_labels(const AttributionModel<T>& model,
                                        const std::vector<LabeledImage<T>>& batch,
                                        const ExtractorAssets<T>& assets) {
    return argmax_rows(system_probabilities(model, batch, assets));
}

/// Fraction of argmax-correct predictions.
template <typename T>
double evaluate_accuracy(const std::vector<std::size_t>& predicted,
                         const std::vector<LabeledImage<T>>& labeled) {
    if (labeled.empty()) throw DataError("evaluate_accuracy: empty set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labeled.size(); ++i)
        if (predicted[i] == labeled[i].label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(labeled.size());
}

struct RunStatistic {
    double mean = 0.0, stdev = 0.0;
    std::size_t runs = 0;
};

/// Population mean/std over per-run values.
inline RunStatistic aggregate_runs(const std::vector<double>& values) {
    RunStatistic s;
    s.runs = values.size();
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stdev = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

// ---------------------------------------------------------------------------
// Training

inline std::vector<std::size_t> default_mlp_hidden() { return {512, 256, 128}; }
inline std::vector<std::size_t> default_cnn_channels() { return {64, 128, 256, 512}; }

/// Trains the attribution classifier for one method and reports held-out
/// accuracy. The learned method trains its CNN end to end; every other
/// method gets the fixed MLP over standardized fingerprints.
template <typename T>
AttributionModel<T> train_attribution(MethodId method,
                                      const std::vector<LabeledImage<T>>& train_images,
                                      const std::vector<LabeledImage<T>>& test_images,
                                      const ExtractorAssets<T>& assets, std::size_t n_classes,
                                      const TrainConfig& config, TrainHistory* history = nullptr) {
    AttributionModel<T> model;
    model.method = method;
    DataSet<T> data;
    data.labels.resize(train_images.size());
    for (std::size_t i = 0; i < train_images.size(); ++i) data.labels[i] = train_images[i].label;

    if (method == MethodId::Learned) {
        model.end_to_end = true;
        data.features = image_rows(train_images);
        const auto& img = train_images[0].image;
        model.network = make_cnn<T>(3, img.height, img.width, default_cnn_channels(), n_classes,
                                    Head::SoftmaxCrossEntropy, mix_seed(config.seed, 0x68ULL));
    } else {
        Tensor<T> rows = extract_rows(method, train_images, assets);
        model.standardizer = Standardizer<T>::fit(rows);
        model.standardizer.apply_rows_inplace(rows);
        data.features = std::move(rows);
        model.network =
            make_mlp<T>(data.features.extent(1), default_mlp_hidden(), n_classes,
                        Head::SoftmaxCrossEntropy, mix_seed(config.seed, 0x68ULL));
    }
    const TrainHistory hist = train(model.network, data, config);
    if (history) *history = hist;
    if (!test_images.empty())
        model.clean_accuracy =
            evaluate_accuracy(predict_labels(model, test_images, assets), test_images);
    return model;
}

/// Surrogate attribution classifier h_s: a CNN from images to labels.
template <typename T>
Network<T> train_surrogate_classifier(const std::vector<LabeledImage<T>>& train_images,
                                      std::size_t n_classes, const TrainConfig& config,
                                      TrainHistory* history = nullptr) {
    DataSet<T> data;
    data.features = image_rows(train_images);
    data.labels.resize(train_images.size());
    for (std::size_t i = 0; i < train_images.size(); ++i) data.labels[i] = train_images[i].label;
    const auto& img = train_images[0].image;
    Network<T> net = make_cnn<T>(3, img.height, img.width, default_cnn_channels(), n_classes,
                                 Head::SoftmaxCrossEntropy, mix_seed(config.seed, 0x6873ULL));
    const TrainHistory hist = train(net, data, config);
    if (history) *history = hist;
    return net;
}

/// Surrogate extractor phi_s: a CNN regressing images to the target
/// extractor's fingerprints. Trained against standardized targets for
/// conditioning, then the affine map is folded back into the head so the
/// network emits raw fingerprints.
template <typename T>
Network<T> train_surrogate_extractor(MethodId method,
                                     const std::vector<LabeledImage<T>>& train_images,
                                     const ExtractorAssets<T>& assets, const TrainConfig& config,
                                     double* validation_rmse = nullptr) {
    Tensor<T> targets = extract_rows(method, train_images, assets);
    const Standardizer<T> std_targets = Standardizer<T>::fit(targets);
    Tensor<T> std_rows = targets;
    std_targets.apply_rows_inplace(std_rows);

    DataSet<T> data;
    data.features = image_rows(train_images);
    data.targets = std::move(std_rows);
    const auto& img = train_images[0].image;
    Network<T> net =
        make_cnn<T>(3, img.height, img.width, default_cnn_channels(), targets.extent(1),
                    Head::MeanSquaredError, mix_seed(config.seed, 0x706873ULL,
                                                     static_cast<std::uint64_t>(method)));
    train(net, data, config);

    // fold the un-standardization into the dense head: raw = z / scale + mean
    const std::size_t head = net.layers.size() - 1;
    const std::size_t d = targets.extent(1);
    const std::size_t in = net.layers[head].in_features;
    for (std::size_t o = 0; o < d; ++o) {
        const T sd = std_targets.scale[o] > T(0) ? T(1) / std_targets.scale[o] : T(0);
        for (std::size_t i = 0; i < in; ++i) net.weights[head].at(o, i) *= sd;
        net.biases[head][o] = net.biases[head][o] * sd + std_targets.mean[o];
    }

    if (validation_rmse) {
        // raw-scale RMSE per coordinate on a held-out tail of the data
        const std::size_t n_val = std::max<std::size_t>(1, train_images.size() / 5);
        const std::size_t start = train_images.size() - n_val;
        double se = 0.0;
        std::size_t cnt = 0;
        const std::size_t chunk = 32;
        for (std::size_t b = start; b < train_images.size(); b += chunk) {
            const std::size_t e = std::min(train_images.size(), b + chunk);
            Tensor<T> xb({e - b, data.features.extent(1)});
            for (std::size_t r = b; r < e; ++r)
                std::copy(data.features.data() + r * data.features.extent(1),
                          data.features.data() + (r + 1) * data.features.extent(1),
                          xb.data() + (r - b) * data.features.extent(1));
            const auto cache = forward(net, xb);
            for (std::size_t r = 0; r < e - b; ++r)
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = static_cast<double>(cache.logits.at(r, c)) -
                                        static_cast<double>(targets.at(b + r, c));
                    se += diff * diff;
                    ++cnt;
                }
        }
        *validation_rmse = std::sqrt(se / static_cast<double>(cnt));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Checkpoints

template <typename T>
void save_attribution_model(const std::string& path, const AttributionModel<T>& model,
                            const std::string& config_hash) {
    save_network(path, model.network, config_hash);
    std::ofstream f(path + ".std", std::ios::binary);
    if (!f) throw DataError("save_attribution_model: cannot open " + path + ".std");
    detail::put_u64(f, static_cast<std::uint64_t>(model.method));
    detail::put_u64(f, model.end_to_end ? 1 : 0);
    detail::put_u64(f, model.standardizer.mean.size());
    f.write(reinterpret_cast<const char*>(model.standardizer.mean.data()),
            static_cast<std::streamsize>(model.standardizer.mean.size() * sizeof(T)));
    f.write(reinterpret_cast<const char*>(model.standardizer.scale.data()),
            static_cast<std::streamsize>(model.standardizer.scale.size() * sizeof(T)));
    const auto acc_bits = double_bits(model.clean_accuracy);
    detail::put_u64(f, acc_bits);
}

template <typename T>
AttributionModel<T> load_attribution_model(const std::string& path,
                                           std::string* config_hash = nullptr) {
    AttributionModel<T> model;
    model.network = load_network<T>(path, config_hash);
    std::ifstream f(path + ".std", std::ios::binary);
    if (!f) throw DataError("load_attribution_model: cannot open " + path + ".std");
    model.method = static_cast<MethodId>(detail::get_u64(f));
    model.end_to_end = detail::get_u64(f) != 0;
    const std::size_t d = detail::get_u64(f);
    model.standardizer.mean.resize(d);
    model.standardizer.scale.resize(d);
    f.read(reinterpret_cast<char*>(model.standardizer.mean.data()),
           static_cast<std::streamsize>(d * sizeof(T)));
    f.read(reinterpret_cast<char*>(model.standardizer.scale.data()),
           static_cast<std::streamsize>(d * sizeof(T)));
    const std::uint64_t acc_bits = detail::get_u64(f);
    std::memcpy(&model.clean_accuracy, &acc_bits, sizeof(double));
    return model;
}

}  // namespace mfdlab
