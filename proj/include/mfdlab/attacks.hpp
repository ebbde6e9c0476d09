#pragma once

// The attack engine: momentum PGD under an l-infinity budget, removal and
// forgery losses, attacker views for each strategy (W1 direct gradients,
// W2 soft approximations, W3 surrogate extractors, B1 surrogate classifier),
// single-shot B2 perturbations, and strength sweeps.
//
// Success is always verified against the true system h(phi(x)); the view is
// only the attacker's optimization target.

#include <memory>

#include "mfdlab/attribution.hpp"

namespace mfdlab {

enum class Strategy { W1, W2, W3, B1, B2 };
enum class AttackGoal { Removal, Forgery };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::W1: return "W1";
        case Strategy::W2: return "W2";
        case Strategy::W3: return "W3";
        case Strategy::B1: return "B1";
        case Strategy::B2: return "B2";
    }
    return "?";
}

inline Strategy strategy_from_name(const std::string& s) {
    for (Strategy st : {Strategy::W1, Strategy::W2, Strategy::W3, Strategy::B1, Strategy::B2})
        if (s == strategy_name(st)) return st;
    throw ConfigError("unknown strategy: " + s);
}

inline const char* goal_name(AttackGoal g) {
    return g == AttackGoal::Removal ? "removal" : "forgery";
}

/// Attack-path selection: direct gradients need differentiability, soft
/// approximations need an analytic relaxation, surrogate extractors stand in
/// whenever direct gradients are unavailable, and the black-box strategies
/// apply to every method.
inline bool strategy_compatible(const ExtractorDescriptor& d, Strategy s) {
    switch (s) {
        case Strategy::W1: return d.differentiable;
        case Strategy::W2: return d.soft_approx;
        case Strategy::W3: return !d.differentiable;
        case Strategy::B1: return true;
        case Strategy::B2: return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Adversarial losses

/// Removal: -log(1 - P(y|x')), clamped away from the pole.
template <typename T>
double removal_loss(const std::vector<T>& probs, std::size_t y) {
    const double rest = std::max(1.0 - static_cast<double>(probs[y]), 1e-12);
    return -std::log(rest);
}

/// Forgery: -log P(y_t|x').
template <typename T>
double forgery_loss(const std::vector<T>& probs, std::size_t target) {
    return -std::log(std::max(static_cast<double>(probs[target]), 1e-12));
}

namespace detail {

/// d(loss)/d(logits) rows for the adversarial objectives.
template <typename T>
Tensor<T> adversarial_dlogits(const Tensor<T>& probs, AttackGoal goal,
                              const std::vector<std::size_t>& label_or_target) {
    const std::size_t batch = probs.extent(0), k = probs.extent(1);
    Tensor<T> d({batch, k});
    for (std::size_t r = 0; r < batch; ++r) {
        const std::size_t y = label_or_target[r];
        if (goal == AttackGoal::Forgery) {
            for (std::size_t c = 0; c < k; ++c)
                d.at(r, c) = probs.at(r, c) - (c == y ? T(1) : T(0));
        } else {
            const T py = probs.at(r, y);
            const T denom = std::max(T(1) - py, T(1e-12));
            for (std::size_t c = 0; c < k; ++c)
                d.at(r, c) = py * ((c == y ? T(1) : T(0)) - probs.at(r, c)) / denom;
        }
    }
    return d;
}

template <typename T>
double adversarial_loss(const std::vector<T>& probs, AttackGoal goal, std::size_t y) {
    return goal == AttackGoal::Removal ? removal_loss(probs, y) : forgery_loss(probs, y);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Attacker views

/// A differentiable map from images to class probabilities with per-image
/// input gradients of the adversarial loss.
template <typename T>
class ModelView {
public:
    virtual ~ModelView() = default;
    virtual std::size_t num_classes() const = 0;
    virtual Tensor<T> probabilities(const std::vector<Image<T>>& batch) const = 0;
    /// Fills per-image losses and image-shaped gradients; probs_out receives
    /// the class probabilities so callers can test for view success.
    virtual void loss_and_grad(const std::vector<Image<T>>& batch, AttackGoal goal,
                               const std::vector<std::size_t>& label_or_target,
                               std::vector<double>& losses, std::vector<Tensor<T>>& grads,
                               Tensor<T>& probs_out) const = 0;
};

namespace detail {

template <typename T>
Tensor<T> batch_rows(const std::vector<Image<T>>& batch) {
    const std::size_t d = batch[0].data.size();
    Tensor<T> rows({batch.size(), d});
    for (std::size_t i = 0; i < batch.size(); ++i)
        std::copy(batch[i].data.data(), batch[i].data.data() + d, rows.data() + i * d);
    return rows;
}

template <typename T>
std::vector<Tensor<T>> rows_to_image_grads(const Tensor<T>& rows, std::size_t h, std::size_t w) {
    std::vector<Tensor<T>> out(rows.extent(0));
    for (std::size_t i = 0; i < rows.extent(0); ++i) {
        out[i] = Tensor<T>({3, h, w});
        std::copy(rows.data() + i * rows.extent(1), rows.data() + (i + 1) * rows.extent(1),
                  out[i].data());
    }
    return out;
}

}  // namespace detail

/// View over a network that consumes raw images: the surrogate classifier
/// h_s (B1) and the learned method's end-to-end CNN (W1).
template <typename T>
class NetworkImageView final : public ModelView<T> {
public:
    explicit NetworkImageView(const Network<T>* net) : net_(net) {}

    std::size_t num_classes() const override { return net_->output_size; }

    Tensor<T> probabilities(const std::vector<Image<T>>& batch) const override {
        const auto cache = forward(*net_, detail::batch_rows(batch));
        return softmax_probs(cache.logits);
    }

    void loss_and_grad(const std::vector<Image<T>>& batch, AttackGoal goal,
                       const std::vector<std::size_t>& lt, std::vector<double>& losses,
                       std::vector<Tensor<T>>& grads, Tensor<T>& probs_out) const override {
        const auto cache = forward(*net_, detail::batch_rows(batch));
        probs_out = softmax_probs(cache.logits);
        const Tensor<T> dlogits = detail::adversarial_dlogits(probs_out, goal, lt);
        const auto g = backward(*net_, cache, dlogits, false);
        grads = detail::rows_to_image_grads(g.input, batch[0].height, batch[0].width);
        losses.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            std::vector<T> p(probs_out.data() + i * probs_out.extent(1),
                             probs_out.data() + (i + 1) * probs_out.extent(1));
            losses[i] = detail::adversarial_loss(p, goal, lt[i]);
        }
    }

private:
    const Network<T>* net_;
};

/// View through an analytic extractor (hard for W1-compatible methods, soft
/// for W2) followed by the trained attribution MLP.
template <typename T>
class PipelineView final : public ModelView<T> {
public:
    PipelineView(const AttributionModel<T>* h, const ExtractorAssets<T>* assets, bool soft)
        : h_(h), assets_(assets), soft_(soft) {}

    std::size_t num_classes() const override { return h_->network.output_size; }

    Tensor<T> probabilities(const std::vector<Image<T>>& batch) const override {
        Tensor<T> rows = features(batch);
        const auto cache = forward(h_->network, rows);
        return softmax_probs(cache.logits);
    }

    void loss_and_grad(const std::vector<Image<T>>& batch, AttackGoal goal,
                       const std::vector<std::size_t>& lt, std::vector<double>& losses,
                       std::vector<Tensor<T>>& grads, Tensor<T>& probs_out) const override {
        const Tensor<T> rows = features(batch);
        const auto cache = forward(h_->network, rows);
        probs_out = softmax_probs(cache.logits);
        const Tensor<T> dlogits = detail::adversarial_dlogits(probs_out, goal, lt);
        const auto g = backward(h_->network, cache, dlogits, false);
        grads.resize(batch.size());
        losses.resize(batch.size());
        const std::size_t d = rows.extent(1);
        parallel_for(batch.size(), [&](std::size_t i) {
            std::vector<T> cot(g.input.data() + i * d, g.input.data() + (i + 1) * d);
            h_->standardizer.backprop_inplace(cot);
            grads[i] = soft_ ? extract_soft_vjp(h_->method, batch[i], *assets_, cot)
                             : extract_hard_vjp(h_->method, batch[i], *assets_, cot);
        });
        for (std::size_t i = 0; i < batch.size(); ++i) {
            std::vector<T> p(probs_out.data() + i * probs_out.extent(1),
                             probs_out.data() + (i + 1) * probs_out.extent(1));
            losses[i] = detail::adversarial_loss(p, goal, lt[i]);
        }
    }

private:
    Tensor<T> features(const std::vector<Image<T>>& batch) const {
        std::vector<std::vector<T>> fps(batch.size());
        parallel_for(batch.size(), [&](std::size_t i) {
            fps[i] = soft_ ? extract_soft(h_->method, batch[i], *assets_)
                           : extract(h_->method, batch[i], *assets_);
        });
        Tensor<T> rows({batch.size(), fps[0].size()});
        for (std::size_t i = 0; i < batch.size(); ++i)
            std::copy(fps[i].begin(), fps[i].end(), rows.data() + i * fps[i].size());
        h_->standardizer.apply_rows_inplace(rows);
        return rows;
    }

    const AttributionModel<T>* h_;
    const ExtractorAssets<T>* assets_;
    bool soft_;
};

/// View through a learned surrogate extractor phi_s feeding the true MLP.
template <typename T>
class SurrogateExtractorView final : public ModelView<T> {
public:
    SurrogateExtractorView(const Network<T>* phi_s, const AttributionModel<T>* h)
        : phi_s_(phi_s), h_(h) {}

    std::size_t num_classes() const override { return h_->network.output_size; }

    Tensor<T> probabilities(const std::vector<Image<T>>& batch) const override {
        const auto ext = forward(*phi_s_, detail::batch_rows(batch));
        Tensor<T> rows = ext.logits;
        h_->standardizer.apply_rows_inplace(rows);
        const auto cache = forward(h_->network, rows);
        return softmax_probs(cache.logits);
    }

    void loss_and_grad(const std::vector<Image<T>>& batch, AttackGoal goal,
                       const std::vector<std::size_t>& lt, std::vector<double>& losses,
                       std::vector<Tensor<T>>& grads, Tensor<T>& probs_out) const override {
        const auto ext = forward(*phi_s_, detail::batch_rows(batch));
        Tensor<T> rows = ext.logits;
        h_->standardizer.apply_rows_inplace(rows);
        const auto cache = forward(h_->network, rows);
        probs_out = softmax_probs(cache.logits);
        const Tensor<T> dlogits = detail::adversarial_dlogits(probs_out, goal, lt);
        auto gh = backward(h_->network, cache, dlogits, false);
        // pull standardization back onto raw surrogate outputs
        const std::size_t d = gh.input.extent(1);
        for (std::size_t i = 0; i < batch.size(); ++i)
            for (std::size_t c = 0; c < d; ++c)
                gh.input.at(i, c) *= h_->standardizer.scale[c];
        const auto gs = backward(*phi_s_, ext, gh.input, false);
        grads = detail::rows_to_image_grads(gs.input, batch[0].height, batch[0].width);
        losses.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            std::vector<T> p(probs_out.data() + i * probs_out.extent(1),
                             probs_out.data() + (i + 1) * probs_out.extent(1));
            losses[i] = detail::adversarial_loss(p, goal, lt[i]);
        }
    }

private:
    const Network<T>* phi_s_;
    const AttributionModel<T>* h_;
};

// ---------------------------------------------------------------------------
// PGD

template <typename T>
struct AttackSpec {
    AttackGoal goal = AttackGoal::Removal;
    Strategy strategy = Strategy::W1;
    T epsilon = T(0.025);
    std::size_t steps = 50;
    T momentum = T(0.9);
    std::vector<T> step_sizes = {T(0.0005), T(0.001), T(0.005), T(0.01), T(0.05), T(0.1)};
    std::uint64_t seed = 0;
};

template <typename T>
struct PgdResult {
    Image<T> candidate;
    std::size_t iterations = 0;
    bool view_success = false;
    bool error = false;  // non-finite gradient aborted this step size
};

namespace detail {

template <typename T>
bool view_success(const T* probs, std::size_t k, AttackGoal goal, std::size_t lt) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < k; ++c)
        if (probs[c] > probs[arg]) arg = c;
    return goal == AttackGoal::Removal ? arg != lt : arg == lt;
}

}  // namespace detail

/// Momentum PGD in the l-infinity ball, run in lockstep over a batch.
/// Per image and iteration: the raw gradient is normalized by its mean
/// absolute value, clipped to unit l-infinity, folded into the momentum
/// buffer, and applied as a plain (sign-free) step, followed by projection
/// onto the epsilon ball intersected with [0,1]. Images exit early as soon
/// as the view misclassifies them (removal) or hits the target (forgery).
template <typename T>
std::vector<PgdResult<T>> pgd_batch(const ModelView<T>& view, AttackGoal goal,
                                    const std::vector<Image<T>>& originals,
                                    const std::vector<std::size_t>& label_or_target, T epsilon,
                                    T alpha, std::size_t steps, T momentum,
                                    const std::vector<std::uint64_t>& seeds) {
    if (!(alpha > T(0))) throw ConfigError("pgd: step size must be positive");
    const std::size_t n = originals.size();
    std::vector<PgdResult<T>> results(n);
    std::vector<Tensor<T>> velocity(n);
    std::vector<std::size_t> active;
    std::vector<Image<T>> state(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(mix_seed(seeds[i], 0x706764ULL));
        state[i] = originals[i];
        for (auto& v : state[i].data.values()) {
            v += static_cast<T>(rng.uniform(-static_cast<double>(epsilon),
                                            static_cast<double>(epsilon)));
            v = std::min(std::max(v, T(0)), T(1));
        }
        velocity[i] = Tensor<T>({3, originals[i].height, originals[i].width});
        active.push_back(i);
    }

    std::vector<Image<T>> batch;
    std::vector<std::size_t> batch_lt;
    std::vector<double> losses;
    std::vector<Tensor<T>> grads;
    Tensor<T> probs;
    for (std::size_t it = 0; it < steps && !active.empty(); ++it) {
        batch.clear();
        batch_lt.clear();
        for (std::size_t i : active) {
            batch.push_back(state[i]);
            batch_lt.push_back(label_or_target[i]);
        }
        view.loss_and_grad(batch, goal, batch_lt, losses, grads, probs);
        std::vector<std::size_t> next;
        const std::size_t k = probs.extent(1);
        for (std::size_t b = 0; b < active.size(); ++b) {
            const std::size_t i = active[b];
            if (detail::view_success(probs.data() + b * k, k, goal, label_or_target[i])) {
                results[i].candidate = state[i];
                results[i].iterations = it;
                results[i].view_success = true;
                continue;
            }
            if (!grads[b].all_finite()) {
                results[i].candidate = state[i];
                results[i].iterations = it;
                results[i].error = true;
                continue;
            }
            double mean_abs = 0.0;
            for (std::size_t c = 0; c < grads[b].size(); ++c)
                mean_abs += std::abs(static_cast<double>(grads[b][c]));
            mean_abs = mean_abs / static_cast<double>(grads[b].size()) + 1e-12;
            Tensor<T>& vel = velocity[i];
            Image<T>& x = state[i];
            const Image<T>& orig = originals[i];
            for (std::size_t c = 0; c < vel.size(); ++c) {
                T ghat = static_cast<T>(static_cast<double>(grads[b][c]) / mean_abs);
                ghat = std::min(std::max(ghat, T(-1)), T(1));
                vel[c] = momentum * vel[c] + ghat;
                T v = x.data[c] - alpha * vel[c];
                v = std::min(std::max(v, orig.data[c] - epsilon), orig.data[c] + epsilon);
                x.data[c] = std::min(std::max(v, T(0)), T(1));
            }
            next.push_back(i);
        }
        active.swap(next);
    }
    for (std::size_t i : active) {
        results[i].candidate = state[i];
        results[i].iterations = steps;
    }
    return results;
}

/// Single-image PGD, the per-image contract behind the batch runner.
template <typename T>
PgdResult<T> pgd(const ModelView<T>& view, AttackGoal goal, const Image<T>& x, std::size_t lt,
                 T epsilon, T alpha, std::size_t steps, T momentum, std::uint64_t seed) {
    return pgd_batch(view, goal, std::vector<Image<T>>{x}, {lt}, epsilon, alpha, steps, momentum,
                     {seed})[0];
}

// ---------------------------------------------------------------------------
// Attack orchestration

template <typename T>
struct AttackOutcome {
    std::uint64_t image_id = 0;
    std::size_t true_label = 0;
    std::size_t target = 0;  // forgery target (unused for removal)
    bool success = false;
    bool error = false;
    std::size_t predicted = 0;
    double linf = 0.0;
    double psnr_db = 0.0;
    std::size_t iterations = 0;
    T step_size = T(0);
    Image<T> adversarial;
};

/// Uniform draw over the candidate labels excluding the true one.
inline std::size_t select_forgery_target(std::size_t y, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("select_forgery_target: need at least two candidates");
    Rng rng(mix_seed(seed, 0x746172ULL));
    const std::size_t r = rng.below(k - 1);
    return r >= y ? r + 1 : r;
}

/// Runs one gradient-based attack cell: for each image, sweep the step sizes
/// in order and stop at the first candidate the true system accepts.
/// Per-image seeds derive from (spec seed, image id, step size), so the same
/// image attacked under the same step size follows the same trajectory
/// regardless of the surrounding sweep.
template <typename T>
std::vector<AttackOutcome<T>> run_attack_batch(const AttackSpec<T>& spec,
                                               const ModelView<T>& view,
                                               const AttributionModel<T>& system,
                                               const ExtractorAssets<T>& assets,
                                               const std::vector<LabeledImage<T>>& inputs,
                                               const std::vector<std::uint64_t>& image_ids) {
    const std::size_t n = inputs.size();
    const std::size_t k = view.num_classes();
    std::vector<AttackOutcome<T>> outcomes(n);
    std::vector<std::size_t> lt(n);
    for (std::size_t i = 0; i < n; ++i) {
        outcomes[i].image_id = image_ids[i];
        outcomes[i].true_label = inputs[i].label;
        if (spec.goal == AttackGoal::Forgery) {
            lt[i] = select_forgery_target(inputs[i].label, k, mix_seed(spec.seed, image_ids[i]));
            outcomes[i].target = lt[i];
        } else {
            lt[i] = inputs[i].label;
        }
    }

    std::vector<std::size_t> remaining(n);
    for (std::size_t i = 0; i < n; ++i) remaining[i] = i;

    for (const T alpha : spec.step_sizes) {
        if (remaining.empty()) break;
        std::vector<Image<T>> originals;
        std::vector<std::size_t> batch_lt;
        std::vector<std::uint64_t> seeds;
        for (std::size_t i : remaining) {
            originals.push_back(inputs[i].image);
            batch_lt.push_back(lt[i]);
            seeds.push_back(mix_seed(spec.seed, image_ids[i],
                                     double_bits(static_cast<double>(alpha))));
        }
        auto results = pgd_batch(view, spec.goal, originals, batch_lt, spec.epsilon, alpha,
                                 spec.steps, spec.momentum, seeds);

        // verify candidates against the true system
        std::vector<LabeledImage<T>> candidates(remaining.size());
        for (std::size_t b = 0; b < remaining.size(); ++b)
            candidates[b].image = results[b].candidate;
        const auto predicted =
            argmax_rows(system_probabilities(system, candidates, assets));

        std::vector<std::size_t> next;
        for (std::size_t b = 0; b < remaining.size(); ++b) {
            const std::size_t i = remaining[b];
            const bool ok = spec.goal == AttackGoal::Removal
                                ? predicted[b] != inputs[i].label
                                : predicted[b] == lt[i];
            if (results[b].error) outcomes[i].error = true;
            if (ok) {
                outcomes[i].success = true;
                outcomes[i].error = false;
                outcomes[i].predicted = predicted[b];
                outcomes[i].iterations = results[b].iterations;
                outcomes[i].step_size = alpha;
                outcomes[i].linf = linf_distance(inputs[i].image, results[b].candidate);
                outcomes[i].psnr_db = psnr(inputs[i].image, results[b].candidate);
                outcomes[i].adversarial = results[b].candidate;
            } else {
                // keep the last candidate for diagnostics
                outcomes[i].predicted = predicted[b];
                outcomes[i].iterations = results[b].iterations;
                outcomes[i].step_size = alpha;
                outcomes[i].linf = linf_distance(inputs[i].image, results[b].candidate);
                outcomes[i].psnr_db = psnr(inputs[i].image, results[b].candidate);
                next.push_back(i);
            }
        }
        remaining.swap(next);
    }
    return outcomes;
}

/// One fingerprint-agnostic perturbation, removal only.
template <typename T>
AttackOutcome<T> run_b2(const PerturbationSpec<T>& kind, const Image<T>& x, std::size_t y,
                        const AttributionModel<T>& system, const ExtractorAssets<T>& assets,
                        std::uint64_t image_id, std::uint64_t seed, AttackGoal goal) {
    if (goal != AttackGoal::Removal)
        throw ConfigError("run_b2: untargeted perturbations support removal only");
    AttackOutcome<T> out;
    out.image_id = image_id;
    out.true_label = y;
    out.adversarial = apply_perturbation(kind, x, mix_seed(seed, image_id));
    std::vector<LabeledImage<T>> batch(1);
    batch[0].image = out.adversarial;
    out.predicted = argmax_rows(system_probabilities(system, batch, assets))[0];
    out.success = out.predicted != y;
    out.linf = linf_distance(x, out.adversarial);
    out.psnr_db = psnr(x, out.adversarial);
    out.iterations = 1;
    return out;
}

// ---------------------------------------------------------------------------
// Hyperparameter sweeps

enum class SweepAxis { Epsilon, NoiseSigma, BlurSigma, JpegQuality, ResizeScale };

inline const char* sweep_axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::Epsilon: return "epsilon";
        case SweepAxis::NoiseSigma: return "noise_sigma";
        case SweepAxis::BlurSigma: return "blur_sigma";
        case SweepAxis::JpegQuality: return "jpeg_quality";
        case SweepAxis::ResizeScale: return "resize_scale";
    }
    return "?";
}

struct SweepPoint {
    double value = 0.0;
    double asr = 0.0;
    double mean_psnr = 0.0;  // over successes; NaN when no success
    std::size_t successes = 0, attempts = 0;
};

/// ASR/quality curve along one attack-strength axis. The epsilon axis runs
/// the gradient attack from `spec` per value; the remaining axes run the
/// corresponding single-shot perturbation.
template <typename T>
std::vector<SweepPoint> sweep_hyperparameters(SweepAxis axis, const std::vector<double>& values,
                                              const AttackSpec<T>& spec,
                                              const ModelView<T>* view,
                                              const AttributionModel<T>& system,
                                              const ExtractorAssets<T>& assets,
                                              const std::vector<LabeledImage<T>>& inputs,
                                              const std::vector<std::uint64_t>& image_ids) {
    if (values.empty()) throw ConfigError("sweep_hyperparameters: empty value list");
    std::vector<SweepPoint> curve;
    for (const double value : values) {
        SweepPoint pt;
        pt.value = value;
        double psnr_sum = 0.0;
        if (axis == SweepAxis::Epsilon) {
            if (!view) throw ConfigError("sweep_hyperparameters: epsilon axis needs a view");
            AttackSpec<T> s = spec;
            s.epsilon = static_cast<T>(value);
            const auto outcomes = run_attack_batch(s, *view, system, assets, inputs, image_ids);
            pt.attempts = outcomes.size();
            for (const auto& o : outcomes)
                if (o.success) {
                    ++pt.successes;
                    psnr_sum += o.psnr_db;
                }
        } else {
            PerturbationSpec<T> kind;
            switch (axis) {
                case SweepAxis::NoiseSigma: kind.kind = PerturbationKind::Noise; break;
                case SweepAxis::BlurSigma: kind.kind = PerturbationKind::Blur; break;
                case SweepAxis::JpegQuality: kind.kind = PerturbationKind::Jpeg; break;
                case SweepAxis::ResizeScale: kind.kind = PerturbationKind::Resize; break;
                default: break;
            }
            kind.parameter = static_cast<T>(value);
            pt.attempts = inputs.size();
            std::vector<AttackOutcome<T>> outs(inputs.size());
            parallel_for(inputs.size(), [&](std::size_t i) {
                outs[i] = run_b2(kind, inputs[i].image, inputs[i].label, system, assets,
                                 image_ids[i], spec.seed, AttackGoal::Removal);
            });
            for (const auto& o : outs)
                if (o.success) {
                    ++pt.successes;
                    psnr_sum += o.psnr_db;
                }
        }
        pt.asr = pt.attempts ? static_cast<double>(pt.successes) /
                                   static_cast<double>(pt.attempts)
                             : 0.0;
        pt.mean_psnr = pt.successes ? psnr_sum / static_cast<double>(pt.successes)
                                    : std::numeric_limits<double>::quiet_NaN();
        curve.push_back(pt);
    }
    return curve;
}

}  // namespace mfdlab
