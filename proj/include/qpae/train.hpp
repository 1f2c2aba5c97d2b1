#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qpae/classifier.hpp"
#include "qpae/dataset.hpp"
#include "qpae/error.hpp"
#include "qpae/rng.hpp"

namespace qpae {

/// Per-sample loss value and its gradient with respect to the logits.
struct LossEval {
    double value = 0.0;
    std::vector<double> logit_grad;
};

/// A loss sees the logits, the (possibly soft) target and the sample's
/// original class, which is what class-conditional losses dispatch on.
using LossFn = std::function<LossEval(std::span<const double> logits, std::span<const double> target,
                                      std::size_t original_class)>;

/// Soft-target cross-entropy. The logit gradient is p − target, exact for
/// targets summing to one up to the ε clamp.
inline LossFn cross_entropy_loss() {
    return [](std::span<const double> z, std::span<const double> target, std::size_t) {
        const auto pred = softmax(z);
        LossEval out{cross_entropy(pred, target), pred.probs};
        for (std::size_t j = 0; j < target.size(); ++j) out.logit_grad[j] -= target[j];
        return out;
    };
}

/// Flips the sign of a loss, turning descent into ascent.
inline LossFn negated(LossFn inner) {
    return [inner = std::move(inner)](std::span<const double> z, std::span<const double> target, std::size_t cls) {
        auto out = inner(z, target, cls);
        out.value = -out.value;
        for (double& g : out.logit_grad) g = -g;
        return out;
    };
}

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    bool shuffle = true;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("learning_rate must be a finite non-negative number");
        if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    }

    bool operator==(const TrainConfig&) const = default;
};

struct TrainLog {
    std::vector<double> epoch_loss;  // mean per-sample loss in each epoch
    std::vector<std::string> warnings;
};

/// Adds ∂loss/∂θ for one sample into `grad` (shaped like `model`) and
/// returns the loss value.
inline double accumulate_gradient(const Classifier& model, std::span<const double> x, std::span<const double> target,
                                  std::size_t original_class, const LossFn& loss, Classifier& grad) {
    const auto trace = forward_trace(model, x);
    const auto eval = loss(trace.logits, target, original_class);

    std::vector<double> delta = eval.logit_grad;
    auto backward = [&](const DenseLayer& layer, DenseLayer& layer_grad, const std::vector<double>& input,
                        bool propagate) {
        const std::size_t n_out = layer.out_dim();
        for (std::size_t j = 0; j < n_out; ++j) layer_grad.bias[j] += delta[j];
        std::vector<double> upstream(propagate ? layer.in_dim() : 0, 0.0);
        for (std::size_t i = 0; i < layer.in_dim(); ++i) {
            const double a = input[i];
            const double* w = layer.weights.data.data() + i * n_out;
            double* gw = layer_grad.weights.data.data() + i * n_out;
            if (a != 0.0)
                for (std::size_t j = 0; j < n_out; ++j) gw[j] += a * delta[j];
            if (propagate && a > 0.0) {  // ReLU gate; inputs to hidden layers are post-ReLU
                double s = 0.0;
                for (std::size_t j = 0; j < n_out; ++j) s += w[j] * delta[j];
                upstream[i] = s;
            }
        }
        delta = std::move(upstream);
    };

    const std::size_t n_hidden = model.hidden.size();
    backward(model.head, grad.head, trace.activations[n_hidden], n_hidden > 0);
    for (std::size_t l = n_hidden; l-- > 0;) backward(model.hidden[l], grad.hidden[l], trace.activations[l], l > 0);
    return eval.value;
}

/// Loss value and full parameter gradient for a single sample.
inline std::pair<double, Classifier> loss_and_gradient(const Classifier& model, std::span<const double> x,
                                                       std::span<const double> target, std::size_t original_class,
                                                       const LossFn& loss) {
    Classifier grad = zeros_like(model);
    const double value = accumulate_gradient(model, x, target, original_class, loss, grad);
    return {value, std::move(grad)};
}

inline double loss_value(const Classifier& model, std::span<const double> x, std::span<const double> target,
                         std::size_t original_class, const LossFn& loss) {
    const auto z = logits(model, x);
    return loss(z, target, original_class).value;
}

/// Mini-batch SGD without momentum. The seed fully determines the visiting
/// order, so equal inputs give bit-identical parameters.
inline TrainLog train(Classifier& model, const LabeledDataset& data, const TrainConfig& cfg, const LossFn& loss) {
    cfg.validate();
    TrainLog log;
    if (data.empty()) {
        log.warnings.emplace_back("empty dataset; training skipped");
        return log;
    }
    if (data.feature_dim != model.feature_dim() || data.num_classes != model.num_classes())
        throw ShapeError("train: dataset shape does not match model");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    Classifier grad = zeros_like(model);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (cfg.shuffle) rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            for_each_parameter(grad, [](double& g) { g = 0.0; });
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                total += accumulate_gradient(model, data.features[i], data.labels[i], data.original_class[i], loss,
                                             grad);
            }
            const double step = cfg.learning_rate / static_cast<double>(stop - start);
            auto g = flatten(grad);
            std::size_t p = 0;
            for_each_parameter(model, [&](double& v) { v -= step * g[p++]; });
        }
        log.epoch_loss.push_back(total / static_cast<double>(data.size()));
    }
    if (!all_finite(model)) throw NumericError("training produced non-finite parameters");
    return log;
}

/// Central-difference audit of the analytic gradient. Returns
/// max |g_a − g_fd| / max(1, |g_a|, |g_fd|) over every parameter.
inline double gradient_check(const Classifier& model, std::span<const double> x, std::span<const double> target,
                             std::size_t original_class, const LossFn& loss, double step = 1e-5) {
    const auto analytic = flatten(loss_and_gradient(model, x, target, original_class, loss).second);
    Classifier probe = model;
    std::vector<double*> slots;
    for_each_parameter(probe, [&](double& v) { slots.push_back(&v); });

    double worst = 0.0;
    for (std::size_t p = 0; p < slots.size(); ++p) {
        const double saved = *slots[p];
        *slots[p] = saved + step;
        const double up = loss_value(probe, x, target, original_class, loss);
        *slots[p] = saved - step;
        const double down = loss_value(probe, x, target, original_class, loss);
        *slots[p] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double denom = std::max({1.0, std::abs(analytic[p]), std::abs(fd)});
        worst = std::max(worst, std::abs(analytic[p] - fd) / denom);
    }
    return worst;
}

/// Top-1 accuracy in percent; NaN-free, returns 0 on an empty set.
inline double accuracy(const Classifier& model, const LabeledDataset& data) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (predict(model, data.features[i]) == data.original_class[i]) ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace qpae
