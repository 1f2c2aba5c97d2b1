#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qpae/classifier.hpp"
#include "qpae/dataset.hpp"
#include "qpae/error.hpp"
#include "qpae/rng.hpp"
#include "qpae/train.hpp"

namespace qpae {

enum class BaselineMethod { gradient_ascent, negative_gradient, fisher_forgetting, synaptic_dampening };

inline std::string_view to_string(BaselineMethod m) noexcept {
    switch (m) {
        case BaselineMethod::gradient_ascent: return "gradient_ascent";
        case BaselineMethod::negative_gradient: return "negative_gradient";
        case BaselineMethod::fisher_forgetting: return "fisher_forgetting";
        case BaselineMethod::synaptic_dampening: return "synaptic_dampening";
    }
    return "unknown";
}

inline std::optional<BaselineMethod> parse_baseline_method(std::string_view s) noexcept {
    for (auto m : {BaselineMethod::gradient_ascent, BaselineMethod::negative_gradient,
                   BaselineMethod::fisher_forgetting, BaselineMethod::synaptic_dampening})
        if (s == to_string(m)) return m;
    return std::nullopt;
}

struct BaselineConfig {
    BaselineMethod method = BaselineMethod::gradient_ascent;
    std::size_t ascent_epochs = 10;
    std::size_t finetune_epochs = 1;
    double learning_rate = 0.5;
    std::size_t batch_size = 32;
    double fisher_noise_scale = 1e-3;   // γ
    double ssd_threshold = 10.0;        // τ, selection ratio F_forget / F_full
    double ssd_dampening_floor = 1.0;   // scales β = min(floor·F_full/F_forget, 1)
    std::uint64_t seed = 11;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
        if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
        if (!(fisher_noise_scale >= 0.0)) throw ConfigError("fisher_noise_scale must be >= 0");
        if (!(ssd_threshold > 0.0)) throw ConfigError("ssd_threshold must be > 0");
        if (!(ssd_dampening_floor >= 0.0)) throw ConfigError("ssd_dampening_floor must be >= 0");
    }

    TrainConfig train_config(std::size_t epochs, std::uint64_t salt) const {
        return {learning_rate, epochs, batch_size, seed ^ salt, true};
    }

    bool operator==(const BaselineConfig&) const = default;
};

/// Fisher information ratios are regularized by this ε.
inline constexpr double kFisherEpsilon = 1e-8;

/// SGD ascent on cross-entropy over forget samples, then CE fine-tuning on
/// retained samples.
inline Classifier gradient_ascent_unlearn(Classifier model, const LabeledDataset& data, const ForgetSet& forget,
                                          const BaselineConfig& cfg) {
    cfg.validate();
    const auto forget_split = data.filter(forget, true);
    if (forget_split.empty()) return model;
    train(model, forget_split, cfg.train_config(cfg.ascent_epochs, 0x41), negated(cross_entropy_loss()));
    if (cfg.finetune_epochs > 0)
        train(model, data.filter(forget, false), cfg.train_config(cfg.finetune_epochs, 0x46), cross_entropy_loss());
    return model;
}

/// Ascent on the forget samples only, with no repair pass.
inline Classifier negative_gradient_unlearn(Classifier model, const LabeledDataset& data, const ForgetSet& forget,
                                            const BaselineConfig& cfg) {
    BaselineConfig ascent_only = cfg;
    ascent_only.finetune_epochs = 0;
    return gradient_ascent_unlearn(std::move(model), data, forget, ascent_only);
}

/// Diagonal empirical Fisher: per-parameter mean of squared CE gradients, in
/// canonical parameter order.
inline std::vector<double> estimate_diag_fisher(const Classifier& model, const LabeledDataset& samples) {
    if (samples.empty()) throw ShapeError("estimate_diag_fisher: no samples");
    const auto loss = cross_entropy_loss();
    std::vector<double> fisher(parameter_count(model), 0.0);
    Classifier grad = zeros_like(model);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for_each_parameter(grad, [](double& g) { g = 0.0; });
        accumulate_gradient(model, samples.features[i], samples.labels[i], samples.original_class[i], loss, grad);
        std::size_t p = 0;
        for_each_parameter(grad, [&](const double& g) { fisher[p++] += g * g; });
    }
    for (double& f : fisher) f /= static_cast<double>(samples.size());
    return fisher;
}

/// Gaussian scrubbing with σ_p = γ·√(F_forget,p / (F_retain,p + ε)).
inline Classifier fisher_forgetting(Classifier model, const LabeledDataset& data, const ForgetSet& forget,
                                    const BaselineConfig& cfg) {
    cfg.validate();
    if (cfg.fisher_noise_scale == 0.0) return model;
    const auto forget_split = data.filter(forget, true);
    const auto retain_split = data.filter(forget, false);
    if (forget_split.empty()) return model;
    const auto f_forget = estimate_diag_fisher(model, forget_split);
    const auto f_retain = retain_split.empty() ? std::vector<double>(f_forget.size(), 0.0)
                                               : estimate_diag_fisher(model, retain_split);
    Rng rng(cfg.seed);
    std::size_t p = 0;
    for_each_parameter(model, [&](double& v) {
        const double sigma = cfg.fisher_noise_scale * std::sqrt(f_forget[p] / (f_retain[p] + kFisherEpsilon));
        v += sigma * rng.normal();
        ++p;
    });
    if (!all_finite(model)) throw NumericError("fisher_forgetting produced non-finite parameters");
    return model;
}

/// Selective dampening: parameters whose forget importance exceeds τ times
/// their full-data importance are shrunk by β = min(floor·F_full/F_forget, 1).
inline Classifier synaptic_dampening(Classifier model, const LabeledDataset& data, const ForgetSet& forget,
                                     const BaselineConfig& cfg) {
    cfg.validate();
    const auto forget_split = data.filter(forget, true);
    if (forget_split.empty()) return model;
    const auto f_forget = estimate_diag_fisher(model, forget_split);
    const auto f_full = estimate_diag_fisher(model, data);
    std::size_t p = 0;
    for_each_parameter(model, [&](double& v) {
        const double ff = f_forget[p], fd = f_full[p];
        ++p;
        if (ff > cfg.ssd_threshold * fd) {
            const double beta = std::min(cfg.ssd_dampening_floor * fd / ff, 1.0);
            v *= beta;
        }
    });
    return model;
}

inline Classifier run_baseline(const Classifier& model, const LabeledDataset& data, const ForgetSet& forget,
                               const BaselineConfig& cfg) {
    forget.validate(model.num_classes());
    switch (cfg.method) {
        case BaselineMethod::gradient_ascent: return gradient_ascent_unlearn(model, data, forget, cfg);
        case BaselineMethod::negative_gradient: return negative_gradient_unlearn(model, data, forget, cfg);
        case BaselineMethod::fisher_forgetting: return fisher_forgetting(model, data, forget, cfg);
        case BaselineMethod::synaptic_dampening: return synaptic_dampening(model, data, forget, cfg);
    }
    throw ConfigError("unknown baseline method");
}

}  // namespace qpae
