#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qpae/classifier.hpp"
#include "qpae/dataset.hpp"
#include "qpae/error.hpp"
#include "qpae/matrix.hpp"
#include "qpae/train.hpp"

namespace qpae {

/// Hyperparameters of the four-phase eraser plus ablation switches.
struct UnlearnConfig {
    ForgetSet forget;
    double phi = std::numbers::pi;  // phase angle of the interference transform
    double lambda = 1.0;            // entropy weight on forget samples
    double alpha = 0.3;             // mixing strength between forgotten and retained columns
    std::size_t epochs = 5;
    TrainConfig train{};

    bool skip_interference = false;
    bool skip_superposition = false;
    bool skip_uncertainty = false;
    bool skip_mixing = false;

    void validate(std::size_t num_classes) const {
        forget.validate(num_classes);
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
        if (!std::isfinite(phi)) throw ConfigError("phi must be finite");
        train.validate();
    }

    bool operator==(const UnlearnConfig&) const = default;
};

// Phase 1 ------------------------------------------------------------------

/// Scales each forgotten head column by cos(φ)/√2 and its bias by cos(φ).
/// Every other parameter is left untouched.
inline void interference_transform(Classifier& model, const ForgetSet& forget, double phi) {
    const std::size_t k = model.num_classes();
    for (std::size_t c : forget)
        if (c >= k) throw InvalidClassError("forget class " + std::to_string(c) + " >= K");
    const double c_phi = std::cos(phi);
    Matrix& w = model.final_weights();
    for (std::size_t c : forget) {
        for (std::size_t i = 0; i < w.rows; ++i) w(i, c) = w(i, c) * c_phi / std::numbers::sqrt2;
        model.final_bias()[c] *= c_phi;
    }
}

/// Mean over forget samples of σ(z)_F − σ(z̃)_F, where the forget mass sums
/// over every class in `forget`.
inline double suppression_check(const Classifier& before, const Classifier& after, const LabeledDataset& samples,
                                const ForgetSet& forget) {
    if (before.num_classes() != after.num_classes() || before.feature_dim() != after.feature_dim())
        throw ShapeError("suppression_check: models differ in shape");
    if (samples.empty()) throw ShapeError("suppression_check: no samples");
    auto mass = [&](const Classifier& m, std::span<const double> x) {
        const auto p = softmax(logits(m, x));
        double s = 0.0;
        for (std::size_t c : forget) s += p[c];
        return s;
    };
    double total = 0.0;
    for (const auto& x : samples.features) total += mass(before, x) - mass(after, x);
    return total / static_cast<double>(samples.size());
}

// Phase 2 ------------------------------------------------------------------

/// Forgotten samples get the uniform label; everything else is copied as is.
inline LabeledDataset superpose_labels(const LabeledDataset& data, const ForgetSet& forget) {
    LabeledDataset out = data;
    const double u = 1.0 / static_cast<double>(data.num_classes);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (forget.contains(out.original_class[i])) out.labels[i].assign(data.num_classes, u);
    return out;
}

// Phase 3 ------------------------------------------------------------------

/// Cross-entropy on retained samples, −λ·H(pred) on forgotten ones, so that
/// descent drives forgotten predictions towards uniform.
inline double quantum_loss(const PredictionDistribution& pred, std::span<const double> target,
                           std::size_t original_class, const ForgetSet& forget, double lambda) {
    if (forget.contains(original_class)) return -lambda * entropy(pred);
    return cross_entropy(pred, target);
}

/// ∂quantum_loss/∂z. Forget branch: λ·p_k·(log p_k + H(p)); retained: p − target.
inline std::vector<double> quantum_loss_logit_grad(const PredictionDistribution& pred, std::span<const double> target,
                                                   std::size_t original_class, const ForgetSet& forget,
                                                   double lambda) {
    std::vector<double> g(pred.size());
    if (forget.contains(original_class)) {
        const double h = entropy(pred);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double p = pred[k];
            g[k] = p > 0.0 ? lambda * p * (std::log(p) + h) : 0.0;
        }
    } else {
        if (target.size() != pred.size()) throw ShapeError("quantum_loss_logit_grad: target length mismatch");
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = pred[k] - target[k];
    }
    return g;
}

inline LossFn quantum_loss_fn(ForgetSet forget, double lambda) {
    return [forget = std::move(forget), lambda](std::span<const double> z, std::span<const double> target,
                                                std::size_t cls) {
        const auto pred = softmax(z);
        return LossEval{quantum_loss(pred, target, cls, forget, lambda),
                        quantum_loss_logit_grad(pred, target, cls, forget, lambda)};
    };
}

// Phase 4 ------------------------------------------------------------------

/// K×K mixing matrix: unit diagonal, α wherever exactly one of (i, j) is
/// forgotten, zero elsewhere (including between two forgotten classes).
inline Matrix build_mixing_matrix(std::size_t num_classes, const ForgetSet& forget, double alpha) {
    forget.validate(num_classes);
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    Matrix m = Matrix::identity(num_classes);
    for (std::size_t i = 0; i < num_classes; ++i)
        for (std::size_t j = 0; j < num_classes; ++j)
            if (i != j && forget.contains(i) != forget.contains(j)) m(i, j) = alpha;
    return m;
}

/// W ← W·M on the head; biases and hidden layers are not touched.
inline void apply_mixing(Classifier& model, const Matrix& mixing) {
    const std::size_t k = model.num_classes();
    if (mixing.rows != k || mixing.cols != k) throw ShapeError("mixing matrix must be KxK");
    model.final_weights() = matmul(model.final_weights(), mixing);
}

// Pipeline -----------------------------------------------------------------

struct PhaseLogEntry {
    std::string phase;
    double forget_accuracy = 0.0;
    double retain_accuracy = 0.0;
    double wall_ms = 0.0;
};

struct QpResult {
    Classifier model;
    std::vector<PhaseLogEntry> log;
    TrainLog phase3;
};

/// Runs interference, superposition, entropy-maximizing retraining on the
/// full relabeled set, and mixing, in that fixed order. `eval` (defaulting to
/// `data`) is used for the per-phase accuracy snapshots.
inline QpResult run_qp_audio_eraser(Classifier model, const LabeledDataset& data, const UnlearnConfig& cfg,
                                    const LabeledDataset* eval = nullptr) {
    validate(model);
    cfg.validate(model.num_classes());
    if (data.num_classes != model.num_classes() || data.feature_dim != model.feature_dim())
        throw ShapeError("run_qp_audio_eraser: dataset shape does not match model");
    const LabeledDataset& probe = eval ? *eval : data;
    const auto forget_split = probe.filter(cfg.forget, true);
    const auto retain_split = probe.filter(cfg.forget, false);

    QpResult result{std::move(model), {}, {}};
    auto snapshot = [&](std::string name, double ms) {
        result.log.push_back({std::move(name), accuracy(result.model, forget_split),
                              accuracy(result.model, retain_split), ms});
    };
    using Clock = std::chrono::steady_clock;
    auto timed = [&](auto&& fn) {
        const auto t0 = Clock::now();
        fn();
        return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    };

    snapshot("original", 0.0);
    if (!cfg.skip_interference)
        snapshot("interference", timed([&] { interference_transform(result.model, cfg.forget, cfg.phi); }));

    LabeledDataset relabeled;
    const LabeledDataset* phase3_data = &data;
    if (!cfg.skip_superposition) {
        snapshot("superposition", timed([&] { relabeled = superpose_labels(data, cfg.forget); }));
        phase3_data = &relabeled;
    }
    if (!cfg.skip_uncertainty) {
        TrainConfig tc = cfg.train;
        tc.epochs = cfg.epochs;
        const auto loss = quantum_loss_fn(cfg.forget, cfg.lambda);
        snapshot("uncertainty", timed([&] { result.phase3 = train(result.model, *phase3_data, tc, loss); }));
    }
    if (!cfg.skip_mixing) {
        snapshot("mixing", timed([&] {
                     apply_mixing(result.model, build_mixing_matrix(result.model.num_classes(), cfg.forget,
                                                                    cfg.alpha));
                 }));
    }
    if (!all_finite(result.model)) throw NumericError("unlearning produced non-finite parameters");
    return result;
}

}  // namespace qpae
