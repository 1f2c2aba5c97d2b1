#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qpae/error.hpp"
#include "qpae/matrix.hpp"
#include "qpae/rng.hpp"

namespace qpae {

/// Log clamp shared by cross-entropy and every test oracle that mirrors it.
inline constexpr double kLogClamp = 1e-12;

/// Affine block `out = weightsᵀ·in + bias`. Weights are stored in×out, so
/// column j holds the incoming weights of output unit j.
struct DenseLayer {
    Matrix weights;
    std::vector<double> bias;

    std::size_t in_dim() const noexcept { return weights.rows; }
    std::size_t out_dim() const noexcept { return weights.cols; }

    bool operator==(const DenseLayer&) const = default;
};

/// Feed-forward classifier: zero or more ReLU hidden layers followed by a
/// linear head producing K logits. The head's weights are d×K.
struct Classifier {
    std::vector<DenseLayer> hidden;
    DenseLayer head;

    std::size_t feature_dim() const noexcept {
        return hidden.empty() ? head.in_dim() : hidden.front().in_dim();
    }
    std::size_t hidden_dim() const noexcept { return head.in_dim(); }
    std::size_t num_classes() const noexcept { return head.out_dim(); }

    Matrix& final_weights() noexcept { return head.weights; }
    const Matrix& final_weights() const noexcept { return head.weights; }
    std::vector<double>& final_bias() noexcept { return head.bias; }
    const std::vector<double>& final_bias() const noexcept { return head.bias; }

    bool operator==(const Classifier&) const = default;
};

/// Throws ShapeError when the layer chain is inconsistent or K < 2.
inline void validate(const Classifier& model) {
    std::size_t width = model.feature_dim();
    auto check = [&](const DenseLayer& layer, const char* what) {
        if (layer.weights.data.size() != layer.weights.rows * layer.weights.cols)
            throw ShapeError(std::string(what) + ": weight storage does not match rows*cols");
        if (layer.in_dim() != width) throw ShapeError(std::string(what) + ": input width mismatch");
        if (layer.bias.size() != layer.out_dim()) throw ShapeError(std::string(what) + ": bias length mismatch");
        width = layer.out_dim();
    };
    for (const auto& layer : model.hidden) check(layer, "hidden layer");
    check(model.head, "final layer");
    if (model.num_classes() < 2) throw ShapeError("classifier needs at least two classes");
}

/// He-uniform weights, zero biases.
inline Classifier make_classifier(std::size_t feature_dim, std::span<const std::size_t> hidden_sizes,
                                  std::size_t num_classes, std::uint64_t seed) {
    if (feature_dim == 0) throw ShapeError("feature_dim must be positive");
    if (num_classes < 2) throw ShapeError("classifier needs at least two classes");
    Rng rng(seed);
    auto make_layer = [&](std::size_t in, std::size_t out) {
        DenseLayer layer{Matrix(in, out), std::vector<double>(out, 0.0)};
        const double limit = std::sqrt(6.0 / static_cast<double>(in));
        for (double& w : layer.weights.data) w = rng.uniform(-limit, limit);
        return layer;
    };
    Classifier model;
    std::size_t width = feature_dim;
    for (std::size_t h : hidden_sizes) {
        if (h == 0) throw ShapeError("hidden layer width must be positive");
        model.hidden.push_back(make_layer(width, h));
        width = h;
    }
    model.head = make_layer(width, num_classes);
    return model;
}

inline void affine(const DenseLayer& layer, std::span<const double> in, std::vector<double>& out) {
    out.assign(layer.bias.begin(), layer.bias.end());
    const std::size_t n_out = layer.out_dim();
    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
        const double xi = in[i];
        if (xi == 0.0) continue;
        const double* w = layer.weights.data.data() + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) out[j] += xi * w[j];
    }
}

struct ForwardResult {
    std::vector<double> hidden;  // post-activation output of the last hidden layer (or x itself)
    std::vector<double> logits;
};

/// Every intermediate activation, kept for backpropagation.
struct ForwardTrace {
    std::vector<std::vector<double>> activations;  // [0] = input, [i+1] = ReLU output of hidden[i]
    std::vector<double> logits;
};

inline ForwardTrace forward_trace(const Classifier& model, std::span<const double> x) {
    if (x.size() != model.feature_dim())
        throw ShapeError("forward: input has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(model.feature_dim()));
    ForwardTrace trace;
    trace.activations.reserve(model.hidden.size() + 1);
    trace.activations.emplace_back(x.begin(), x.end());
    for (const auto& layer : model.hidden) {
        std::vector<double> out;
        affine(layer, trace.activations.back(), out);
        for (double& v : out) v = v > 0.0 ? v : 0.0;
        trace.activations.push_back(std::move(out));
    }
    affine(model.head, trace.activations.back(), trace.logits);
    return trace;
}

inline ForwardResult forward(const Classifier& model, std::span<const double> x) {
    auto trace = forward_trace(model, x);
    return {std::move(trace.activations.back()), std::move(trace.logits)};
}

inline std::vector<double> logits(const Classifier& model, std::span<const double> x) {
    return forward_trace(model, x).logits;
}

/// Categorical distribution over K classes.
struct PredictionDistribution {
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }
    double operator[](std::size_t i) const noexcept { return probs[i]; }
};

/// Max-shifted softmax; safe for logits of magnitude up to at least 1e3.
inline PredictionDistribution softmax(std::span<const double> z) {
    PredictionDistribution out;
    out.probs.resize(z.size());
    if (z.empty()) return out;
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out.probs[i] = std::exp(z[i] - zmax);
        total += out.probs[i];
    }
    for (double& p : out.probs) p /= total;
    return out;
}

/// −Σ target_j·log(pred_j + ε).
inline double cross_entropy(const PredictionDistribution& pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw ShapeError("cross_entropy: length mismatch");
    double loss = 0.0;
    for (std::size_t j = 0; j < target.size(); ++j) {
        if (target[j] != 0.0) loss -= target[j] * std::log(pred.probs[j] + kLogClamp);
    }
    return loss;
}

/// Shannon entropy in nats with 0·log 0 = 0.
inline double entropy(const PredictionDistribution& pred) noexcept {
    double h = 0.0;
    for (double p : pred.probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

/// Index of the largest logit; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> v) noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

inline std::size_t predict(const Classifier& model, std::span<const double> x) { return argmax(logits(model, x)); }

// Canonical parameter order: hidden layers first (weights row-major, then
// bias), then the head. Fisher estimates, noise injection and finite
// differences all address parameters through this order.
template <class ModelT, class Fn>
void for_each_parameter(ModelT& model, Fn&& fn) {
    auto visit = [&](auto& layer) {
        for (auto& w : layer.weights.data) fn(w);
        for (auto& b : layer.bias) fn(b);
    };
    for (auto& layer : model.hidden) visit(layer);
    visit(model.head);
}

inline std::size_t parameter_count(const Classifier& model) {
    std::size_t n = 0;
    for_each_parameter(model, [&](const double&) { ++n; });
    return n;
}

inline std::vector<double> flatten(const Classifier& model) {
    std::vector<double> out;
    out.reserve(parameter_count(model));
    for_each_parameter(model, [&](const double& v) { out.push_back(v); });
    return out;
}

inline void unflatten(Classifier& model, std::span<const double> params) {
    if (params.size() != parameter_count(model)) throw ShapeError("unflatten: parameter count mismatch");
    std::size_t i = 0;
    for_each_parameter(model, [&](double& v) { v = params[i++]; });
}

inline bool all_finite(const Classifier& model) {
    bool ok = true;
    for_each_parameter(model, [&](const double& v) { ok = ok && std::isfinite(v); });
    return ok;
}

/// Same architecture as `model`, every parameter zero. Used as a gradient buffer.
inline Classifier zeros_like(const Classifier& model) {
    Classifier out = model;
    for_each_parameter(out, [](double& v) { v = 0.0; });
    return out;
}

}  // namespace qpae
