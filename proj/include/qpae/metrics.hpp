#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "qpae/classifier.hpp"
#include "qpae/dataset.hpp"
#include "qpae/error.hpp"

namespace qpae {

/// Unlearning scorecard. Percentages are in [0, 100]; optional fields are
/// absent when their denominator is empty.
struct EvaluationReport {
    std::optional<double> fa;   // forget accuracy
    std::optional<double> ra;   // retain accuracy
    double il = 0.0;            // mean forget-class probability mass on forget samples
    std::optional<double> per;  // relative drop from the original FA
    std::optional<double> far;  // retain samples predicted into the forget set
    std::optional<double> frr;  // forget samples predicted outside the forget set
    double erb = 0.0;           // harmonic mean of FA and RA
    std::vector<std::optional<double>> per_class;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::size_t n_eval = 0;
    std::size_t n_forget = 0;
    std::size_t n_retain = 0;

    bool operator==(const EvaluationReport&) const = default;
};

/// 2·FA·RA / (FA + RA), or 0 when both are zero.
inline double erb_score(double fa, double ra) noexcept {
    const double denom = fa + ra;
    return denom == 0.0 ? 0.0 : 2.0 * fa * ra / denom;
}

/// (original − current) / original × 100; absent when original is not positive.
inline std::optional<double> privacy_erasure_rate(double original_fa, double fa) noexcept {
    if (!(original_fa > 0.0)) return std::nullopt;
    return (original_fa - fa) / original_fa * 100.0;
}

/// Scores a batch of predictions. `probs[i]` is the softmax output for
/// sample i and `predicted[i]` its top-1 class.
inline EvaluationReport evaluate_predictions(std::span<const std::size_t> truth,
                                             std::span<const std::size_t> predicted,
                                             std::span<const std::vector<double>> probs, std::size_t num_classes,
                                             const ForgetSet& forget, std::optional<double> original_fa) {
    if (truth.size() != predicted.size() || truth.size() != probs.size())
        throw ShapeError("evaluate: prediction arrays differ in length");
    if (truth.empty()) throw ShapeError("evaluate: no samples");
    forget.validate(num_classes);

    EvaluationReport r;
    r.n_eval = truth.size();
    r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    std::size_t forget_correct = 0, forget_rejected = 0, retain_correct = 0, retain_accepted = 0;
    double forget_mass = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const std::size_t y = truth[i], yhat = predicted[i];
        if (y >= num_classes || yhat >= num_classes) throw InvalidClassError("evaluate: class index out of range");
        ++r.confusion[y][yhat];
        if (forget.contains(y)) {
            ++r.n_forget;
            forget_correct += yhat == y;
            forget_rejected += !forget.contains(yhat);
            for (std::size_t c : forget) forget_mass += probs[i][c];
        } else {
            ++r.n_retain;
            retain_correct += yhat == y;
            retain_accepted += forget.contains(yhat);
        }
    }
    auto pct = [](std::size_t num, std::size_t den) { return 100.0 * static_cast<double>(num) / static_cast<double>(den); };
    if (r.n_forget > 0) {
        r.fa = pct(forget_correct, r.n_forget);
        r.frr = pct(forget_rejected, r.n_forget);
        r.il = 100.0 * forget_mass / static_cast<double>(r.n_forget);
    }
    if (r.n_retain > 0) {
        r.ra = pct(retain_correct, r.n_retain);
        r.far = pct(retain_accepted, r.n_retain);
    }
    if (original_fa && r.fa) r.per = privacy_erasure_rate(*original_fa, *r.fa);
    r.erb = erb_score(r.fa.value_or(0.0), r.ra.value_or(0.0));

    r.per_class.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::size_t total = 0;
        for (std::size_t p = 0; p < num_classes; ++p) total += r.confusion[c][p];
        if (total > 0) r.per_class[c] = pct(r.confusion[c][c], total);
    }
    return r;
}

/// Runs the model over `data` and scores it against `forget`.
inline EvaluationReport evaluate(const Classifier& model, const LabeledDataset& data, const ForgetSet& forget,
                                 std::optional<double> original_fa = std::nullopt) {
    if (data.feature_dim != model.feature_dim() || data.num_classes != model.num_classes())
        throw ShapeError("evaluate: dataset shape does not match model");
    std::vector<std::size_t> predicted(data.size());
    std::vector<std::vector<double>> probs(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto z = logits(model, data.features[i]);
        predicted[i] = argmax(z);
        probs[i] = softmax(z).probs;
        for (double p : probs[i])
            if (!std::isfinite(p)) throw NumericError("evaluate: non-finite prediction");
    }
    return evaluate_predictions(data.original_class, predicted, probs, data.num_classes, forget, original_fa);
}

/// Signed change unlearned − original for each metric, plus PER recomputed
/// from the original FA.
struct ReportDelta {
    std::optional<double> fa, ra, far, frr;
    double il = 0.0;
    double erb = 0.0;
    std::optional<double> per;

    bool operator==(const ReportDelta&) const = default;
};

inline ReportDelta compare_reports(const EvaluationReport& original, const EvaluationReport& unlearned) {
    if (original.confusion.size() != unlearned.confusion.size())
        throw ShapeError("compare_reports: class counts differ");
    if (original.n_forget > 0 && unlearned.n_forget > 0 && original.fa.has_value() != unlearned.fa.has_value())
        throw ShapeError("compare_reports: forget splits differ");
    auto diff = [](const std::optional<double>& a, const std::optional<double>& b) -> std::optional<double> {
        if (!a || !b) return std::nullopt;
        return *b - *a;
    };
    ReportDelta d;
    d.fa = diff(original.fa, unlearned.fa);
    d.ra = diff(original.ra, unlearned.ra);
    d.far = diff(original.far, unlearned.far);
    d.frr = diff(original.frr, unlearned.frr);
    d.il = unlearned.il - original.il;
    d.erb = unlearned.erb - original.erb;
    if (original.fa && unlearned.fa) d.per = privacy_erasure_rate(*original.fa, *unlearned.fa);
    return d;
}

}  // namespace qpae
