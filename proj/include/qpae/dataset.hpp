#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qpae/error.hpp"
#include "qpae/rng.hpp"

namespace qpae {

/// Sorted, duplicate-free set of class indices to erase.
class ForgetSet {
public:
    ForgetSet() = default;
    ForgetSet(std::initializer_list<std::size_t> classes) : ForgetSet(std::vector<std::size_t>(classes)) {}
    explicit ForgetSet(std::vector<std::size_t> classes) : classes_(std::move(classes)) {
        std::sort(classes_.begin(), classes_.end());
        classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    }

    bool contains(std::size_t c) const noexcept { return std::binary_search(classes_.begin(), classes_.end(), c); }
    bool empty() const noexcept { return classes_.empty(); }
    std::size_t size() const noexcept { return classes_.size(); }
    const std::vector<std::size_t>& classes() const noexcept { return classes_; }
    auto begin() const noexcept { return classes_.begin(); }
    auto end() const noexcept { return classes_.end(); }

    ForgetSet united(const ForgetSet& other) const {
        std::vector<std::size_t> all = classes_;
        all.insert(all.end(), other.classes_.begin(), other.classes_.end());
        return ForgetSet(std::move(all));
    }

    /// Forget sets must be a non-empty proper subset of [0, K).
    void validate(std::size_t num_classes) const {
        if (classes_.empty()) throw InvalidClassError("forget set is empty");
        if (classes_.back() >= num_classes)
            throw InvalidClassError("forget class " + std::to_string(classes_.back()) + " is outside [0, " +
                                    std::to_string(num_classes) + ")");
        if (classes_.size() >= num_classes) throw InvalidClassError("forget set must leave at least one class");
    }

    bool operator==(const ForgetSet&) const = default;

private:
    std::vector<std::size_t> classes_;
};

/// Feature vectors with soft-label targets. `original_class` survives label
/// rewriting so forget/retain membership is always recoverable.
struct LabeledDataset {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    std::vector<std::vector<double>> features;
    std::vector<std::vector<double>> labels;
    std::vector<std::size_t> original_class;

    std::size_t size() const noexcept { return features.size(); }
    bool empty() const noexcept { return features.empty(); }

    void add(std::vector<double> x, std::size_t cls) {
        if (cls >= num_classes) throw InvalidClassError("sample class " + std::to_string(cls) + " >= K");
        if (x.size() != feature_dim) throw ShapeError("sample feature width mismatch");
        std::vector<double> y(num_classes, 0.0);
        y[cls] = 1.0;
        features.push_back(std::move(x));
        labels.push_back(std::move(y));
        original_class.push_back(cls);
    }

    std::size_t count_in(const ForgetSet& forget) const {
        return static_cast<std::size_t>(std::count_if(original_class.begin(), original_class.end(),
                                                      [&](std::size_t c) { return forget.contains(c); }));
    }

    std::size_t count_of(std::size_t cls) const {
        return static_cast<std::size_t>(std::count(original_class.begin(), original_class.end(), cls));
    }

    /// Samples at the given positions, in that order.
    LabeledDataset subset(std::span<const std::size_t> indices) const {
        LabeledDataset out{num_classes, feature_dim, {}, {}, {}};
        out.features.reserve(indices.size());
        for (std::size_t i : indices) {
            out.features.push_back(features.at(i));
            out.labels.push_back(labels.at(i));
            out.original_class.push_back(original_class.at(i));
        }
        return out;
    }

    /// Samples whose original class is (or is not) in `forget`.
    LabeledDataset filter(const ForgetSet& forget, bool keep_forgotten) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < size(); ++i)
            if (forget.contains(original_class[i]) == keep_forgotten) idx.push_back(i);
        return subset(idx);
    }

    void validate() const {
        if (num_classes < 2) throw ShapeError("dataset needs at least two classes");
        if (labels.size() != features.size() || original_class.size() != features.size())
            throw ShapeError("dataset columns have different lengths");
        for (std::size_t i = 0; i < size(); ++i) {
            if (features[i].size() != feature_dim) throw ShapeError("dataset feature width mismatch");
            if (labels[i].size() != num_classes) throw ShapeError("dataset label width mismatch");
            if (original_class[i] >= num_classes) throw InvalidClassError("dataset class index out of range");
            const double total = std::accumulate(labels[i].begin(), labels[i].end(), 0.0);
            if (std::abs(total - 1.0) > 1e-9) throw ShapeError("dataset label does not sum to 1");
        }
    }

    bool operator==(const LabeledDataset&) const = default;
};

struct TrainTestSplit {
    LabeledDataset train;
    LabeledDataset test;
};

/// Seeded per-class split so every class keeps the same train/test ratio.
inline TrainTestSplit stratified_split(const LabeledDataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    Rng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t c = 0; c < data.num_classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (data.original_class[i] == c) idx.push_back(i);
        rng.shuffle(std::span<std::size_t>(idx));
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {data.subset(train_idx), data.subset(test_idx)};
}

/// Per-feature z-scoring fitted on one dataset and applied to others.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const LabeledDataset& data) {
        Standardizer s{std::vector<double>(data.feature_dim, 0.0), std::vector<double>(data.feature_dim, 1.0)};
        if (data.empty()) return s;
        const double n = static_cast<double>(data.size());
        for (const auto& x : data.features)
            for (std::size_t j = 0; j < x.size(); ++j) s.mean[j] += x[j];
        for (double& m : s.mean) m /= n;
        std::vector<double> var(data.feature_dim, 0.0);
        for (const auto& x : data.features)
            for (std::size_t j = 0; j < x.size(); ++j) var[j] += (x[j] - s.mean[j]) * (x[j] - s.mean[j]);
        for (std::size_t j = 0; j < var.size(); ++j) {
            const double sd = std::sqrt(var[j] / n);
            s.scale[j] = sd > 1e-8 ? 1.0 / sd : 1.0;
        }
        return s;
    }

    void apply(LabeledDataset& data) const {
        if (data.feature_dim != mean.size()) throw ShapeError("standardizer width mismatch");
        for (auto& x : data.features)
            for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - mean[j]) * scale[j];
    }
};

}  // namespace qpae
