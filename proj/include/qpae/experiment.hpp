#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "qpae/baselines.hpp"
#include "qpae/checkpoint.hpp"
#include "qpae/classifier.hpp"
#include "qpae/dataset.hpp"
#include "qpae/metrics.hpp"
#include "qpae/report.hpp"
#include "qpae/synth.hpp"
#include "qpae/train.hpp"
#include "qpae/unlearn_qp.hpp"

namespace qpae {

enum class Scenario { single, multi, sequential, ablation };

inline std::string_view to_string(Scenario s) noexcept {
    switch (s) {
        case Scenario::single: return "single";
        case Scenario::multi: return "multi";
        case Scenario::sequential: return "sequential";
        case Scenario::ablation: return "ablation";
    }
    return "unknown";
}

struct DatasetConfig {
    std::string source = "synthetic";  // "synthetic" or "manifest"
    SynthSpec synth{};                 // synth.seed is overwritten by the experiment seed
    std::string manifest;              // directory holding labels.csv
    double test_fraction = 0.2;

    bool operator==(const DatasetConfig&) const = default;
};

struct ExperimentConfig {
    std::uint64_t seed = 7;
    DatasetConfig dataset{};
    std::vector<std::size_t> hidden{64};
    TrainConfig train{0.05, 20, 32, 1, true};
    UnlearnConfig unlearn = default_unlearn();
    std::vector<BaselineConfig> baselines = default_baselines();
    Scenario scenario = Scenario::single;
    std::vector<ForgetSet> sequential_requests;
    std::string output_dir = "out";

    static UnlearnConfig default_unlearn() {
        UnlearnConfig u;
        u.forget = ForgetSet{0};
        u.train = TrainConfig{0.05, 5, 32, 3, true};
        return u;
    }

    static std::vector<BaselineConfig> default_baselines() {
        std::vector<BaselineConfig> out;
        for (auto m : {BaselineMethod::gradient_ascent, BaselineMethod::negative_gradient,
                       BaselineMethod::fisher_forgetting, BaselineMethod::synaptic_dampening}) {
            BaselineConfig b;
            b.method = m;
            out.push_back(b);
        }
        return out;
    }

    std::size_t num_classes() const noexcept { return dataset.synth.num_classes; }

    void validate() const {
        if (dataset.source != "synthetic" && dataset.source != "manifest")
            throw ConfigError("dataset.source must be 'synthetic' or 'manifest'");
        if (dataset.source == "manifest" && dataset.manifest.empty())
            throw ConfigError("dataset.manifest is required for manifest datasets");
        dataset.synth.validate();
        if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0))
            throw ConfigError("dataset.test_fraction must lie in (0, 1)");
        for (std::size_t h : hidden)
            if (h == 0) throw ConfigError("model.hidden widths must be positive");
        train.validate();
        unlearn.validate(num_classes());
        for (const auto& b : baselines) b.validate();
        if (scenario == Scenario::sequential) {
            if (sequential_requests.empty()) throw ConfigError("sequential scenario needs sequential_requests");
            ForgetSet all;
            for (const auto& r : sequential_requests) {
                r.validate(num_classes());
                all = all.united(r);
            }
            all.validate(num_classes());
        }
    }

    bool operator==(const ExperimentConfig&) const = default;
};

// JSON ----------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
    }
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline ForgetSet forget_from_json(const nlohmann::json& j) {
    try {
        return ForgetSet(j.get<std::vector<std::size_t>>());
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("forget sets must be arrays of non-negative class ids");
    }
}

inline nlohmann::json train_to_json(const TrainConfig& t) {
    return {{"learning_rate", t.learning_rate},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"seed", t.seed},
            {"shuffle", t.shuffle}};
}

inline TrainConfig train_from_json(const nlohmann::json& j, TrainConfig t) {
    reject_unknown_keys(j, {"learning_rate", "epochs", "batch_size", "seed", "shuffle"}, "train");
    read_opt(j, "learning_rate", t.learning_rate);
    read_opt(j, "epochs", t.epochs);
    read_opt(j, "batch_size", t.batch_size);
    read_opt(j, "seed", t.seed);
    read_opt(j, "shuffle", t.shuffle);
    return t;
}

inline nlohmann::json baseline_to_json(const BaselineConfig& b) {
    return {{"method", std::string(to_string(b.method))},
            {"ascent_epochs", b.ascent_epochs},
            {"finetune_epochs", b.finetune_epochs},
            {"learning_rate", b.learning_rate},
            {"batch_size", b.batch_size},
            {"fisher_noise_scale", b.fisher_noise_scale},
            {"ssd_threshold", b.ssd_threshold},
            {"ssd_dampening_floor", b.ssd_dampening_floor},
            {"seed", b.seed}};
}

inline BaselineConfig baseline_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"method", "ascent_epochs", "finetune_epochs", "learning_rate", "batch_size",
                         "fisher_noise_scale", "ssd_threshold", "ssd_dampening_floor", "seed"},
                        "baselines[]");
    BaselineConfig b;
    std::string method = std::string(to_string(b.method));
    read_opt(j, "method", method);
    const auto parsed = parse_baseline_method(method);
    if (!parsed) throw ConfigError("unknown baseline method '" + method + "'");
    b.method = *parsed;
    read_opt(j, "ascent_epochs", b.ascent_epochs);
    read_opt(j, "finetune_epochs", b.finetune_epochs);
    read_opt(j, "learning_rate", b.learning_rate);
    read_opt(j, "batch_size", b.batch_size);
    read_opt(j, "fisher_noise_scale", b.fisher_noise_scale);
    read_opt(j, "ssd_threshold", b.ssd_threshold);
    read_opt(j, "ssd_dampening_floor", b.ssd_dampening_floor);
    read_opt(j, "seed", b.seed);
    return b;
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
    const auto& s = c.dataset.synth;
    const auto& u = c.unlearn;
    nlohmann::json requests = nlohmann::json::array();
    for (const auto& r : c.sequential_requests) requests.push_back(r.classes());
    nlohmann::json baselines = nlohmann::json::array();
    for (const auto& b : c.baselines) baselines.push_back(detail::baseline_to_json(b));
    return {
        {"seed", c.seed},
        {"dataset",
         {{"source", c.dataset.source},
          {"manifest", c.dataset.manifest},
          {"test_fraction", c.dataset.test_fraction},
          {"num_classes", s.num_classes},
          {"per_class", s.per_class},
          {"base_hz", s.base_hz},
          {"spacing_hz", s.spacing_hz},
          {"jitter", s.jitter},
          {"noise_sigma", s.noise_sigma},
          {"duration_s", s.duration_s},
          {"sample_rate", s.sample_rate},
          {"n_fft", s.spectrogram.n_fft},
          {"hop", s.spectrogram.hop},
          {"n_mels", s.spectrogram.n_mels},
          {"target_frames", s.spectrogram.target_frames}}},
        {"model", {{"hidden", c.hidden}}},
        {"train", detail::train_to_json(c.train)},
        {"unlearn",
         {{"forget", u.forget.classes()},
          {"phi", u.phi},
          {"lambda", u.lambda},
          {"alpha", u.alpha},
          {"epochs", u.epochs},
          {"train", detail::train_to_json(u.train)},
          {"skip_interference", u.skip_interference},
          {"skip_superposition", u.skip_superposition},
          {"skip_uncertainty", u.skip_uncertainty},
          {"skip_mixing", u.skip_mixing}}},
        {"baselines", baselines},
        {"scenario", std::string(to_string(c.scenario))},
        {"sequential_requests", requests},
        {"output_dir", c.output_dir},
    };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::read_opt;
    detail::reject_unknown_keys(j,
                                {"seed", "dataset", "model", "train", "unlearn", "baselines", "scenario",
                                 "sequential_requests", "output_dir"},
                                "config");
    ExperimentConfig c;
    read_opt(j, "seed", c.seed);
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        detail::reject_unknown_keys(d,
                                    {"source", "profile", "manifest", "test_fraction", "num_classes", "per_class",
                                     "base_hz", "spacing_hz", "jitter", "noise_sigma", "duration_s", "sample_rate",
                                     "n_fft", "hop", "n_mels", "target_frames"},
                                    "dataset");
        auto& s = c.dataset.synth;
        if (d.contains("profile")) {
            const auto profile = d.at("profile").get<std::string>();
            if (profile == "accent") s = SynthSpec::accent_profile();
            else if (profile != "tones") throw ConfigError("dataset.profile must be 'tones' or 'accent'");
        }
        read_opt(d, "source", c.dataset.source);
        read_opt(d, "manifest", c.dataset.manifest);
        read_opt(d, "test_fraction", c.dataset.test_fraction);
        read_opt(d, "num_classes", s.num_classes);
        read_opt(d, "per_class", s.per_class);
        read_opt(d, "base_hz", s.base_hz);
        read_opt(d, "spacing_hz", s.spacing_hz);
        read_opt(d, "jitter", s.jitter);
        read_opt(d, "noise_sigma", s.noise_sigma);
        read_opt(d, "duration_s", s.duration_s);
        read_opt(d, "sample_rate", s.sample_rate);
        read_opt(d, "n_fft", s.spectrogram.n_fft);
        read_opt(d, "hop", s.spectrogram.hop);
        read_opt(d, "n_mels", s.spectrogram.n_mels);
        read_opt(d, "target_frames", s.spectrogram.target_frames);
    }
    if (j.contains("model")) {
        detail::reject_unknown_keys(j.at("model"), {"hidden"}, "model");
        read_opt(j.at("model"), "hidden", c.hidden);
    }
    if (j.contains("train")) c.train = detail::train_from_json(j.at("train"), c.train);
    if (j.contains("unlearn")) {
        const auto& u = j.at("unlearn");
        detail::reject_unknown_keys(u,
                                    {"forget", "phi", "lambda", "alpha", "epochs", "train", "skip_interference",
                                     "skip_superposition", "skip_uncertainty", "skip_mixing"},
                                    "unlearn");
        if (u.contains("forget")) c.unlearn.forget = detail::forget_from_json(u.at("forget"));
        read_opt(u, "phi", c.unlearn.phi);
        read_opt(u, "lambda", c.unlearn.lambda);
        read_opt(u, "alpha", c.unlearn.alpha);
        read_opt(u, "epochs", c.unlearn.epochs);
        if (u.contains("train")) c.unlearn.train = detail::train_from_json(u.at("train"), c.unlearn.train);
        read_opt(u, "skip_interference", c.unlearn.skip_interference);
        read_opt(u, "skip_superposition", c.unlearn.skip_superposition);
        read_opt(u, "skip_uncertainty", c.unlearn.skip_uncertainty);
        read_opt(u, "skip_mixing", c.unlearn.skip_mixing);
    }
    if (j.contains("baselines")) {
        if (!j.at("baselines").is_array()) throw ConfigError("baselines must be an array");
        c.baselines.clear();
        for (const auto& b : j.at("baselines")) c.baselines.push_back(detail::baseline_from_json(b));
    }
    if (j.contains("scenario")) {
        const auto s = j.at("scenario").get<std::string>();
        if (s == "single") c.scenario = Scenario::single;
        else if (s == "multi") c.scenario = Scenario::multi;
        else if (s == "sequential") c.scenario = Scenario::sequential;
        else if (s == "ablation") c.scenario = Scenario::ablation;
        else throw ConfigError("unknown scenario '" + s + "'");
    }
    if (j.contains("sequential_requests")) {
        if (!j.at("sequential_requests").is_array()) throw ConfigError("sequential_requests must be an array");
        for (const auto& r : j.at("sequential_requests")) c.sequential_requests.push_back(detail::forget_from_json(r));
    }
    read_opt(j, "output_dir", c.output_dir);
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j);
}

// Scenarios -----------------------------------------------------------------

/// Standardized train/test split; the standardizer is fitted on train only.
struct PreparedData {
    LabeledDataset train;
    LabeledDataset test;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
    LabeledDataset all;
    if (cfg.dataset.source == "manifest") {
        all = load_manifest(cfg.dataset.manifest, cfg.num_classes(), cfg.dataset.synth.spectrogram);
    } else {
        SynthSpec spec = cfg.dataset.synth;
        spec.seed = cfg.seed;
        all = synth_dataset(spec);
    }
    auto split = stratified_split(all, cfg.dataset.test_fraction, cfg.seed ^ 0x5eed5eedULL);
    const auto scaler = Standardizer::fit(split.train);
    scaler.apply(split.train);
    scaler.apply(split.test);
    return {std::move(split.train), std::move(split.test)};
}

/// Trains from a seeded init. The result is rounded to f32 so the in-memory
/// model equals what its checkpoint reloads to.
inline Classifier train_original(const ExperimentConfig& cfg, const PreparedData& data) {
    auto model = make_classifier(data.train.feature_dim, cfg.hidden, data.train.num_classes, cfg.train.seed);
    train(model, data.train, cfg.train, cross_entropy_loss());
    return quantize_to_f32(std::move(model));
}

/// CLI method names: qp, ga, ng, fisher, ssd.
inline std::optional<BaselineMethod> method_from_cli_name(std::string_view name) {
    if (name == "ga") return BaselineMethod::gradient_ascent;
    if (name == "ng") return BaselineMethod::negative_gradient;
    if (name == "fisher") return BaselineMethod::fisher_forgetting;
    if (name == "ssd") return BaselineMethod::synaptic_dampening;
    return parse_baseline_method(name);
}

inline std::string display_name(BaselineMethod m) {
    switch (m) {
        case BaselineMethod::gradient_ascent: return "Gradient Ascent";
        case BaselineMethod::negative_gradient: return "Negative Gradient";
        case BaselineMethod::fisher_forgetting: return "Fisher Forgetting";
        case BaselineMethod::synaptic_dampening: return "Synaptic Dampening";
    }
    return "unknown";
}

struct MethodOutcome {
    std::string method;
    Classifier model;
    EvaluationReport report;
    std::vector<PhaseLogEntry> phase_log;
};

inline const BaselineConfig& baseline_config_for(const ExperimentConfig& cfg, BaselineMethod m) {
    for (const auto& b : cfg.baselines)
        if (b.method == m) return b;
    static const auto defaults = ExperimentConfig::default_baselines();
    for (const auto& b : defaults)
        if (b.method == m) return b;
    throw ConfigError("no configuration for baseline");
}

/// Applies one unlearning method to a copy of `original` and scores it on
/// the test split.
inline MethodOutcome run_method(const ExperimentConfig& cfg, std::string_view method, const Classifier& original,
                                const PreparedData& data, const ForgetSet& forget, const UnlearnConfig* qp = nullptr) {
    const auto original_fa = evaluate(original, data.test, forget).fa;
    if (method == "qp") {
        UnlearnConfig u = qp ? *qp : cfg.unlearn;
        u.forget = forget;
        auto result = run_qp_audio_eraser(original, data.train, u, &data.test);
        auto report = evaluate(result.model, data.test, forget, original_fa);
        return {"QPAudioEraser", std::move(result.model), std::move(report), std::move(result.log)};
    }
    const auto m = method_from_cli_name(method);
    if (!m) throw ConfigError("unknown method '" + std::string(method) + "'");
    auto model = run_baseline(original, data.train, forget, baseline_config_for(cfg, *m));
    auto report = evaluate(model, data.test, forget, original_fa);
    return {display_name(*m), std::move(model), std::move(report), {}};
}

struct ScenarioResult {
    Classifier original;
    EvaluationReport original_report;
    std::vector<MethodOutcome> methods;

    std::vector<TableRow> table_rows() const {
        std::vector<TableRow> rows{{"Original", original_report}};
        for (const auto& m : methods) rows.push_back({m.method, m.report});
        return rows;
    }
};

/// Single- or multi-class forgetting: QP plus every configured baseline.
inline ScenarioResult run_comparison(const ExperimentConfig& cfg, const PreparedData& data,
                                     const Classifier& original) {
    ScenarioResult out{original, evaluate(original, data.test, cfg.unlearn.forget), {}};
    out.methods.push_back(run_method(cfg, "qp", original, data, cfg.unlearn.forget));
    for (const auto& b : cfg.baselines)
        out.methods.push_back(run_method(cfg, to_string(b.method), original, data, cfg.unlearn.forget));
    return out;
}

struct SequentialStep {
    std::size_t step = 0;
    ForgetSet request;
    ForgetSet forgotten;  // union of all requests so far
    std::size_t retained_classes = 0;
    EvaluationReport report;
};

/// Applies the eraser once per request to the evolving model; each step is
/// scored against the union of classes forgotten so far.
inline std::vector<SequentialStep> run_sequential(const ExperimentConfig& cfg, const PreparedData& data,
                                                  const Classifier& original) {
    if (cfg.sequential_requests.empty()) throw ConfigError("sequential run needs at least one request");
    std::vector<SequentialStep> steps;
    Classifier model = original;
    ForgetSet forgotten;
    for (std::size_t s = 0; s < cfg.sequential_requests.size(); ++s) {
        const auto& request = cfg.sequential_requests[s];
        forgotten = forgotten.united(request);
        forgotten.validate(model.num_classes());
        UnlearnConfig u = cfg.unlearn;
        u.forget = forgotten;
        u.train.seed = cfg.unlearn.train.seed + s;
        model = run_qp_audio_eraser(std::move(model), data.train, u).model;
        const auto original_fa = evaluate(original, data.test, forgotten).fa;
        steps.push_back({s + 1, request, forgotten, model.num_classes() - forgotten.size(),
                         evaluate(model, data.test, forgotten, original_fa)});
    }
    return steps;
}

/// The five ablated variants followed by the full method, sharing one original model.
inline std::vector<MethodOutcome> run_ablation(const ExperimentConfig& cfg, const PreparedData& data,
                                               const Classifier& original) {
    struct Variant {
        const char* name;
        UnlearnConfig config;
    };
    const UnlearnConfig base = cfg.unlearn;
    std::vector<Variant> variants;
    auto add = [&](const char* name, auto&& tweak) {
        UnlearnConfig u = base;
        tweak(u);
        variants.push_back({name, u});
    };
    add("No Weight Transform", [](UnlearnConfig& u) { u.skip_interference = true; });
    add("No Uncertainty Maximization", [](UnlearnConfig& u) { u.skip_uncertainty = true; });
    add("No Matrix M", [](UnlearnConfig& u) { u.skip_mixing = true; });
    add("lambda = 0.5", [](UnlearnConfig& u) { u.lambda = 0.5; });
    add("lambda = 2.0", [](UnlearnConfig& u) { u.lambda = 2.0; });
    add("QPAudioEraser", [](UnlearnConfig&) {});

    std::vector<MethodOutcome> out;
    for (const auto& v : variants) {
        auto outcome = run_method(cfg, "qp", original, data, base.forget, &v.config);
        outcome.method = v.name;
        out.push_back(std::move(outcome));
    }
    return out;
}

inline std::string sequential_csv(const std::vector<SequentialStep>& steps) {
    std::ostringstream csv;
    csv << "step,request,forgotten,retained_classes,FA,RA,PER,IL,ERB\n";
    auto join = [](const ForgetSet& f) {
        std::string s;
        for (std::size_t c : f) s += (s.empty() ? "" : " ") + std::to_string(c);
        return s;
    };
    for (const auto& s : steps)
        csv << s.step << ',' << join(s.request) << ',' << join(s.forgotten) << ',' << s.retained_classes << ','
            << format_cell(s.report.fa) << ',' << format_cell(s.report.ra) << ',' << format_cell(s.report.per) << ','
            << format_fixed2(s.report.il) << ',' << format_fixed2(s.report.erb) << '\n';
    return csv.str();
}

}  // namespace qpae
