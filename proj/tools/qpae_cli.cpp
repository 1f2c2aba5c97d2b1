// Command-line front end for the unlearning lab.
//
//   qpae synth      --config c.json --out data/     write a WAV manifest
//   qpae train      --config c.json --out run/      train + original report
//   qpae unlearn    --config c.json --out run/ --method qp --forget 0
//   qpae evaluate   --config c.json --model m.qpae [--original-report r.json]
//   qpae sequential --config c.json --out run/
//   qpae ablation   --config c.json --out run/
//   qpae report     --config c.json --out run/      full comparison table
//
// Exit codes: 0 success, 2 config error, 3 IO error, 4 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "qpae/qpae.hpp"

namespace fs = std::filesystem;
using namespace qpae;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct SharedOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string method = "qp";
    std::string forget;
    std::string model;
    std::string original_report;
};

ForgetSet parse_forget(const std::string& text) {
    std::vector<std::size_t> ids;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        long long v = -1;
        try {
            v = std::stoll(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || v < 0) throw ConfigError("--forget expects comma-separated class ids, got '" + text + "'");
        ids.push_back(static_cast<std::size_t>(v));
    }
    return ForgetSet(std::move(ids));
}

ExperimentConfig resolve_config(const SharedOptions& opt) {
    ExperimentConfig cfg = opt.config.empty() ? ExperimentConfig{} : load_config(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    if (!opt.out.empty()) cfg.output_dir = opt.out;
    if (!opt.forget.empty()) cfg.unlearn.forget = parse_forget(opt.forget);
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::string report_csv(const std::string& method, const EvaluationReport& r) {
    return emit_table({{method, r}}).csv;
}

Classifier load_or_train(const SharedOptions& opt, const ExperimentConfig& cfg, const PreparedData& data) {
    if (!opt.model.empty()) return load_checkpoint(opt.model);
    const fs::path saved = fs::path(cfg.output_dir) / "original.qpae";
    if (fs::exists(saved)) return load_checkpoint(saved);
    return train_original(cfg, data);
}

int cmd_synth(const SharedOptions& opt) {
    const auto cfg = resolve_config(opt);
    SynthSpec spec = cfg.dataset.synth;
    spec.seed = cfg.seed;
    const auto clips = synth_clips(spec);
    write_manifest(cfg.output_dir, clips);
    std::cout << "wrote " << clips.size() << " clips to " << (fs::path(cfg.output_dir) / "labels.csv").string() << "\n";
    return 0;
}

int cmd_train(const SharedOptions& opt) {
    const auto cfg = resolve_config(opt);
    const auto data = prepare_data(cfg);
    const auto model = train_original(cfg, data);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    save_checkpoint(model, dir / "original.qpae");
    const auto report = evaluate(model, data.test, cfg.unlearn.forget);
    write_json(dir / "original_report.json", to_json(report));
    write_text(dir / "original_report.csv", report_csv("Original", report));
    write_json(dir / "config.json", to_json(cfg));
    std::cout << "test accuracy " << format_fixed2(accuracy(model, data.test)) << "% -> "
              << (dir / "original.qpae").string() << "\n";
    return 0;
}

int cmd_unlearn(const SharedOptions& opt) {
    const auto cfg = resolve_config(opt);
    if (opt.method != "qp" && !method_from_cli_name(opt.method))
        throw ConfigError("unknown --method '" + opt.method + "' (expected qp, ga, ng, fisher or ssd)");
    const auto data = prepare_data(cfg);
    const fs::path dir = cfg.output_dir;
    const fs::path source = opt.model.empty() ? dir / "original.qpae" : fs::path(opt.model);
    const auto original = load_checkpoint(source);
    auto outcome = run_method(cfg, opt.method, original, data, cfg.unlearn.forget);
    for (const auto& entry : outcome.phase_log)
        if (entry.phase != "original") std::cout << "phase " << entry.phase << " done\n";
    if (opt.method == "qp") {
        if (cfg.unlearn.skip_interference) std::cout << "phase interference skipped\n";
        if (cfg.unlearn.skip_uncertainty) std::cout << "phase uncertainty skipped\n";
        if (cfg.unlearn.skip_mixing) std::cout << "phase mixing skipped (no_matrix_m)\n";
    }
    fs::create_directories(dir);
    const std::string stem = "unlearned_" + opt.method;
    save_checkpoint(outcome.model, dir / (stem + ".qpae"));
    write_json(dir / (stem + "_report.json"), to_json(outcome.report));
    write_text(dir / (stem + "_report.csv"), report_csv(outcome.method, outcome.report));
    if (!outcome.phase_log.empty()) write_json(dir / (stem + "_phase_log.json"), to_json(outcome.phase_log));
    std::cout << emit_table({{outcome.method, outcome.report}}).markdown;
    return 0;
}

int cmd_evaluate(const SharedOptions& opt) {
    const auto cfg = resolve_config(opt);
    if (opt.model.empty()) throw ConfigError("evaluate requires --model");
    const auto model = load_checkpoint(opt.model);
    const auto data = prepare_data(cfg);
    std::optional<EvaluationReport> original;
    if (!opt.original_report.empty()) {
        std::ifstream in(opt.original_report);
        if (!in) throw IoError("cannot open " + opt.original_report);
        original = report_from_json(nlohmann::json::parse(in));
    }
    const auto report =
        evaluate(model, data.test, cfg.unlearn.forget, original ? original->fa : std::optional<double>{});
    nlohmann::json out = to_json(report);
    if (original) out["delta"] = to_json(compare_reports(*original, report));
    const fs::path dir = cfg.output_dir;
    write_json(dir / "evaluation.json", out);
    write_text(dir / "evaluation.csv", report_csv(fs::path(opt.model).stem().string(), report));
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_sequential(const SharedOptions& opt) {
    auto cfg = resolve_config(opt);
    cfg.scenario = Scenario::sequential;
    cfg.validate();
    const auto data = prepare_data(cfg);
    const auto original = load_or_train(opt, cfg, data);
    const auto steps = run_sequential(cfg, data, original);
    nlohmann::json series = nlohmann::json::array();
    for (const auto& s : steps)
        series.push_back({{"step", s.step},
                          {"request", s.request.classes()},
                          {"forgotten", s.forgotten.classes()},
                          {"retained_classes", s.retained_classes},
                          {"report", to_json(s.report)}});
    const fs::path dir = cfg.output_dir;
    write_json(dir / "sequential.json", series);
    const auto csv = sequential_csv(steps);
    write_text(dir / "sequential.csv", csv);
    std::cout << csv;
    return 0;
}

int cmd_ablation(const SharedOptions& opt) {
    const auto cfg = resolve_config(opt);
    const auto data = prepare_data(cfg);
    const auto original = load_or_train(opt, cfg, data);
    const auto variants = run_ablation(cfg, data, original);
    std::vector<TableRow> rows{{"Original", evaluate(original, data.test, cfg.unlearn.forget)}};
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : variants) {
        rows.push_back({v.method, v.report});
        j.push_back({{"method", v.method}, {"report", to_json(v.report)}, {"phase_log", to_json(v.phase_log)}});
    }
    const auto table = emit_table(rows);
    const fs::path dir = cfg.output_dir;
    write_text(dir / "ablation.md", table.markdown);
    write_text(dir / "ablation.csv", table.csv);
    write_json(dir / "ablation.json", j);
    std::cout << table.markdown;
    return 0;
}

int cmd_report(const SharedOptions& opt) {
    const auto cfg = resolve_config(opt);
    const auto data = prepare_data(cfg);
    const auto original = load_or_train(opt, cfg, data);
    const auto result = run_comparison(cfg, data, original);
    const auto table = emit_table(result.table_rows());
    nlohmann::json j = nlohmann::json::array();
    for (const auto& row : result.table_rows()) j.push_back({{"method", row.method}, {"report", to_json(row.report)}});
    const fs::path dir = cfg.output_dir;
    write_text(dir / "table.md", table.markdown);
    write_text(dir / "table.csv", table.csv);
    write_json(dir / "reports.json", j);
    write_json(dir / "qp_phase_log.json", to_json(result.methods.front().phase_log));
    std::cout << table.markdown;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Class-forgetting lab: four-phase eraser, baselines and unlearning metrics"};
    app.require_subcommand(1);
    SharedOptions opt;

    auto add_shared = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "Experiment config (JSON)");
        sub->add_option("--seed", opt.seed, "Override the experiment seed");
        sub->add_option("--out", opt.out, "Output directory");
        sub->add_option("--method", opt.method, "qp | ga | ng | fisher | ssd");
        sub->add_option("--forget", opt.forget, "Comma-separated class ids to forget");
        sub->add_option("--model", opt.model, "Checkpoint to load instead of <out>/original.qpae");
        sub->add_option("--original-report", opt.original_report, "Original-model report JSON (enables PER)");
    };

    struct Verb {
        const char* name;
        const char* help;
        int (*run)(const SharedOptions&);
    };
    const Verb verbs[] = {
        {"synth", "Write the synthetic corpus as a WAV manifest", cmd_synth},
        {"train", "Train the original model and write its checkpoint and report", cmd_train},
        {"unlearn", "Apply one unlearning method to the original checkpoint", cmd_unlearn},
        {"evaluate", "Score a checkpoint on the held-out split", cmd_evaluate},
        {"sequential", "Apply the eraser to a sequence of forget requests", cmd_sequential},
        {"ablation", "Run the ablation grid", cmd_ablation},
        {"report", "Run every method and emit the comparison table", cmd_report},
    };
    int (*selected)(const SharedOptions&) = nullptr;
    for (const auto& v : verbs) {
        auto* sub = app.add_subcommand(v.name, v.help);
        add_shared(sub);
        sub->callback([&selected, run = v.run] { selected = run; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        return selected(opt);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const CheckpointError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const WavError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}
