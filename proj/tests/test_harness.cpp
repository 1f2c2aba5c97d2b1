#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "test_support.hpp"

using namespace qpae;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(QPAE_CLI_PATH) + " " + args + " 2>&1";
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small enough that a CLI round trip takes well under a second.
nlohmann::json tiny_config(const fs::path& out) {
    return {{"seed", 3},
            {"dataset", {{"num_classes", 3}, {"per_class", 10}, {"duration_s", 0.3}}},
            {"model", {{"hidden", {8}}}},
            {"train", {{"epochs", 5}, {"batch_size", 8}}},
            {"unlearn", {{"forget", {1}}, {"epochs", 2}}},
            {"output_dir", out.string()}};
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("qpae_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
    const auto path = dir / "config.in.json";
    std::ofstream(path) << j.dump(2);
    return path;
}

}  // namespace

TEST(Config, RoundTripsThroughJson) {
    ExperimentConfig c;
    c.seed = 99;
    c.dataset.synth = SynthSpec::accent_profile();
    c.dataset.synth.per_class = 33;
    c.hidden = {16, 8};
    c.train.learning_rate = 0.125;
    c.unlearn.forget = ForgetSet{2, 5};
    c.unlearn.lambda = 2.0;
    c.unlearn.skip_mixing = true;
    c.baselines[2].fisher_noise_scale = 0.25;
    c.scenario = Scenario::sequential;
    c.sequential_requests = {ForgetSet{0}, ForgetSet{1, 3}};
    c.output_dir = "elsewhere";
    c.validate();
    EXPECT_EQ(config_from_json(to_json(c)), c);
    EXPECT_EQ(config_from_json(to_json(ExperimentConfig{})), ExperimentConfig{});
    EXPECT_EQ(config_from_json(nlohmann::json::object()), ExperimentConfig{});
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(config_from_json({{"sede", 1}}), ConfigError);
    EXPECT_THROW(config_from_json({{"unlearn", {{"lamda", 2.0}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"dataset", {{"profile", "opera"}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"scenario", "parallel"}}), ConfigError);
    EXPECT_THROW(config_from_json({{"baselines", {{{"method", "scrub"}}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"unlearn", {{"alpha", 1.0}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"unlearn", {{"forget", {10}}}}}), InvalidClassError);
    // Sequential scenario needs at least one request.
    EXPECT_THROW(config_from_json({{"scenario", "sequential"}}), ConfigError);
}

TEST(Config, AccentProfileSelectsNarrowSpacing) {
    const auto c = config_from_json({{"dataset", {{"profile", "accent"}, {"per_class", 5}}}});
    EXPECT_EQ(c.dataset.synth.spacing_hz, 45.0);
    EXPECT_EQ(c.dataset.synth.per_class, 5u);
}

TEST(Report, JsonRoundTrip) {
    const std::vector<std::size_t> truth{0, 0, 1, 2}, pred{0, 1, 1, 0};
    const std::vector<std::vector<double>> probs{{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.8, 0.1}, {0.4, 0.3, 0.3}};
    const auto r = evaluate_predictions(truth, pred, probs, 3, ForgetSet{0}, 100.0);
    EXPECT_EQ(report_from_json(to_json(r)), r);
    const auto j = to_json(r);
    for (const char* key : {"fa", "ra", "il", "per", "far", "frr", "erb", "per_class", "confusion", "n_eval"})
        EXPECT_TRUE(j.contains(key)) << key;
}

TEST(EmitTable, ColumnsAndPlaceholder) {
    const auto original = evaluate_predictions(std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 1},
                                               std::vector<std::vector<double>>{{1, 0}, {0, 1}}, 2, ForgetSet{0},
                                               std::nullopt);
    const auto t = emit_table({{"Original", original}});
    EXPECT_EQ(t.csv, "Method,FA,FAR,RA,FRR,PER,IL,ERB\nOriginal,100.00,0.00,100.00,0.00,--,100.00,100.00\n");
    EXPECT_NE(t.markdown.find("| Method | FA | FAR | RA | FRR | PER | IL | ERB |"), std::string::npos);
    EXPECT_NE(t.markdown.find("| Original | 100.00 | 0.00 | 100.00 | 0.00 | -- | 100.00 | 100.00 |"),
              std::string::npos);
    EXPECT_THROW(emit_table({}), Error);
}

TEST(EmitTable, RoundsHalfAwayFromZero) {
    EXPECT_EQ(format_fixed2(0.125), "0.13");
    EXPECT_EQ(format_fixed2(2.675), "2.68");
    EXPECT_EQ(format_fixed2(-0.125), "-0.13");
    EXPECT_EQ(format_fixed2(99.995), "100.00");
    EXPECT_EQ(format_fixed2(-0.001), "0.00");
    EXPECT_EQ(format_fixed2(76.98), "76.98");
    EXPECT_EQ(format_cell(std::nullopt), "--");
}

TEST(EmitTable, CsvAndMarkdownCarrySameNumbers) {
    Rng rng(4);
    std::vector<TableRow> rows;
    for (int i = 0; i < 5; ++i) {
        std::vector<std::size_t> truth, pred;
        std::vector<std::vector<double>> probs;
        for (int s = 0; s < 30; ++s) {
            truth.push_back(rng.below(4));
            probs.push_back(qpae::testing::random_distribution(rng, 4).probs);
            pred.push_back(argmax(probs.back()));
        }
        rows.push_back({"m" + std::to_string(i), evaluate_predictions(truth, pred, probs, 4, ForgetSet{1}, 90.0)});
    }
    const auto t = emit_table(rows);
    std::istringstream csv(t.csv), md(t.markdown);
    std::string cl, ml;
    std::getline(csv, cl);
    std::getline(md, ml);
    std::getline(md, ml);  // alignment row
    while (std::getline(csv, cl)) {
        ASSERT_TRUE(std::getline(md, ml));
        std::string from_md;
        std::istringstream cells(ml.substr(1));
        std::string cell;
        while (std::getline(cells, cell, '|')) {
            const auto b = cell.find_first_not_of(' '), e = cell.find_last_not_of(' ');
            if (b == std::string::npos) continue;
            from_md += (from_md.empty() ? "" : ",") + cell.substr(b, e - b + 1);
        }
        EXPECT_EQ(from_md, cl);
    }
}

TEST(Cli, UsageAndConfigErrorsExitTwo) {
    const auto dir = scratch_dir("usage");
    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("frobnicate").code, 2);
    EXPECT_EQ(run_cli("train --no-such-flag").code, 2);

    const auto cfg = write_config(dir, tiny_config(dir));
    EXPECT_EQ(run_cli("unlearn --config " + cfg.string() + " --method scrub").code, 2);
    EXPECT_EQ(run_cli("unlearn --config " + cfg.string() + " --forget x").code, 2);
    EXPECT_EQ(run_cli("unlearn --config " + cfg.string() + " --forget 7").code, 2);
    EXPECT_EQ(run_cli("evaluate --config " + cfg.string()).code, 2);  // --model is required

    auto bad = tiny_config(dir);
    bad["unlearn"]["typo"] = 1;
    EXPECT_EQ(run_cli("train --config " + write_config(dir, bad).string()).code, 2);
    std::ofstream(dir / "broken.json") << "{ not json";
    EXPECT_EQ(run_cli("train --config " + (dir / "broken.json").string()).code, 2);
    fs::remove_all(dir);
}

TEST(Cli, MissingFilesExitThree) {
    const auto dir = scratch_dir("io");
    const auto cfg = write_config(dir, tiny_config(dir));
    EXPECT_EQ(run_cli("train --config " + (dir / "absent.json").string()).code, 3);
    EXPECT_EQ(run_cli("unlearn --config " + cfg.string()).code, 3);  // no original.qpae yet
    EXPECT_EQ(run_cli("evaluate --config " + cfg.string() + " --model " + (dir / "nope.qpae").string()).code, 3);

    std::ofstream(dir / "garbage.qpae") << "QPAE but not really";
    EXPECT_EQ(run_cli("evaluate --config " + cfg.string() + " --model " + (dir / "garbage.qpae").string()).code, 3);

    auto manifest = tiny_config(dir);
    manifest["dataset"]["source"] = "manifest";
    manifest["dataset"]["manifest"] = (dir / "missing_manifest").string();
    EXPECT_EQ(run_cli("train --config " + write_config(dir, manifest).string()).code, 3);
    fs::remove_all(dir);
}

TEST(Cli, TrainIsDeterministicAndUnlearnLogsSkips) {
    const auto dir = scratch_dir("train");
    auto j = tiny_config(dir);
    j["unlearn"]["skip_mixing"] = true;
    const auto cfg = write_config(dir, j);

    ASSERT_EQ(run_cli("train --config " + cfg.string()).code, 0);
    const auto first = slurp(dir / "original.qpae");
    ASSERT_FALSE(first.empty());
    ASSERT_EQ(run_cli("train --config " + cfg.string()).code, 0);
    EXPECT_EQ(slurp(dir / "original.qpae"), first);
    EXPECT_TRUE(fs::exists(dir / "original_report.json"));
    EXPECT_EQ(config_from_json(nlohmann::json::parse(slurp(dir / "config.json"))), load_config(cfg));

    const auto run = run_cli("unlearn --config " + cfg.string() + " --method qp");
    ASSERT_EQ(run.code, 0) << run.output;
    EXPECT_NE(run.output.find("phase mixing skipped"), std::string::npos);
    EXPECT_EQ(slurp(dir / "original.qpae"), first);
    const auto log = nlohmann::json::parse(slurp(dir / "unlearned_qp_phase_log.json"));
    for (const auto& entry : log) EXPECT_NE(entry.at("phase"), "mixing");
    for (const auto& entry : log)
        for (const char* key : {"phase", "forget_accuracy", "retain_accuracy", "wall_ms"})
            EXPECT_TRUE(entry.contains(key));

    // Self-comparison gives PER = 0 (FA unchanged).
    const auto eval = run_cli("evaluate --config " + cfg.string() + " --model " + (dir / "original.qpae").string() +
                              " --original-report " + (dir / "original_report.json").string());
    ASSERT_EQ(eval.code, 0) << eval.output;
    const auto report = nlohmann::json::parse(slurp(dir / "evaluation.json"));
    if (!report.at("per").is_null()) { EXPECT_EQ(report.at("per").get<double>(), 0.0); }
    EXPECT_EQ(report.at("delta").at("fa").get<double>(), 0.0);
    fs::remove_all(dir);
}

TEST(Cli, SynthWritesLoadableManifest) {
    const auto dir = scratch_dir("synth");
    const auto cfg = write_config(dir, tiny_config(dir / "corpus"));
    ASSERT_EQ(run_cli("synth --config " + cfg.string()).code, 0);
    const auto loaded = load_manifest(dir / "corpus", 3, SpectrogramParams{});
    EXPECT_EQ(loaded.size(), 30u);
    fs::remove_all(dir);
}

TEST(Cli, SequentialRejectsEmptyRequestList) {
    const auto dir = scratch_dir("seq");
    auto j = tiny_config(dir);
    j["scenario"] = "sequential";
    j["sequential_requests"] = nlohmann::json::array();
    EXPECT_EQ(run_cli("sequential --config " + write_config(dir, j).string()).code, 2);
    fs::remove_all(dir);
}
