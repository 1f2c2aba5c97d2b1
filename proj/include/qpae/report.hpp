#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "qpae/metrics.hpp"
#include "qpae/unlearn_qp.hpp"

namespace qpae {

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> json_opt(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const EvaluationReport& r) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& a : r.per_class) per_class.push_back(detail::opt_json(a));
    return {{"fa", detail::opt_json(r.fa)},   {"ra", detail::opt_json(r.ra)},   {"il", r.il},
            {"per", detail::opt_json(r.per)}, {"far", detail::opt_json(r.far)}, {"frr", detail::opt_json(r.frr)},
            {"erb", r.erb},                   {"per_class", per_class},         {"confusion", r.confusion},
            {"n_eval", r.n_eval},             {"n_forget", r.n_forget},         {"n_retain", r.n_retain}};
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
    EvaluationReport r;
    r.fa = detail::json_opt(j.at("fa"));
    r.ra = detail::json_opt(j.at("ra"));
    r.il = j.at("il").get<double>();
    r.per = detail::json_opt(j.at("per"));
    r.far = detail::json_opt(j.at("far"));
    r.frr = detail::json_opt(j.at("frr"));
    r.erb = j.at("erb").get<double>();
    for (const auto& a : j.at("per_class")) r.per_class.push_back(detail::json_opt(a));
    r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    r.n_eval = j.at("n_eval").get<std::size_t>();
    r.n_forget = j.value("n_forget", std::size_t{0});
    r.n_retain = j.value("n_retain", std::size_t{0});
    return r;
}

inline nlohmann::json to_json(const ReportDelta& d) {
    return {{"fa", detail::opt_json(d.fa)},   {"ra", detail::opt_json(d.ra)}, {"far", detail::opt_json(d.far)},
            {"frr", detail::opt_json(d.frr)}, {"il", d.il},                   {"erb", d.erb},
            {"per", detail::opt_json(d.per)}};
}

inline nlohmann::json to_json(const std::vector<PhaseLogEntry>& log) {
    auto out = nlohmann::json::array();
    for (const auto& e : log)
        out.push_back({{"phase", e.phase},
                       {"forget_accuracy", e.forget_accuracy},
                       {"retain_accuracy", e.retain_accuracy},
                       {"wall_ms", e.wall_ms}});
    return out;
}

/// Two decimals, ties rounded away from zero, never "-0.00".
inline std::string format_fixed2(double v) {
    double r = std::round(v * 100.0) / 100.0;
    if (r == 0.0) r = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", r);
    return buf;
}

inline std::string format_cell(const std::optional<double>& v) { return v ? format_fixed2(*v) : "--"; }

struct TableRow {
    std::string method;
    EvaluationReport report;
};

struct RenderedTable {
    std::string markdown;
    std::string csv;
};

/// Method, FA, FAR, RA, FRR, PER, IL, ERB with two-decimal cells; absent
/// values render as "--".
inline RenderedTable emit_table(const std::vector<TableRow>& rows) {
    if (rows.empty()) throw Error("emit_table: no rows");
    static const char* kHeader[] = {"Method", "FA", "FAR", "RA", "FRR", "PER", "IL", "ERB"};
    std::ostringstream md, csv;
    md << '|';
    for (const char* h : kHeader) md << ' ' << h << " |";
    md << "\n|";
    for (std::size_t i = 0; i < std::size(kHeader); ++i) md << (i == 0 ? " :--- |" : " ---: |");
    md << '\n';
    for (std::size_t i = 0; i < std::size(kHeader); ++i) csv << (i ? "," : "") << kHeader[i];
    csv << '\n';
    for (const auto& row : rows) {
        const auto& r = row.report;
        const std::vector<std::string> cells{row.method,        format_cell(r.fa),  format_cell(r.far),
                                             format_cell(r.ra), format_cell(r.frr), format_cell(r.per),
                                             format_fixed2(r.il), format_fixed2(r.erb)};
        md << '|';
        for (const auto& c : cells) md << ' ' << c << " |";
        md << '\n';
        for (std::size_t i = 0; i < cells.size(); ++i) csv << (i ? "," : "") << cells[i];
        csv << '\n';
    }
    return {md.str(), csv.str()};
}

}  // namespace qpae
