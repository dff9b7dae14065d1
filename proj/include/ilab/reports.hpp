#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/eval.hpp"
#include "ilab/run_store.hpp"

namespace ilab {

namespace detail {

inline std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.3f", v);
    return buf;
}

inline std::string fixed1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.1f", v);
    return buf;
}

inline std::string pad_name(const std::string& s, size_t width = 14) {
    std::string out = s;
    while (out.size() < width) out += ' ';
    return out;
}

inline json triple_to_json(const CorrelationTriple& t) {
    return {{"pearson", t.pearson},
            {"spearman", t.spearman},
            {"top_decile_overlap", t.top_decile_overlap}};
}

} // namespace detail

// ---------------------------------------------------------------------------
// Stability (one axis, several methods)
// ---------------------------------------------------------------------------

inline json stability_to_json(const std::vector<StabilityReport>& reports,
                              const json& header) {
    json j;
    j["header"] = header;
    if (!reports.empty()) j["axis"] = to_string(reports.front().axis);
    j["methods"] = json::array();
    for (const StabilityReport& r : reports) {
        json m;
        m["method"] = to_string(r.method);
        m["variations"] = r.variations;
        m["averaged"] = detail::triple_to_json(r.averaged);
        m["pairs"] = json::array();
        for (const StabilityPair& p : r.pairs)
            m["pairs"].push_back({{"variation_a", p.variation_a},
                                  {"variation_b", p.variation_b},
                                  {"fingerprint_a", hex_u64(p.fingerprint_a)},
                                  {"fingerprint_b", hex_u64(p.fingerprint_b)},
                                  {"triple", detail::triple_to_json(p.mean_over_tests)}});
        j["methods"].push_back(m);
    }
    return j;
}

/// Aligned text table: one row per method, averaged over all pairs.
inline std::string stability_table(const std::vector<StabilityReport>& reports) {
    std::string out;
    if (reports.empty()) return out;
    const size_t pairs = reports.front().pairs.size();
    out += "Sensitivity on axis '" + std::string(to_string(reports.front().axis)) + "' (" +
           std::to_string(reports.front().variations.size()) + " variations, " +
           std::to_string(pairs) + " pairs)\n";
    out += detail::pad_name("method") + " pearson  spearman  overlap%\n";
    for (const StabilityReport& r : reports)
        out += detail::pad_name(to_string(r.method)) + detail::fixed3(r.averaged.pearson) +
               " " + detail::fixed3(r.averaged.spearman) + " " +
               detail::fixed1(r.averaged.top_decile_overlap) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Expected influence comparison (disjoint ensembles vs single models)
// ---------------------------------------------------------------------------

inline json expected_to_json(const std::vector<ExpectedStability>& rows, const json& header,
                             const json& ensemble_manifest) {
    json j;
    j["header"] = header;
    j["ensembles"] = ensemble_manifest;
    j["methods"] = json::array();
    for (const ExpectedStability& r : rows)
        j["methods"].push_back({{"method", to_string(r.method)},
                                {"model_count", r.model_count},
                                {"expected", detail::triple_to_json(r.expected_triple)},
                                {"single_model_baseline",
                                 detail::triple_to_json(r.baseline_triple)}});
    return j;
}

inline std::string expected_table(const std::vector<ExpectedStability>& rows) {
    std::string out;
    if (rows.empty()) return out;
    out += "Expected influence across disjoint ensembles (" +
           std::to_string(rows.front().model_count) + "+" +
           std::to_string(rows.front().model_count) + " models)\n";
    out += detail::pad_name("method") +
           " E-pearson  E-spearman  E-overlap%  base-pearson  base-spearman  base-overlap%\n";
    for (const ExpectedStability& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%9.3f  %10.3f  %10.1f  %12.3f  %13.3f  %13.1f\n",
                      r.expected_triple.pearson, r.expected_triple.spearman,
                      r.expected_triple.top_decile_overlap, r.baseline_triple.pearson,
                      r.baseline_triple.spearman, r.baseline_triple.top_decile_overlap);
        out += detail::pad_name(to_string(r.method)) + buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-method correlation
// ---------------------------------------------------------------------------

inline json cross_method_to_json(const std::vector<Method>& methods,
                                 const std::vector<std::vector<double>>& matrix,
                                 const json& header) {
    json j;
    j["header"] = header;
    j["methods"] = json::array();
    for (Method m : methods) j["methods"].push_back(to_string(m));
    j["pearson"] = matrix;
    return j;
}

inline std::string cross_method_table(const std::vector<Method>& methods,
                                      const std::vector<std::vector<double>>& matrix) {
    std::string out = detail::pad_name("");
    for (Method m : methods) out += detail::pad_name(to_string(m), 10);
    out += "\n";
    for (size_t a = 0; a < methods.size(); ++a) {
        out += detail::pad_name(to_string(methods[a]));
        for (size_t b = 0; b < methods.size(); ++b) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%-10.3f", matrix[a][b]);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Poison report
// ---------------------------------------------------------------------------

inline json poison_to_json(const PoisonReport& report, const json& header) {
    json j;
    j["header"] = header;
    j["test_count"] = report.test_count;
    j["model_count"] = report.model_count;
    j["source_class"] = report.source_class;
    j["target_class"] = report.target_class;
    j["group_sizes"] = {{"poisoned", report.group_sizes[0]},
                        {"clean_source", report.group_sizes[1]},
                        {"clean_target", report.group_sizes[2]}};
    j["methods"] = json::array();
    for (const PoisonMethodRow& row : report.rows) {
        json groups = json::array();
        for (size_t g = 0; g < 3; ++g)
            groups.push_back({{"group", to_string(static_cast<PoisonGroup>(g))},
                              {"mean", row.groups[g].mean_share},
                              {"min", row.groups[g].min_share},
                              {"max", row.groups[g].max_share}});
        j["methods"].push_back({{"method", to_string(row.method)}, {"groups", groups}});
    }
    return j;
}

/// Bar-plot friendly CSV: method,group,mean,min,max.
inline std::string poison_to_csv(const PoisonReport& report) {
    std::string out = "method,group,mean,min,max\n";
    for (const PoisonMethodRow& row : report.rows)
        for (size_t g = 0; g < 3; ++g) {
            out += to_string(row.method);
            out += ',';
            out += to_string(static_cast<PoisonGroup>(g));
            out += ',';
            out += detail::format_f64(row.groups[g].mean_share);
            out += ',';
            out += detail::format_f64(row.groups[g].min_share);
            out += ',';
            out += detail::format_f64(row.groups[g].max_share);
            out += '\n';
        }
    return out;
}

inline std::string poison_table(const PoisonReport& report) {
    std::string out = "Normalized influence share per training group (all test examples "
                      "poisoned)\n";
    out += detail::pad_name("method") +
           " poisoned        clean_source    clean_target\n";
    for (const PoisonMethodRow& row : report.rows) {
        out += detail::pad_name(to_string(row.method));
        for (size_t g = 0; g < 3; ++g) {
            char buf[48];
            std::snprintf(buf, sizeof buf, " %5.3f [%5.3f,%5.3f]", row.groups[g].mean_share,
                          row.groups[g].min_share, row.groups[g].max_share);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

} // namespace ilab
