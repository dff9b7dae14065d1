#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ilab/dataset.hpp"
#include "ilab/ensemble.hpp"
#include "ilab/errors.hpp"
#include "ilab/influence.hpp"
#include "ilab/stats.hpp"
#include "ilab/trainer.hpp"

namespace ilab {

// ---------------------------------------------------------------------------
// Stability protocol: vary one axis, correlate influence across model pairs
// ---------------------------------------------------------------------------

enum class StabilityAxis { initialization, ordering, batch_size };

inline const char* to_string(StabilityAxis a) {
    switch (a) {
        case StabilityAxis::initialization: return "initialization";
        case StabilityAxis::ordering: return "ordering";
        default: return "batch_size";
    }
}

inline StabilityAxis axis_from_string(const std::string& s) {
    for (StabilityAxis a : {StabilityAxis::initialization, StabilityAxis::ordering,
                            StabilityAxis::batch_size})
        if (s == to_string(a)) return a;
    throw ConfigError("unknown stability axis '" + s + "'");
}

struct StabilityPair {
    uint64_t variation_a = 0;
    uint64_t variation_b = 0;
    uint64_t fingerprint_a = 0;
    uint64_t fingerprint_b = 0;
    CorrelationTriple mean_over_tests; // triple averaged across test rows
};

struct StabilityReport {
    Method method = Method::grad_dot;
    StabilityAxis axis = StabilityAxis::initialization;
    std::vector<uint64_t> variations;
    std::vector<StabilityPair> pairs; // every unordered pair, in index order
    CorrelationTriple averaged;       // mean over pairs (equal test weight)
};

namespace detail {

inline TrainConfig apply_variation(TrainConfig config, StabilityAxis axis, uint64_t v) {
    switch (axis) {
        case StabilityAxis::initialization: config.init_seed = v; break;
        case StabilityAxis::ordering: config.order_seed = v; break;
        case StabilityAxis::batch_size:
            if (v == 0) throw ConfigError("stability: batch size variation must be positive");
            config.batch_size = static_cast<int>(v);
            break;
    }
    return config;
}

} // namespace detail

/// Trains one model per variation, computes `method` per model, then for
/// every unordered model pair averages the per-test-row CorrelationTriple.
/// `allow_duplicates` admits repeated variations (self-correlation checks).
/// `trainer`/`influence` replace the default train/model_influence calls
/// (the CLI passes caching wrappers).
inline StabilityReport stability_report(Method method, StabilityAxis axis,
                                        const std::vector<uint64_t>& variations,
                                        const TrainConfig& fixed_config,
                                        const Dataset& train_set, const Dataset& test_set,
                                        const MethodParams& params = {},
                                        bool allow_duplicates = false,
                                        const TrainerFn& trainer = {},
                                        const InfluenceFn& influence = {}) {
    if (variations.size() < 2)
        throw ConfigError("stability: need at least 2 variations on the " +
                          std::string(to_string(axis)) + " axis");
    if (!allow_duplicates) {
        std::set<uint64_t> seen(variations.begin(), variations.end());
        if (seen.size() != variations.size())
            throw ConfigError("stability: duplicate variations on the " +
                              std::string(to_string(axis)) + " axis");
    }
    if (method == Method::tracein_ideal && axis == StabilityAxis::batch_size)
        throw ConfigError("stability: tracein_ideal requires batch size 1 and cannot vary "
                          "the batch_size axis");

    TrainConfig base = fixed_config;
    if (method == Method::tracein_ideal) {
        base.batch_size = 1; // per-step attribution needs a batch-1 trace
        base.record_step_trace = true;
    }

    std::vector<InfluenceMatrix> matrices(variations.size());
    std::vector<uint64_t> fingerprints(variations.size());
    for (size_t v = 0; v < variations.size(); ++v) {
        TrainConfig c = detail::apply_variation(base, axis, variations[v]);
        TrainedModel model = trainer ? trainer(c) : train(c, train_set, test_set);
        fingerprints[v] = model.fingerprint;
        matrices[v] = influence ? influence(method, model, train_set, test_set, params)
                                : model_influence(method, model, train_set, test_set, params);
    }

    StabilityReport report;
    report.method = method;
    report.axis = axis;
    report.variations = variations;
    double sp = 0.0, ss = 0.0, so = 0.0;
    for (size_t a = 0; a < variations.size(); ++a)
        for (size_t b = a + 1; b < variations.size(); ++b) {
            StabilityPair pair;
            pair.variation_a = variations[a];
            pair.variation_b = variations[b];
            pair.fingerprint_a = fingerprints[a];
            pair.fingerprint_b = fingerprints[b];
            double pp = 0.0, ps = 0.0, po = 0.0;
            for (size_t j = 0; j < test_set.size(); ++j) {
                CorrelationTriple t = correlation_triple(matrices[a].row(j), matrices[b].row(j));
                pp += t.pearson;
                ps += t.spearman;
                po += t.top_decile_overlap;
            }
            const double nt = static_cast<double>(test_set.size());
            pair.mean_over_tests = {pp / nt, ps / nt, po / nt};
            sp += pair.mean_over_tests.pearson;
            ss += pair.mean_over_tests.spearman;
            so += pair.mean_over_tests.top_decile_overlap;
            report.pairs.push_back(pair);
        }
    const double np = static_cast<double>(report.pairs.size());
    report.averaged = {sp / np, ss / np, so / np};
    return report;
}

// ---------------------------------------------------------------------------
// Expected-influence stability: disjoint ensembles vs single-model pairs
// ---------------------------------------------------------------------------

struct ExpectedStability {
    Method method = Method::grad_dot;
    CorrelationTriple expected_triple; // E-matrix of ensemble A vs ensemble B
    CorrelationTriple baseline_triple; // mean over matched single-model pairs
    size_t model_count = 0;
};

namespace detail {

inline CorrelationTriple mean_row_triple(const InfluenceMatrix& a, const InfluenceMatrix& b) {
    double p = 0.0, s = 0.0, o = 0.0;
    for (size_t j = 0; j < a.n_test; ++j) {
        CorrelationTriple t = correlation_triple(a.row(j), b.row(j));
        p += t.pearson;
        s += t.spearman;
        o += t.top_decile_overlap;
    }
    const double nt = static_cast<double>(a.n_test);
    return {p / nt, s / nt, o / nt};
}

} // namespace detail

/// Correlates the two ensembles' mean matrices against each other and, as
/// the baseline, model i of A against model i of B. A higher expected
/// triple than baseline means averaging stabilized the method.
inline ExpectedStability expected_stability(Method method,
                                            const std::vector<TrainedModel>& ensemble_a,
                                            const std::vector<TrainedModel>& ensemble_b,
                                            const Dataset& train_set, const Dataset& test_set,
                                            const MethodParams& params = {},
                                            const InfluenceFn& influence = {}) {
    if (ensemble_a.size() != ensemble_b.size() || ensemble_a.empty())
        throw ConfigError("expected_stability: ensembles must be non-empty and equal-sized");

    auto compute = [&](const TrainedModel& model) {
        return influence ? influence(method, model, train_set, test_set, params)
                         : model_influence(method, model, train_set, test_set, params);
    };
    std::vector<InfluenceMatrix> ma(ensemble_a.size()), mb(ensemble_b.size());
    for (size_t i = 0; i < ensemble_a.size(); ++i) {
        ma[i] = compute(ensemble_a[i]);
        mb[i] = compute(ensemble_b[i]);
    }
    ExpectedInfluence ea = average_matrices(method, ma, false);
    ExpectedInfluence eb = average_matrices(method, mb, false);

    ExpectedStability out;
    out.method = method;
    out.model_count = ensemble_a.size();
    out.expected_triple = detail::mean_row_triple(ea.mean, eb.mean);
    double p = 0.0, s = 0.0, o = 0.0;
    for (size_t i = 0; i < ma.size(); ++i) {
        CorrelationTriple t = detail::mean_row_triple(ma[i], mb[i]);
        p += t.pearson;
        s += t.spearman;
        o += t.top_decile_overlap;
    }
    const double n = static_cast<double>(ma.size());
    out.baseline_triple = {p / n, s / n, o / n};
    return out;
}

// ---------------------------------------------------------------------------
// Cross-method correlation
// ---------------------------------------------------------------------------

/// Symmetric matrix of mean per-test-row Pearson between method pairs.
/// All inputs must describe the same model (or ensemble) and id lists.
inline std::vector<std::vector<double>>
cross_method_correlation(const std::vector<InfluenceMatrix>& matrices) {
    if (matrices.empty()) throw ConfigError("cross_method_correlation: no matrices");
    const InfluenceMatrix& first = matrices.front();
    for (const InfluenceMatrix& m : matrices) {
        if (m.train_ids != first.train_ids || m.test_ids != first.test_ids)
            throw ConfigError("cross_method_correlation: id lists differ");
        if (m.model_fingerprint != first.model_fingerprint)
            throw ConfigError("cross_method_correlation: matrices come from different models");
    }
    const size_t k = matrices.size();
    std::vector<std::vector<double>> out(k, std::vector<double>(k, 1.0));
    for (size_t a = 0; a < k; ++a)
        for (size_t b = a + 1; b < k; ++b) {
            double sum = 0.0;
            for (size_t j = 0; j < first.n_test; ++j)
                sum += pearson(matrices[a].row(j), matrices[b].row(j));
            const double mean = sum / static_cast<double>(first.n_test);
            out[a][b] = mean;
            out[b][a] = mean;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Sanity tests
// ---------------------------------------------------------------------------

/// `copy_of[j]` is the train column that test row j duplicates. A row passes
/// when that column is the strict argmax; ties fail.
inline double identical_instance_test(const InfluenceMatrix& m,
                                      const std::vector<uint32_t>& copy_of) {
    if (copy_of.size() != m.n_test)
        throw ConfigError("identical_instance_test: copy list length " +
                          std::to_string(copy_of.size()) + " does not match " +
                          std::to_string(m.n_test) + " test rows");
    size_t passes = 0;
    for (size_t j = 0; j < m.n_test; ++j) {
        if (copy_of[j] >= m.n_train)
            throw ConfigError("identical_instance_test: copy column out of range for row " +
                              std::to_string(j));
        const double own = m.at(j, copy_of[j]);
        bool strict = true;
        for (size_t i = 0; i < m.n_train && strict; ++i)
            if (i != copy_of[j] && m.at(j, i) >= own) strict = false;
        if (strict) ++passes;
    }
    return static_cast<double>(passes) / static_cast<double>(m.n_test);
}

/// A row passes when the argmax column's training label equals the model's
/// predicted class for that test example. Argmax ties resolve to the lowest
/// column index.
inline double identical_class_test(const InfluenceMatrix& m, const Dataset& train_set,
                                   const std::vector<int>& predictions) {
    if (train_set.size() != m.n_train)
        throw ConfigError("identical_class_test: train set size mismatch");
    if (predictions.size() != m.n_test)
        throw ConfigError("identical_class_test: prediction count " +
                          std::to_string(predictions.size()) + " does not match " +
                          std::to_string(m.n_test) + " test rows");
    size_t passes = 0;
    for (size_t j = 0; j < m.n_test; ++j) {
        size_t best = 0;
        for (size_t i = 1; i < m.n_train; ++i)
            if (m.at(j, i) > m.at(j, best)) best = i;
        if (train_set.examples[best].label == predictions[j]) ++passes;
    }
    return static_cast<double>(passes) / static_cast<double>(m.n_test);
}

// ---------------------------------------------------------------------------
// Poison detection report
// ---------------------------------------------------------------------------

enum class PoisonGroup { poisoned, clean_source, clean_target };

inline const char* to_string(PoisonGroup g) {
    switch (g) {
        case PoisonGroup::poisoned: return "poisoned";
        case PoisonGroup::clean_source: return "clean_source";
        default: return "clean_target";
    }
}

struct PoisonGroupStat {
    double mean_share = 0.0; // normalized share from the ensemble-mean matrix
    double min_share = 0.0;  // extremes of per-model normalized shares
    double max_share = 0.0;
};

struct PoisonMethodRow {
    Method method = Method::grad_dot;
    std::array<PoisonGroupStat, 3> groups; // order: poisoned, clean_source, clean_target
};

struct PoisonReport {
    std::vector<PoisonMethodRow> rows;
    size_t test_count = 0;
    size_t model_count = 0;
    int source_class = -1;
    int target_class = -1;
    std::array<size_t, 3> group_sizes{};
};

namespace detail {

/// Raw group means -> nonnegative shares: shift by min(0, smallest), then
/// L1-normalize. All-equal degenerate case resolves to equal thirds.
inline std::array<double, 3> normalize_triple(const std::array<double, 3>& means) {
    const double smallest = std::min({means[0], means[1], means[2]});
    const double shift = std::min(0.0, smallest);
    std::array<double, 3> out{means[0] - shift, means[1] - shift, means[2] - shift};
    const double sum = out[0] + out[1] + out[2];
    if (sum <= 0.0) return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    for (double& v : out) v /= sum;
    return out;
}

inline std::array<double, 3> group_means(const InfluenceMatrix& m,
                                         const std::array<std::vector<size_t>, 3>& groups) {
    std::array<double, 3> means{};
    for (size_t g = 0; g < 3; ++g) {
        double sum = 0.0;
        for (size_t j = 0; j < m.n_test; ++j)
            for (size_t col : groups[g]) sum += m.at(j, col);
        means[g] = sum / (static_cast<double>(m.n_test) *
                          static_cast<double>(groups[g].size()));
    }
    return means;
}

} // namespace detail

/// Per method: the normalized (poisoned, clean source, clean target) share
/// triple from the ensemble-mean matrix, with per-model min/max error bars.
inline PoisonReport poison_report(const std::vector<ExpectedInfluence>& expected,
                                  const Dataset& train_set, const Dataset& test_set) {
    if (expected.empty()) throw ConfigError("poison_report: no expected influence inputs");
    for (const Example& ex : test_set.examples)
        if (ex.origin != Origin::poisoned)
            throw DataError("poison_report: test example " + std::to_string(ex.id) +
                            " is not poisoned; the protocol poisons every test example");

    // source/target classes come from the train set's poison metadata
    int source = -1, target = -1;
    for (const Example& ex : train_set.examples)
        if (ex.origin == Origin::poisoned) {
            if (source == -1) {
                source = ex.original_label;
                target = ex.label;
            } else if (ex.original_label != source || ex.label != target) {
                throw DataError("poison_report: mixed poison source/target classes");
            }
        }
    if (source == -1) throw DataError("poison_report: train set has no poisoned examples");

    std::array<std::vector<size_t>, 3> groups; // column indices per group
    for (size_t i = 0; i < train_set.size(); ++i) {
        const Example& ex = train_set.examples[i];
        if (ex.origin == Origin::poisoned)
            groups[0].push_back(i);
        else if (ex.label == source)
            groups[1].push_back(i);
        else if (ex.label == target)
            groups[2].push_back(i);
    }
    for (size_t g = 0; g < 3; ++g)
        if (groups[g].empty())
            throw DataError(std::string("poison_report: empty group '") +
                            to_string(static_cast<PoisonGroup>(g)) + "'");

    PoisonReport report;
    report.test_count = test_set.size();
    report.source_class = source;
    report.target_class = target;
    for (size_t g = 0; g < 3; ++g) report.group_sizes[g] = groups[g].size();

    for (const ExpectedInfluence& e : expected) {
        if (e.per_model.empty())
            throw ConfigError(std::string("poison_report: ") + to_string(e.method) +
                              " has no per-model matrices (needed for error bars)");
        if (e.mean.n_train != train_set.size() || e.mean.n_test != test_set.size())
            throw ConfigError("poison_report: matrix shape does not match the datasets");
        report.model_count = e.per_model.size();

        PoisonMethodRow row;
        row.method = e.method;
        const auto mean_shares = detail::normalize_triple(detail::group_means(e.mean, groups));
        for (size_t g = 0; g < 3; ++g) row.groups[g].mean_share = mean_shares[g];

        bool first = true;
        for (const InfluenceMatrix& m : e.per_model) {
            const auto shares = detail::normalize_triple(detail::group_means(m, groups));
            for (size_t g = 0; g < 3; ++g) {
                if (first) {
                    row.groups[g].min_share = shares[g];
                    row.groups[g].max_share = shares[g];
                } else {
                    row.groups[g].min_share = std::min(row.groups[g].min_share, shares[g]);
                    row.groups[g].max_share = std::max(row.groups[g].max_share, shares[g]);
                }
            }
            first = false;
        }
        report.rows.push_back(row);
    }
    return report;
}

} // namespace ilab
