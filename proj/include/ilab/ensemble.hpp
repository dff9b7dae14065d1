#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ilab/dataset.hpp"
#include "ilab/errors.hpp"
#include "ilab/influence.hpp"
#include "ilab/parallel.hpp"
#include "ilab/trainer.hpp"

namespace ilab {

struct EnsembleSpec {
    TrainConfig base_config;
    size_t model_count = 20;
    std::vector<std::pair<uint64_t, uint64_t>> seed_pairs; // (init_seed, order_seed)

    void validate() const {
        base_config.validate();
        if (model_count == 0) throw ConfigError("ensemble: model_count must be positive");
        if (seed_pairs.size() != model_count)
            throw ConfigError("ensemble: " + std::to_string(seed_pairs.size()) +
                              " seed pairs for model_count " + std::to_string(model_count));
        std::set<std::pair<uint64_t, uint64_t>> seen(seed_pairs.begin(), seed_pairs.end());
        if (seen.size() != seed_pairs.size())
            throw ConfigError("ensemble: duplicate seed pairs");
    }
};

/// Derives model i's seeds from a base seed; spacing keeps two ensembles
/// with different bases disjoint for any sane model count.
inline EnsembleSpec make_ensemble_spec(const TrainConfig& base, size_t model_count,
                                       uint64_t base_seed) {
    EnsembleSpec spec;
    spec.base_config = base;
    spec.model_count = model_count;
    for (size_t i = 0; i < model_count; ++i)
        spec.seed_pairs.emplace_back(base_seed + i, base_seed + 500000 + i);
    return spec;
}

inline void check_disjoint(const EnsembleSpec& a, const EnsembleSpec& b) {
    std::set<std::pair<uint64_t, uint64_t>> seen(a.seed_pairs.begin(), a.seed_pairs.end());
    for (const auto& p : b.seed_pairs)
        if (seen.count(p))
            throw ConfigError("ensembles share seed pair (" + std::to_string(p.first) + ", " +
                              std::to_string(p.second) + "); sets must be disjoint");
}

/// Replaceable training entry point; the CLI substitutes a caching wrapper.
using TrainerFn = std::function<TrainedModel(const TrainConfig&)>;

inline std::vector<TrainedModel> build_ensemble(const EnsembleSpec& spec,
                                                const Dataset& train_set,
                                                const Dataset& test_set, int jobs = 1,
                                                const TrainerFn& trainer = {}) {
    spec.validate();
    std::vector<TrainedModel> models(spec.model_count);
    parallel_for(spec.model_count, jobs, [&](size_t i) {
        TrainConfig c = spec.base_config;
        c.init_seed = spec.seed_pairs[i].first;
        c.order_seed = spec.seed_pairs[i].second;
        try {
            models[i] = trainer ? trainer(c) : train(c, train_set, test_set);
        } catch (const NumericError& e) {
            throw NumericError("ensemble: training with seeds (" +
                               std::to_string(c.init_seed) + ", " +
                               std::to_string(c.order_seed) + ") failed: " + e.what());
        }
    });
    return models;
}

struct ExpectedInfluence {
    Method method = Method::grad_dot;
    InfluenceMatrix mean;                  // elementwise mean across models
    InfluenceMatrix min;                   // elementwise minimum
    InfluenceMatrix max;                   // elementwise maximum
    std::vector<InfluenceMatrix> per_model; // kept when requested (poison error bars)
};

/// Elementwise mean/min/max of constituent matrices. `keep_constituents`
/// retains the per-model matrices for error-bar reporting.
inline ExpectedInfluence average_matrices(Method method,
                                          std::vector<InfluenceMatrix> matrices,
                                          bool keep_constituents = false) {
    if (matrices.empty()) throw ConfigError("expected influence: no constituent matrices");
    const InfluenceMatrix& first = matrices.front();
    for (const InfluenceMatrix& m : matrices) {
        if (m.method != method)
            throw ConfigError("expected influence: constituent method mismatch");
        if (m.n_test != first.n_test || m.n_train != first.n_train ||
            m.train_ids != first.train_ids || m.test_ids != first.test_ids)
            throw ConfigError("expected influence: constituent shapes or ids differ");
    }

    ExpectedInfluence out;
    out.method = method;
    out.mean = first;
    out.min = first;
    out.max = first;
    // fingerprint of the mean: order-independent combination of constituents
    uint64_t fp = 0;
    for (const InfluenceMatrix& m : matrices) fp ^= m.model_fingerprint;
    out.mean.model_fingerprint = fp;
    out.min.model_fingerprint = fp;
    out.max.model_fingerprint = fp;

    const size_t cells = first.scores.size();
    for (size_t k = 0; k < cells; ++k) {
        double sum = 0.0, lo = matrices[0].scores[k], hi = lo;
        for (const InfluenceMatrix& m : matrices) {
            const double v = m.scores[k];
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        out.mean.scores[k] = sum / static_cast<double>(matrices.size());
        out.min.scores[k] = lo;
        out.max.scores[k] = hi;
    }
    if (keep_constituents) out.per_model = std::move(matrices);
    return out;
}

/// Parameters the per-model method computations need beyond the model itself.
struct MethodParams {
    double damping = 1e-3;     // influence_function
    double rps_lambda = 1e-2;  // rps refit penalty
    size_t hessian_cap = kDefaultHessianCap;
    int jobs = 1;              // loo retrain fan-out
};

/// One method's InfluenceMatrix for one model of an ensemble. LOO runs a
/// full sweep per model (its config seeds select the model); the others
/// read the trained artifacts.
inline InfluenceMatrix model_influence(Method method, const TrainedModel& model,
                                       const Dataset& train_set, const Dataset& test_set,
                                       const MethodParams& params) {
    try {
        switch (method) {
            case Method::loo:
                return loo(model.config, train_set, test_set, params.jobs);
            case Method::infl_fn:
                return influence_function(model, train_set, test_set, params.damping,
                                          params.hessian_cap);
            case Method::tracein_ideal:
                return tracein_ideal(model, train_set, test_set);
            case Method::tracein_cp:
                return tracein_cp(model, train_set, test_set);
            case Method::rps:
                return rps(model, train_set, test_set, params.rps_lambda);
            case Method::grad_dot:
                return grad_dot(model, train_set, test_set);
            default:
                return grad_cos(model, train_set, test_set);
        }
    } catch (const NumericError& e) {
        throw NumericError(std::string(to_string(method)) + " on model " +
                           std::to_string(model.fingerprint) + ": " + e.what());
    }
}

/// Replaceable per-model influence computation; the CLI substitutes a
/// caching wrapper.
using InfluenceFn = std::function<InfluenceMatrix(
    Method, const TrainedModel&, const Dataset&, const Dataset&, const MethodParams&)>;

inline ExpectedInfluence expected_influence(Method method,
                                            const std::vector<TrainedModel>& ensemble,
                                            const Dataset& train_set, const Dataset& test_set,
                                            const MethodParams& params,
                                            bool keep_constituents = false,
                                            const InfluenceFn& influence = {}) {
    if (ensemble.empty()) throw ConfigError("expected influence: empty ensemble");
    std::vector<InfluenceMatrix> matrices(ensemble.size());
    for (size_t i = 0; i < ensemble.size(); ++i)
        matrices[i] = influence
                          ? influence(method, ensemble[i], train_set, test_set, params)
                          : model_influence(method, ensemble[i], train_set, test_set, params);
    return average_matrices(method, std::move(matrices), keep_constituents);
}

} // namespace ilab
