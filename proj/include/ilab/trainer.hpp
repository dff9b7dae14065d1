#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ilab/dataset.hpp"
#include "ilab/errors.hpp"
#include "ilab/mlp.hpp"
#include "ilab/rng.hpp"

namespace ilab {

struct TrainConfig {
    MLPArchitecture arch;
    uint64_t init_seed = 1;
    uint64_t order_seed = 1;
    int batch_size = 32;
    double learning_rate = 0.05;
    int epochs = 20;
    double weight_decay = 1e-3;
    bool record_step_trace = false;

    void validate() const {
        arch.validate();
        if (batch_size <= 0) throw ConfigError("batch_size must be positive");
        if (learning_rate < 0.0) throw ConfigError("learning_rate must be nonnegative");
        if (epochs <= 0) throw ConfigError("epochs must be positive");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
        if (record_step_trace && batch_size != 1)
            throw ConfigError("record_step_trace requires batch_size=1");
    }

    /// Canonical text form; hashed for fingerprints and cache keys.
    std::string canonical() const {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "|init=%llu|order=%llu|bs=%d|lr=%.17g|ep=%d|wd=%.17g|trace=%d",
                      static_cast<unsigned long long>(init_seed),
                      static_cast<unsigned long long>(order_seed),
                      batch_size, learning_rate, epochs, weight_decay,
                      record_step_trace ? 1 : 0);
        return "arch=" + arch.describe() + buf;
    }
};

struct Checkpoint {
    int epoch = 0; // 0-based; saved after this epoch finished
    ParameterVector params;
    double learning_rate = 0.0;
};

struct StepRecord {
    uint64_t step = 0;
    uint32_t example_id = 0;
    ParameterVector params_after; // params_before = previous record (or the init vector)
};

struct StepTrace {
    ParameterVector initial_params;
    std::vector<StepRecord> steps;
};

struct TrainedModel {
    TrainConfig config;
    ParameterVector final_params;
    std::vector<Checkpoint> checkpoints;
    std::optional<StepTrace> step_trace;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    uint64_t fingerprint = 0;
    uint64_t dataset_hash = 0;
};

/// Glorot-uniform weights, U[-r, r] with r = sqrt(6/(fan_in+fan_out)) per
/// layer; biases exactly zero. Deterministic in (arch, init_seed).
inline ParameterVector init_params(const MLPArchitecture& arch, uint64_t init_seed) {
    arch.validate();
    ParameterVector params(arch.param_count(), 0.0);
    Rng rng(init_seed);
    for (size_t l = 0; l < arch.num_layers(); ++l) {
        const int fan_in = arch.layer_sizes[l];
        const int fan_out = arch.layer_sizes[l + 1];
        const double r = std::sqrt(6.0 / (fan_in + fan_out));
        double* w = params.data() + arch.weight_offset(l);
        const size_t n = static_cast<size_t>(fan_in) * fan_out;
        for (size_t k = 0; k < n; ++k) w[k] = rng.uniform(-r, r);
        // biases stay zero
    }
    return params;
}

/// Permutation of 0..n-1 for one epoch, seeded by hash(order_seed, epoch).
inline std::vector<uint32_t> epoch_order(size_t n_train, uint64_t order_seed, int epoch) {
    if (n_train < 1) throw ConfigError("epoch_order: empty training set");
    std::vector<uint32_t> order(n_train);
    for (size_t i = 0; i < n_train; ++i) order[i] = static_cast<uint32_t>(i);
    Rng rng(mix_u64(order_seed, static_cast<uint64_t>(epoch)));
    shuffle(order, rng);
    return order;
}

inline double accuracy(const ParameterVector& params, const MLPArchitecture& arch,
                       const Dataset& ds) {
    if (ds.examples.empty()) return 0.0;
    size_t hits = 0;
    MLPWorkspace ws;
    for (const Example& ex : ds.examples) {
        forward_into(params, arch, ex.pixels, ws);
        const auto& logits = ws.act.back();
        int best = 0;
        for (size_t c = 1; c < logits.size(); ++c)
            if (logits[c] > logits[best]) best = static_cast<int>(c);
        if (best == ex.label) ++hits;
    }
    return static_cast<double>(hits) / ds.examples.size();
}

inline uint64_t model_fingerprint(const TrainConfig& config, const ParameterVector& final_params,
                                  uint64_t data_hash) {
    const std::string c = config.canonical();
    uint64_t h = fnv1a(c.data(), c.size());
    h = fnv1a(final_params.data(), final_params.size() * sizeof(double), h);
    h = fnv1a(&data_hash, sizeof data_hash, h);
    return h;
}

namespace detail {

/// Plain SGD over a fixed per-epoch ordering with an optional held-out id.
/// Batches re-pack after the deletion, matching the delete-in-place
/// leave-one-out semantics.
inline TrainedModel train_impl(const TrainConfig& config, const Dataset& train_set,
                               const Dataset& test_set,
                               std::optional<uint32_t> holdout_id) {
    config.validate();
    if (train_set.examples.empty()) throw DataError("train: empty training set");
    if (train_set.pixel_count() != static_cast<size_t>(config.arch.input_size()))
        throw ConfigError("train: dataset pixel count " + std::to_string(train_set.pixel_count()) +
                          " does not match architecture input size " +
                          std::to_string(config.arch.input_size()));
    if (holdout_id && *holdout_id >= train_set.examples.size())
        throw DataError("loo_retrain: unknown holdout id " + std::to_string(*holdout_id));

    const size_t n = train_set.examples.size();
    TrainedModel model;
    model.config = config;
    model.dataset_hash = dataset_hash(train_set);

    ParameterVector params = init_params(config.arch, config.init_seed);
    const bool trace = config.record_step_trace;
    if (trace) model.step_trace = StepTrace{params, {}};

    ParameterVector grad(params.size());
    MLPWorkspace ws;
    uint64_t step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<uint32_t> order = epoch_order(n, config.order_seed, epoch);
        if (holdout_id)
            std::erase(order, *holdout_id);

        for (size_t pos = 0; pos < order.size(); pos += config.batch_size) {
            const size_t end = std::min(order.size(), pos + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - pos);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            // any numeric failure mid-training means the run diverged
            try {
                for (size_t k = pos; k < end; ++k) {
                    const Example& ex = train_set.examples[order[k]];
                    batch_loss += add_loss_gradient(params, config.arch, ex.pixels, ex.label,
                                                    scale, grad, ws);
                }
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at step " + std::to_string(step) +
                                   " (lower the learning rate)");
            }
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite training loss at step " + std::to_string(step) +
                                   " (lower the learning rate)");
            if (config.weight_decay != 0.0)
                for (size_t k = 0; k < grad.size(); ++k)
                    grad[k] += config.weight_decay * params[k];
            for (size_t k = 0; k < params.size(); ++k)
                params[k] -= config.learning_rate * grad[k];

            if (trace)
                model.step_trace->steps.push_back({step, order[pos], params});
            ++step;
        }
        model.checkpoints.push_back({epoch, params, config.learning_rate});
    }

    model.final_params = std::move(params);
    model.train_accuracy = accuracy(model.final_params, config.arch, train_set);
    model.test_accuracy = test_set.examples.empty()
                              ? 0.0
                              : accuracy(model.final_params, config.arch, test_set);
    model.fingerprint = model_fingerprint(config, model.final_params, model.dataset_hash);
    return model;
}

} // namespace detail

/// Deterministic SGD training; bitwise-reproducible in (config, data).
inline TrainedModel train(const TrainConfig& config, const Dataset& train_set,
                          const Dataset& test_set) {
    return detail::train_impl(config, train_set, test_set, std::nullopt);
}

/// Retrains with `holdout_id` deleted from every epoch's order sequence;
/// same initialization, same hyperparameters.
inline TrainedModel loo_retrain(const TrainConfig& config, const Dataset& train_set,
                                uint32_t holdout_id, const Dataset& test_set) {
    return detail::train_impl(config, train_set, test_set, holdout_id);
}

} // namespace ilab
