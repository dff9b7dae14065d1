#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ilab/dataset.hpp"
#include "ilab/ensemble.hpp"
#include "ilab/errors.hpp"
#include "ilab/eval.hpp"
#include "ilab/idx.hpp"
#include "ilab/influence.hpp"
#include "ilab/io.hpp"
#include "ilab/trainer.hpp"

namespace ilab {

/// Everything a run needs, parsed from one key=value config file.
/// Unknown keys are rejected so typos cannot silently fall back to defaults.
struct ExperimentConfig {
    // dataset
    std::string train_images, train_labels, test_images, test_labels;
    std::vector<int> classes{0, 1};
    size_t per_class_train = 1000;
    size_t per_class_test = 200;
    uint64_t subset_seed = 11;

    // training
    std::vector<int> hidden_layers{16};
    Activation activation = Activation::relu;
    uint64_t init_seed = 1;
    uint64_t order_seed = 1;
    int batch_size = 32;
    double learning_rate = 0.05;
    int epochs = 20;
    double weight_decay = 1e-3;
    bool record_step_trace = false;

    // influence methods
    std::vector<Method> methods{Method::tracein_cp, Method::grad_dot, Method::grad_cos};
    double damping = 1e-3;
    double rps_lambda = 1e-2;
    size_t hessian_cap = kDefaultHessianCap;

    // stability protocol
    StabilityAxis axis = StabilityAxis::initialization;
    std::vector<uint64_t> axis_seeds{1, 2, 3, 4};
    std::vector<uint64_t> axis_batch_sizes{16, 32, 64};

    // ensembles
    size_t ensemble_count = 10;
    uint64_t ensemble_seed_a = 100;
    uint64_t ensemble_seed_b = 200;

    // poison
    int poison_source_class = 0;
    int poison_target_class = 1;
    size_t poison_count = 100;
    uint64_t poison_seed = 33;
    TriggerPatch trigger;

    std::string output_dir = "out";

    TrainConfig train_config(int input_size, int n_classes) const {
        TrainConfig c;
        c.arch.layer_sizes.push_back(input_size);
        for (int h : hidden_layers) c.arch.layer_sizes.push_back(h);
        c.arch.layer_sizes.push_back(n_classes);
        c.arch.activation = activation;
        c.init_seed = init_seed;
        c.order_seed = order_seed;
        c.batch_size = batch_size;
        c.learning_rate = learning_rate;
        c.epochs = epochs;
        c.weight_decay = weight_decay;
        c.record_step_trace = record_step_trace;
        c.validate();
        return c;
    }

    MethodParams method_params(int jobs) const {
        MethodParams p;
        p.damping = damping;
        p.rps_lambda = rps_lambda;
        p.hessian_cap = hessian_cap;
        p.jobs = jobs;
        return p;
    }

    PoisonSpec poison_spec() const {
        PoisonSpec s;
        s.source_class = poison_source_class;
        s.target_class = poison_target_class;
        s.count = poison_count;
        s.trigger = trigger;
        s.seed = poison_seed;
        return s;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        size_t comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        std::string part = trim(s.substr(start, comma - start));
        if (!part.empty()) out.push_back(part);
        start = comma + 1;
    }
    return out;
}

inline long long parse_ll(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        long long x = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        unsigned long long x = std::stoull(v, &used);
        if (used != v.size() || !v.empty() && v[0] == '-') throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
    }
}

inline double parse_f64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    size_t line_no = 0;
    size_t start = 0;
    while (start <= text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(start, nl - start);
        start = nl + 1;
        ++line_no;

        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;

        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (!seen.insert(key).second)
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                              key + "'");

        using detail::parse_bool;
        using detail::parse_f64;
        using detail::parse_ll;
        using detail::parse_u64;
        using detail::split_commas;

        if (key == "train_images") cfg.train_images = value;
        else if (key == "train_labels") cfg.train_labels = value;
        else if (key == "test_images") cfg.test_images = value;
        else if (key == "test_labels") cfg.test_labels = value;
        else if (key == "classes") {
            cfg.classes.clear();
            for (const auto& p : split_commas(value))
                cfg.classes.push_back(static_cast<int>(parse_ll(key, p)));
        } else if (key == "per_class_train") cfg.per_class_train = parse_u64(key, value);
        else if (key == "per_class_test") cfg.per_class_test = parse_u64(key, value);
        else if (key == "subset_seed") cfg.subset_seed = parse_u64(key, value);
        else if (key == "hidden_layers") {
            cfg.hidden_layers.clear();
            for (const auto& p : split_commas(value))
                cfg.hidden_layers.push_back(static_cast<int>(parse_ll(key, p)));
        } else if (key == "activation") cfg.activation = activation_from_string(value);
        else if (key == "init_seed") cfg.init_seed = parse_u64(key, value);
        else if (key == "order_seed") cfg.order_seed = parse_u64(key, value);
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_ll(key, value));
        else if (key == "learning_rate") cfg.learning_rate = parse_f64(key, value);
        else if (key == "epochs") cfg.epochs = static_cast<int>(parse_ll(key, value));
        else if (key == "weight_decay") cfg.weight_decay = parse_f64(key, value);
        else if (key == "record_step_trace") cfg.record_step_trace = parse_bool(key, value);
        else if (key == "methods") {
            cfg.methods.clear();
            for (const auto& p : split_commas(value)) cfg.methods.push_back(method_from_string(p));
            if (cfg.methods.empty()) throw ConfigError("methods: empty list");
        } else if (key == "damping") cfg.damping = parse_f64(key, value);
        else if (key == "rps_lambda") cfg.rps_lambda = parse_f64(key, value);
        else if (key == "hessian_cap") cfg.hessian_cap = parse_u64(key, value);
        else if (key == "axis") cfg.axis = axis_from_string(value);
        else if (key == "axis_seeds") {
            cfg.axis_seeds.clear();
            for (const auto& p : split_commas(value)) cfg.axis_seeds.push_back(parse_u64(key, p));
        } else if (key == "axis_batch_sizes") {
            cfg.axis_batch_sizes.clear();
            for (const auto& p : split_commas(value))
                cfg.axis_batch_sizes.push_back(parse_u64(key, p));
        } else if (key == "ensemble_count") cfg.ensemble_count = parse_u64(key, value);
        else if (key == "ensemble_seed_a") cfg.ensemble_seed_a = parse_u64(key, value);
        else if (key == "ensemble_seed_b") cfg.ensemble_seed_b = parse_u64(key, value);
        else if (key == "poison_source_class")
            cfg.poison_source_class = static_cast<int>(parse_ll(key, value));
        else if (key == "poison_target_class")
            cfg.poison_target_class = static_cast<int>(parse_ll(key, value));
        else if (key == "poison_count") cfg.poison_count = parse_u64(key, value);
        else if (key == "poison_seed") cfg.poison_seed = parse_u64(key, value);
        else if (key == "trigger_rows") cfg.trigger.rows = static_cast<uint32_t>(parse_u64(key, value));
        else if (key == "trigger_cols") cfg.trigger.cols = static_cast<uint32_t>(parse_u64(key, value));
        else if (key == "trigger_anchor") cfg.trigger.anchor = patch_anchor_from_string(value);
        else if (key == "trigger_value") cfg.trigger.value = parse_f64(key, value);
        else if (key == "output_dir") cfg.output_dir = value;
        else
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                              "'");
    }

    if (cfg.classes.size() < 2) throw ConfigError("classes: need at least 2 classes");
    {
        std::set<int> uniq(cfg.classes.begin(), cfg.classes.end());
        if (uniq.size() != cfg.classes.size()) throw ConfigError("classes: duplicate entries");
    }
    for (int h : cfg.hidden_layers)
        if (h <= 0) throw ConfigError("hidden_layers: sizes must be positive");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    try {
        return parse_experiment_config(std::string(bytes.begin(), bytes.end()));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Dataset assembly from config
// ---------------------------------------------------------------------------

struct ExperimentData {
    Dataset train;
    Dataset test;
};

inline Dataset load_idx_subset(const std::string& images_path, const std::string& labels_path,
                               const std::vector<int>& classes, size_t per_class,
                               uint64_t seed) {
    if (images_path.empty() || labels_path.empty())
        throw ConfigError("dataset paths missing (train_images/train_labels/"
                          "test_images/test_labels)");
    IdxImages images = parse_idx_images(detail::read_file_bytes(images_path));
    std::vector<int> labels = parse_idx_labels(detail::read_file_bytes(labels_path));
    try {
        return build_subset(images, labels, classes, per_class, seed);
    } catch (const DataError& e) {
        throw DataError(images_path + ": " + e.what());
    }
}

/// Loads both splits. Disjoint subset seeds keep train/test selections
/// independent even when both read the same IDX files.
inline ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
    ExperimentData data;
    data.train = load_idx_subset(cfg.train_images, cfg.train_labels, cfg.classes,
                                 cfg.per_class_train, mix_u64(cfg.subset_seed, 1));
    data.test = load_idx_subset(cfg.test_images, cfg.test_labels, cfg.classes,
                                cfg.per_class_test, mix_u64(cfg.subset_seed, 2));
    return data;
}

} // namespace ilab
