#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/errors.hpp"
#include "ilab/io.hpp"
#include "ilab/mlp.hpp"
#include "ilab/rng.hpp"
#include "ilab/trainer.hpp"

#ifndef ILAB_VERSION
#define ILAB_VERSION "0.0.0"
#endif

namespace ilab {

using nlohmann::json;

inline std::string hex_u64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline uint64_t config_hash(const TrainConfig& config) {
    const std::string c = config.canonical();
    return fnv1a(c.data(), c.size());
}

/// Header block present in every emitted JSON document. The model-family
/// notice records the substitution baked into this tool: a dense MLP over
/// flattened pixels, not a convolutional net.
inline json report_header(uint64_t cfg_hash, uint64_t data_hash) {
    json h;
    h["tool"] = "influence-lab";
    h["version"] = ILAB_VERSION;
    h["config_hash"] = hex_u64(cfg_hash);
    h["dataset_hash"] = hex_u64(data_hash);
    h["model_family"] = "fully-connected MLP over flattened pixels (no convolutions)";
    h["normalization"] = "uint8 pixels divided by 255, no mean centering";
    return h;
}

// ---------------------------------------------------------------------------
// TrainConfig <-> JSON
// ---------------------------------------------------------------------------

inline json config_to_json(const TrainConfig& c) {
    json j;
    j["layer_sizes"] = c.arch.layer_sizes;
    j["activation"] = to_string(c.arch.activation);
    j["init_seed"] = c.init_seed;
    j["order_seed"] = c.order_seed;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["epochs"] = c.epochs;
    j["weight_decay"] = c.weight_decay;
    j["record_step_trace"] = c.record_step_trace;
    return j;
}

inline TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    try {
        c.arch.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        c.arch.activation = activation_from_string(j.at("activation").get<std::string>());
        c.init_seed = j.at("init_seed").get<uint64_t>();
        c.order_seed = j.at("order_seed").get<uint64_t>();
        c.batch_size = j.at("batch_size").get<int>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.epochs = j.at("epochs").get<int>();
        c.weight_decay = j.at("weight_decay").get<double>();
        c.record_step_trace = j.at("record_step_trace").get<bool>();
    } catch (const json::exception& e) {
        throw DataError(std::string("run.json: bad config block: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Step trace container "INFL-TR\0"
// ---------------------------------------------------------------------------

inline constexpr char kTrMagic[8] = {'I', 'N', 'F', 'L', '-', 'T', 'R', '\0'};
inline constexpr uint32_t kTrVersion = 1;

inline std::vector<uint8_t> serialize_trace(const StepTrace& trace) {
    const uint32_t plen = static_cast<uint32_t>(trace.initial_params.size());
    std::vector<uint8_t> out;
    out.reserve(24 + 8ull * plen + trace.steps.size() * (12 + 8ull * plen));
    out.insert(out.end(), kTrMagic, kTrMagic + 8);
    detail::put_le_u32(out, kTrVersion);
    detail::put_le_u32(out, plen);
    detail::put_le_u64(out, trace.steps.size());
    for (double v : trace.initial_params) detail::put_le_f64(out, v);
    for (const StepRecord& rec : trace.steps) {
        detail::put_le_u64(out, rec.step);
        detail::put_le_u32(out, rec.example_id);
        if (rec.params_after.size() != plen)
            throw DataError("trace: inconsistent parameter length at step " +
                            std::to_string(rec.step));
        for (double v : rec.params_after) detail::put_le_f64(out, v);
    }
    return out;
}

inline StepTrace parse_trace(const std::vector<uint8_t>& bytes,
                             const std::string& what = "step trace") {
    detail::ByteReader r{bytes, 0, what};
    r.magic(kTrMagic, "step trace");
    const uint32_t version = r.u32("version");
    if (version != kTrVersion)
        throw DataError(what + ": unsupported version " + std::to_string(version));
    const uint32_t plen = r.u32("parameter length");
    const uint64_t count = r.u64("step count");
    StepTrace trace;
    trace.initial_params.resize(plen);
    for (auto& v : trace.initial_params) v = r.f64("initial params");
    trace.steps.resize(count);
    for (auto& rec : trace.steps) {
        rec.step = r.u64("step index");
        rec.example_id = r.u32("example id");
        rec.params_after.resize(plen);
        for (auto& v : rec.params_after) v = r.f64("step params");
    }
    r.done();
    return trace;
}

// ---------------------------------------------------------------------------
// Run directory: run.json + final.pv + ckpt_<epoch>.pv [+ trace.bin]
// ---------------------------------------------------------------------------

namespace fs = std::filesystem;

struct RunPaths {
    fs::path dir;
    fs::path run_json() const { return dir / "run.json"; }
    fs::path final_params() const { return dir / "final.pv"; }
    fs::path checkpoint(int epoch) const {
        return dir / ("ckpt_" + std::to_string(epoch) + ".pv");
    }
    fs::path trace() const { return dir / "trace.bin"; }
    bool complete() const { return fs::exists(run_json()) && fs::exists(final_params()); }
};

inline void save_run(const RunPaths& paths, const TrainedModel& model) {
    fs::create_directories(paths.dir);
    json j;
    j["header"] = report_header(config_hash(model.config), model.dataset_hash);
    j["config"] = config_to_json(model.config);
    j["fingerprint"] = hex_u64(model.fingerprint);
    j["train_accuracy"] = model.train_accuracy;
    j["test_accuracy"] = model.test_accuracy;
    j["checkpoints"] = model.checkpoints.size();
    j["learning_rates"] = [&] {
        std::vector<double> lrs;
        for (const Checkpoint& cp : model.checkpoints) lrs.push_back(cp.learning_rate);
        return lrs;
    }();
    j["has_trace"] = model.step_trace.has_value();
    detail::write_file_text(paths.run_json(), j.dump(2) + "\n");

    write_params_file(paths.final_params(), model.final_params);
    for (const Checkpoint& cp : model.checkpoints)
        write_params_file(paths.checkpoint(cp.epoch), cp.params);
    if (model.step_trace)
        detail::write_file_bytes(paths.trace(), serialize_trace(*model.step_trace));
}

/// Rebuilds a TrainedModel from a completed run directory. Accuracies and
/// the fingerprint come from run.json; the caller re-derives datasets from
/// the experiment config.
inline TrainedModel load_run(const RunPaths& paths) {
    if (!fs::exists(paths.run_json()))
        throw DataError("run directory " + paths.dir.string() + " has no run.json");
    json j;
    try {
        j = json::parse(detail::read_file_bytes(paths.run_json()));
    } catch (const json::exception& e) {
        throw DataError(paths.run_json().string() + ": " + e.what());
    }

    TrainedModel model;
    try {
        model.config = config_from_json(j.at("config"));
        model.fingerprint = std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
        model.dataset_hash =
            std::stoull(j.at("header").at("dataset_hash").get<std::string>(), nullptr, 16);
        model.train_accuracy = j.at("train_accuracy").get<double>();
        model.test_accuracy = j.at("test_accuracy").get<double>();
    } catch (const json::exception& e) {
        throw DataError(paths.run_json().string() + ": " + e.what());
    }

    model.final_params = read_params_file(paths.final_params());
    check_params(model.final_params, model.config.arch);

    const size_t n_ckpt = j.at("checkpoints").get<size_t>();
    std::vector<double> lrs = j.at("learning_rates").get<std::vector<double>>();
    if (lrs.size() != n_ckpt)
        throw DataError(paths.run_json().string() + ": learning_rates length mismatch");
    for (size_t e = 0; e < n_ckpt; ++e) {
        Checkpoint cp;
        cp.epoch = static_cast<int>(e);
        cp.params = read_params_file(paths.checkpoint(cp.epoch));
        check_params(cp.params, model.config.arch);
        cp.learning_rate = lrs[e];
        model.checkpoints.push_back(std::move(cp));
    }

    if (j.at("has_trace").get<bool>()) {
        StepTrace trace = parse_trace(detail::read_file_bytes(paths.trace()),
                                      paths.trace().string());
        if (trace.initial_params.size() != model.config.arch.param_count())
            throw DataError(paths.trace().string() + ": parameter length mismatch");
        model.step_trace = std::move(trace);
    }
    return model;
}

/// Cache key for one training: (config canonical form, dataset hash).
inline std::string run_key(const TrainConfig& config, uint64_t data_hash) {
    const std::string c = config.canonical();
    uint64_t h = fnv1a(c.data(), c.size());
    h = fnv1a(&data_hash, sizeof data_hash, h);
    return hex_u64(h);
}

/// Trains through the cache: reuse a completed run directory when present,
/// otherwise train and persist. Cached artifacts are trusted blindly; the
/// key covers all inputs.
inline TrainedModel train_cached(const fs::path& cache_root, const TrainConfig& config,
                                 const Dataset& train_set, const Dataset& test_set) {
    RunPaths paths{cache_root / "runs" / run_key(config, dataset_hash(train_set))};
    if (paths.complete()) return load_run(paths);
    TrainedModel model = train(config, train_set, test_set);
    save_run(paths, model);
    return model;
}

} // namespace ilab
