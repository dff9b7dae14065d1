#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>

#include "ilab/ensemble.hpp"
#include "ilab/io.hpp"
#include "ilab/rng.hpp"
#include "ilab/run_store.hpp"

namespace ilab {

/// Cache key for one influence matrix. The model fingerprint already covers
/// config and dataset; only method parameters that change scores are mixed
/// in (damping for influence functions, lambda for the representer refit).
inline std::filesystem::path matrix_cache_path(const std::filesystem::path& cache_root,
                                               const TrainedModel& model, Method method,
                                               const MethodParams& params) {
    uint64_t h = model.fingerprint;
    const char* name = to_string(method);
    h = fnv1a(name, std::string(name).size(), h);
    if (method == Method::infl_fn) {
        const uint64_t bits = std::bit_cast<uint64_t>(params.damping);
        h = fnv1a(&bits, sizeof bits, h);
    } else if (method == Method::rps) {
        const uint64_t bits = std::bit_cast<uint64_t>(params.rps_lambda);
        h = fnv1a(&bits, sizeof bits, h);
    }
    return cache_root / "matrices" / (std::string(name) + "_" + hex_u64(h) + ".im");
}

/// model_influence through the cache: load the matrix when its keyed file
/// exists, otherwise compute and persist it.
inline InfluenceMatrix cached_model_influence(const std::filesystem::path& cache_root,
                                              Method method, const TrainedModel& model,
                                              const Dataset& train_set, const Dataset& test_set,
                                              const MethodParams& params) {
    const std::filesystem::path path = matrix_cache_path(cache_root, model, method, params);
    if (std::filesystem::exists(path)) {
        InfluenceMatrix m = read_matrix_file(path);
        if (m.method == method && m.n_train == train_set.size() &&
            m.n_test == test_set.size() && m.model_fingerprint == model.fingerprint)
            return m;
        // stale or foreign file under our key: recompute and overwrite
    }
    InfluenceMatrix m = model_influence(method, model, train_set, test_set, params);
    std::filesystem::create_directories(path.parent_path());
    write_matrix_file(path, m);
    return m;
}

} // namespace ilab
