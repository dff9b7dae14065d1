#pragma once

// Shared fixtures for tests: small hand-built datasets and seeded random
// vectors.

#include <cstdint>
#include <utility>
#include <vector>

#include <ilab/dataset.hpp>
#include <ilab/rng.hpp>

namespace helpers {

/// Dataset of raw feature vectors (height 1, width = dimension).
inline ilab::Dataset point_dataset(const std::vector<std::pair<std::vector<double>, int>>& pts) {
    ilab::Dataset ds;
    ds.height = 1;
    ds.width = pts.empty() ? 0 : static_cast<uint32_t>(pts.front().first.size());
    ds.class_names = {"0", "1"};
    for (size_t i = 0; i < pts.size(); ++i) {
        ilab::Example ex;
        ex.id = static_cast<uint32_t>(i);
        ex.pixels = pts[i].first;
        ex.label = pts[i].second;
        ex.original_label = ex.label;
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

/// Two Gaussian-ish blobs in `dim` dimensions (sum of uniforms approximates
/// a normal), classes 0/1 centered at -c and +c.
inline ilab::Dataset blob_dataset(size_t per_class, size_t dim, double center, double spread,
                                  uint64_t seed) {
    ilab::Rng rng(seed);
    std::vector<std::pair<std::vector<double>, int>> pts;
    for (size_t i = 0; i < per_class; ++i)
        for (int cls : {0, 1}) {
            std::vector<double> x(dim);
            for (size_t d = 0; d < dim; ++d) {
                double g = 0.0; // sum of 4 uniforms, roughly normal
                for (int k = 0; k < 4; ++k) g += rng.uniform(-1.0, 1.0);
                x[d] = (cls == 0 ? -center : center) + spread * g * 0.5;
            }
            pts.emplace_back(std::move(x), cls);
        }
    return point_dataset(pts);
}

inline std::vector<double> random_vector(ilab::Rng& rng, size_t n, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

} // namespace helpers
