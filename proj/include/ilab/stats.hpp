#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "ilab/errors.hpp"

namespace ilab {

struct CorrelationTriple {
    double pearson = 0.0;
    double spearman = 0.0;
    double top_decile_overlap = 0.0; // percentage, 0..100
};

/// Sample Pearson correlation. A constant input yields 0 rather than NaN;
/// zero-gradient test rows make that case routine.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ConfigError("pearson: length mismatch");
    if (a.size() < 2) throw ConfigError("pearson: need at least 2 values");
    const size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

/// Average ranks, ties get the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0; // 1-based mean rank
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/// Spearman = Pearson of average-ranked vectors; constant input yields 0.
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ConfigError("spearman: length mismatch");
    if (a.size() < 2) throw ConfigError("spearman: need at least 2 values");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    return pearson(ra, rb);
}

/// Indices of the k = ceil(n/10) largest values; ties broken lowest index first.
inline std::vector<size_t> top_decile_indices(std::span<const double> v) {
    const size_t n = v.size();
    const size_t k = (n + 9) / 10;
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) {
        if (v[x] != v[y]) return v[x] > v[y];
        return x < y;
    });
    idx.resize(k);
    return idx;
}

/// Percentage of shared indices between the two vectors' top-decile sets.
inline double top_decile_overlap(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ConfigError("top_decile_overlap: length mismatch");
    if (a.size() < 10) throw ConfigError("top_decile_overlap: need at least 10 values");
    auto ta = top_decile_indices(a);
    auto tb = top_decile_indices(b);
    std::sort(ta.begin(), ta.end());
    std::sort(tb.begin(), tb.end());
    std::vector<size_t> inter;
    std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(inter));
    return 100.0 * static_cast<double>(inter.size()) / static_cast<double>(ta.size());
}

inline CorrelationTriple correlation_triple(std::span<const double> a, std::span<const double> b) {
    return {pearson(a, b), spearman(a, b), top_decile_overlap(a, b)};
}

} // namespace ilab
