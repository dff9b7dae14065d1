#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ilab/errors.hpp"
#include "ilab/rng.hpp"

namespace ilab {

/// Deterministic two-class digit renderer. Class 0 draws an elliptic ring,
/// class 1 a slanted vertical stroke; both get per-example geometry jitter
/// and pixel noise, so the classes are learnable but not trivially
/// separable by single pixels. Images are written interleaved by class
/// (0, 1, 0, 1, ...) so any prefix is balanced.
struct SyntheticSpec {
    size_t per_class = 1000;
    uint32_t rows = 28;
    uint32_t cols = 28;
    double jitter = 1.5;      // center displacement, pixels
    double noise = 0.10;      // uniform pixel noise amplitude, fraction of full scale
    double label_noise = 0.0; // fraction of examples with a flipped label
    uint64_t seed = 7;

    void validate() const {
        if (per_class == 0) throw ConfigError("synthetic: per_class must be positive");
        if (rows < 8 || cols < 8) throw ConfigError("synthetic: images must be at least 8x8");
        if (noise < 0.0 || noise > 1.0) throw ConfigError("synthetic: noise must be in [0,1]");
        if (label_noise < 0.0 || label_noise > 1.0)
            throw ConfigError("synthetic: label_noise must be in [0,1]");
    }
};

struct SyntheticData {
    uint32_t rows = 0;
    uint32_t cols = 0;
    std::vector<std::vector<uint8_t>> images;
    std::vector<uint8_t> labels;
};

namespace detail {

inline uint8_t clamp_u8(double v) {
    if (v <= 0.0) return 0;
    if (v >= 255.0) return 255;
    return static_cast<uint8_t>(std::lround(v));
}

inline std::vector<uint8_t> render_ring(const SyntheticSpec& spec, Rng& rng) {
    const double cy = (spec.rows - 1) / 2.0 + rng.uniform(-spec.jitter, spec.jitter);
    const double cx = (spec.cols - 1) / 2.0 + rng.uniform(-spec.jitter, spec.jitter);
    const double ay = spec.rows * rng.uniform(0.26, 0.34); // vertical semi-axis
    const double ax = spec.cols * rng.uniform(0.20, 0.30); // horizontal semi-axis
    const double thick = rng.uniform(0.10, 0.16);          // ring width in ellipse units
    std::vector<uint8_t> img(static_cast<size_t>(spec.rows) * spec.cols, 0);
    for (uint32_t r = 0; r < spec.rows; ++r)
        for (uint32_t c = 0; c < spec.cols; ++c) {
            const double ey = (r - cy) / ay;
            const double ex = (c - cx) / ax;
            const double e = std::sqrt(ex * ex + ey * ey);
            const double v = 255.0 * std::exp(-(e - 1.0) * (e - 1.0) / (2.0 * thick * thick));
            img[r * spec.cols + c] = clamp_u8(v);
        }
    return img;
}

inline std::vector<uint8_t> render_bar(const SyntheticSpec& spec, Rng& rng) {
    const double cx = (spec.cols - 1) / 2.0 + rng.uniform(-spec.jitter, spec.jitter);
    const double cy = (spec.rows - 1) / 2.0;
    const double slant = rng.uniform(-0.18, 0.18); // horizontal drift per row
    const double half = spec.rows * rng.uniform(0.30, 0.38);
    const double thick = rng.uniform(1.1, 1.8); // stroke half-width, pixels
    std::vector<uint8_t> img(static_cast<size_t>(spec.rows) * spec.cols, 0);
    for (uint32_t r = 0; r < spec.rows; ++r) {
        if (std::abs(r - cy) > half) continue;
        const double center = cx + slant * (r - cy);
        for (uint32_t c = 0; c < spec.cols; ++c) {
            const double dx = (c - center) / thick;
            const double v = 255.0 * std::exp(-dx * dx / 2.0);
            img[r * spec.cols + c] = clamp_u8(v);
        }
    }
    return img;
}

} // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(mix_u64(spec.seed, 0x53594e5448ULL)); // "SYNTH"
    SyntheticData data;
    data.rows = spec.rows;
    data.cols = spec.cols;
    data.images.reserve(2 * spec.per_class);
    data.labels.reserve(2 * spec.per_class);
    for (size_t i = 0; i < spec.per_class; ++i) {
        for (uint8_t cls : {uint8_t{0}, uint8_t{1}}) {
            std::vector<uint8_t> img =
                cls == 0 ? detail::render_ring(spec, rng) : detail::render_bar(spec, rng);
            if (spec.noise > 0.0)
                for (uint8_t& px : img) {
                    const double n = 255.0 * spec.noise * rng.uniform(-1.0, 1.0);
                    px = detail::clamp_u8(px + n);
                }
            uint8_t label = cls;
            if (spec.label_noise > 0.0 && rng.next_double() < spec.label_noise) label = 1 - label;
            data.images.push_back(std::move(img));
            data.labels.push_back(label);
        }
    }
    return data;
}

} // namespace ilab
