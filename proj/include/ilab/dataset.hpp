#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "ilab/errors.hpp"
#include "ilab/idx.hpp"
#include "ilab/rng.hpp"

namespace ilab {

enum class Origin : uint8_t { clean = 0, poisoned = 1 };

struct Example {
    uint32_t id = 0;
    std::vector<double> pixels; // [0,1], length = height*width
    int label = 0;
    Origin origin = Origin::clean;
    int original_label = 0; // equals label when clean
};

struct Dataset {
    std::vector<Example> examples;
    std::vector<std::string> class_names;
    uint32_t height = 0;
    uint32_t width = 0;

    size_t size() const { return examples.size(); }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

enum class PatchAnchor : uint8_t { top_left, top_right, bottom_left, bottom_right };

inline const char* to_string(PatchAnchor a) {
    switch (a) {
        case PatchAnchor::top_left: return "top_left";
        case PatchAnchor::top_right: return "top_right";
        case PatchAnchor::bottom_left: return "bottom_left";
        default: return "bottom_right";
    }
}

inline PatchAnchor patch_anchor_from_string(const std::string& s) {
    if (s == "top_left") return PatchAnchor::top_left;
    if (s == "top_right") return PatchAnchor::top_right;
    if (s == "bottom_left") return PatchAnchor::bottom_left;
    if (s == "bottom_right") return PatchAnchor::bottom_right;
    throw ConfigError("unknown trigger anchor '" + s + "'");
}

/// Backdoor trigger: a solid rectangular patch written over the image.
struct TriggerPatch {
    uint32_t rows = 3;
    uint32_t cols = 3;
    PatchAnchor anchor = PatchAnchor::bottom_right;
    double value = 1.0;
};

struct PoisonSpec {
    int source_class = 0;
    int target_class = 1;
    size_t count = 0;
    TriggerPatch trigger;
    uint64_t seed = 0;
};

/// Deterministic balanced subset: for each kept class, a seeded shuffle of its
/// source-order index list, then the first `per_class`. Labels are remapped to
/// 0..k-1 in keep_classes order; ids reassigned 0..n-1.
inline Dataset build_subset(const IdxImages& images, const std::vector<int>& labels,
                            const std::vector<int>& keep_classes, size_t per_class,
                            uint64_t seed) {
    if (images.images.size() != labels.size())
        throw DataError("image count " + std::to_string(images.images.size()) +
                        " does not match label count " + std::to_string(labels.size()));
    if (keep_classes.empty()) throw ConfigError("build_subset: no classes to keep");
    if (per_class == 0) throw ConfigError("build_subset: per_class must be positive");

    Dataset out;
    out.height = images.rows;
    out.width = images.cols;
    Rng rng(seed);
    for (size_t c = 0; c < keep_classes.size(); ++c) {
        const int cls = keep_classes[c];
        std::vector<uint32_t> idx;
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) idx.push_back(static_cast<uint32_t>(i));
        if (idx.size() < per_class)
            throw DataError("class " + std::to_string(cls) + " has only " +
                            std::to_string(idx.size()) + " examples, need " +
                            std::to_string(per_class));
        shuffle(idx, rng);
        for (size_t k = 0; k < per_class; ++k) {
            Example ex;
            ex.pixels = images.images[idx[k]];
            ex.label = static_cast<int>(c);
            ex.original_label = ex.label;
            out.examples.push_back(std::move(ex));
        }
        out.class_names.push_back(std::to_string(cls));
    }
    for (size_t i = 0; i < out.examples.size(); ++i)
        out.examples[i].id = static_cast<uint32_t>(i);
    return out;
}

namespace detail {
inline void apply_trigger(std::vector<double>& pixels, uint32_t height, uint32_t width,
                          const TriggerPatch& t) {
    const uint32_t pr = std::min(t.rows, height);
    const uint32_t pc = std::min(t.cols, width);
    const uint32_t r0 = (t.anchor == PatchAnchor::top_left || t.anchor == PatchAnchor::top_right)
                            ? 0 : height - pr;
    const uint32_t c0 = (t.anchor == PatchAnchor::top_left || t.anchor == PatchAnchor::bottom_left)
                            ? 0 : width - pc;
    const double v = std::clamp(t.value, 0.0, 1.0);
    for (uint32_t r = 0; r < pr; ++r)
        for (uint32_t c = 0; c < pc; ++c)
            pixels[static_cast<size_t>(r0 + r) * width + (c0 + c)] = v;
}
} // namespace detail

/// Writes the trigger over `spec.count` source-class examples (chosen by a
/// seeded shuffle), relabels them to the target class, and marks them
/// poisoned. Everything else, including example order, is untouched.
inline Dataset inject_poison(const Dataset& dataset, const PoisonSpec& spec) {
    if (spec.source_class == spec.target_class)
        throw ConfigError("poison source and target class must differ");
    std::vector<uint32_t> source_ids;
    for (const Example& ex : dataset.examples)
        if (ex.label == spec.source_class && ex.origin == Origin::clean)
            source_ids.push_back(ex.id);
    if (spec.count > source_ids.size())
        throw DataError("poison count " + std::to_string(spec.count) +
                        " exceeds source-class population " + std::to_string(source_ids.size()));

    Rng rng(spec.seed);
    shuffle(source_ids, rng);
    source_ids.resize(spec.count);
    std::sort(source_ids.begin(), source_ids.end());

    Dataset out = dataset;
    for (uint32_t id : source_ids) {
        Example& ex = out.examples[id];
        detail::apply_trigger(ex.pixels, out.height, out.width, spec.trigger);
        ex.original_label = ex.label;
        ex.label = spec.target_class;
        ex.origin = Origin::poisoned;
    }
    return out;
}

/// Builds the evaluation set for a poison run: every source-class example,
/// each given the same trigger and relabeled to the target class. The
/// resulting set contains only poisoned examples.
inline Dataset poison_test_set(const Dataset& test_set, const PoisonSpec& spec) {
    if (spec.source_class == spec.target_class)
        throw ConfigError("poison source and target class must differ");
    Dataset out;
    out.class_names = test_set.class_names;
    out.height = test_set.height;
    out.width = test_set.width;
    for (const Example& ex : test_set.examples)
        if (ex.label == spec.source_class && ex.origin == Origin::clean) {
            Example p = ex;
            detail::apply_trigger(p.pixels, out.height, out.width, spec.trigger);
            p.original_label = p.label;
            p.label = spec.target_class;
            p.origin = Origin::poisoned;
            out.examples.push_back(std::move(p));
        }
    if (out.examples.empty())
        throw DataError("poison_test_set: no clean source-class examples to poison");
    for (size_t i = 0; i < out.examples.size(); ++i)
        out.examples[i].id = static_cast<uint32_t>(i);
    return out;
}

/// New dataset from a subset of examples (by current ids), ids reassigned.
inline Dataset select_examples(const Dataset& dataset, const std::vector<uint32_t>& ids) {
    Dataset out;
    out.class_names = dataset.class_names;
    out.height = dataset.height;
    out.width = dataset.width;
    for (uint32_t id : ids) {
        if (id >= dataset.examples.size())
            throw DataError("select_examples: id " + std::to_string(id) + " out of range");
        out.examples.push_back(dataset.examples[id]);
    }
    for (size_t i = 0; i < out.examples.size(); ++i)
        out.examples[i].id = static_cast<uint32_t>(i);
    return out;
}

// ---------------------------------------------------------------------------
// Native snapshot container ("INFL-DS\0"): dims, class names, and per-example
// id/label/origin/original_label/pixels as little-endian f64. Round-trips
// bit-exactly.
// ---------------------------------------------------------------------------

namespace detail {
inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    const size_t n = out.size();
    out.resize(n + 4);
    std::memcpy(out.data() + n, &v, 4);
}
inline void put_f64(std::vector<uint8_t>& out, double v) {
    const size_t n = out.size();
    out.resize(n + 8);
    std::memcpy(out.data() + n, &v, 8);
}
inline uint32_t get_u32(std::span<const uint8_t> in, size_t& off) {
    if (off + 4 > in.size()) throw DataError("dataset snapshot truncated");
    uint32_t v;
    std::memcpy(&v, in.data() + off, 4);
    off += 4;
    return v;
}
inline double get_f64(std::span<const uint8_t> in, size_t& off) {
    if (off + 8 > in.size()) throw DataError("dataset snapshot truncated");
    double v;
    std::memcpy(&v, in.data() + off, 8);
    off += 8;
    return v;
}
} // namespace detail

constexpr char kDatasetMagic[8] = {'I', 'N', 'F', 'L', '-', 'D', 'S', '\0'};
constexpr uint32_t kDatasetVersion = 1;

inline std::vector<uint8_t> serialize_dataset(const Dataset& ds) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kDatasetMagic, kDatasetMagic + 8);
    detail::put_u32(out, kDatasetVersion);
    detail::put_u32(out, ds.height);
    detail::put_u32(out, ds.width);
    detail::put_u32(out, static_cast<uint32_t>(ds.class_names.size()));
    for (const std::string& name : ds.class_names) {
        detail::put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
    }
    detail::put_u32(out, static_cast<uint32_t>(ds.examples.size()));
    for (const Example& ex : ds.examples) {
        detail::put_u32(out, ex.id);
        detail::put_u32(out, static_cast<uint32_t>(ex.label));
        detail::put_u32(out, static_cast<uint32_t>(ex.origin));
        detail::put_u32(out, static_cast<uint32_t>(ex.original_label));
        for (double px : ex.pixels) detail::put_f64(out, px);
    }
    return out;
}

inline Dataset parse_dataset(std::span<const uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kDatasetMagic, 8) != 0)
        throw DataError("dataset snapshot: bad magic");
    size_t off = 8;
    const uint32_t version = detail::get_u32(bytes, off);
    if (version != kDatasetVersion)
        throw DataError("dataset snapshot: unsupported version " + std::to_string(version));
    Dataset ds;
    ds.height = detail::get_u32(bytes, off);
    ds.width = detail::get_u32(bytes, off);
    const uint32_t n_classes = detail::get_u32(bytes, off);
    for (uint32_t c = 0; c < n_classes; ++c) {
        const uint32_t len = detail::get_u32(bytes, off);
        if (off + len > bytes.size()) throw DataError("dataset snapshot truncated");
        ds.class_names.emplace_back(reinterpret_cast<const char*>(bytes.data() + off), len);
        off += len;
    }
    const uint32_t n = detail::get_u32(bytes, off);
    const size_t px = static_cast<size_t>(ds.height) * ds.width;
    ds.examples.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        Example& ex = ds.examples[i];
        ex.id = detail::get_u32(bytes, off);
        ex.label = static_cast<int>(detail::get_u32(bytes, off));
        ex.origin = static_cast<Origin>(detail::get_u32(bytes, off));
        ex.original_label = static_cast<int>(detail::get_u32(bytes, off));
        ex.pixels.resize(px);
        for (size_t k = 0; k < px; ++k) ex.pixels[k] = detail::get_f64(bytes, off);
    }
    if (off != bytes.size()) throw DataError("dataset snapshot: trailing bytes");
    return ds;
}

/// Stable content hash; keys training-run caches.
inline uint64_t dataset_hash(const Dataset& ds) {
    const auto bytes = serialize_dataset(ds);
    return fnv1a(bytes.data(), bytes.size());
}

} // namespace ilab
