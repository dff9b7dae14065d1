#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "ilab/errors.hpp"

namespace ilab {

/// IDX is the big-endian binary container MNIST ships in:
/// images: u32 magic 0x00000803, u32 count, u32 rows, u32 cols, then raw bytes;
/// labels: u32 magic 0x00000801, u32 count, then raw bytes.
constexpr uint32_t kIdxImageMagic = 0x00000803u;
constexpr uint32_t kIdxLabelMagic = 0x00000801u;

namespace detail {
inline uint32_t read_be_u32(std::span<const uint8_t> bytes, size_t offset) {
    if (offset + 4 > bytes.size())
        throw DataError("IDX parse error at offset " + std::to_string(offset) +
                        ": truncated header");
    return (static_cast<uint32_t>(bytes[offset]) << 24) |
           (static_cast<uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<uint32_t>(bytes[offset + 3]);
}

inline void write_be_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}
} // namespace detail

struct IdxImages {
    uint32_t rows = 0;
    uint32_t cols = 0;
    std::vector<std::vector<double>> images; // each rows*cols, scaled to [0,1]
};

/// Decodes an IDX image file; pixel bytes are scaled to [0,1] by /255.
inline IdxImages parse_idx_images(std::span<const uint8_t> bytes) {
    const uint32_t magic = detail::read_be_u32(bytes, 0);
    if (magic != kIdxImageMagic)
        throw DataError("IDX parse error at offset 0: expected image magic 0x00000803, got 0x" +
                        [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", magic); return std::string(b); }());
    const uint32_t count = detail::read_be_u32(bytes, 4);
    const uint32_t rows = detail::read_be_u32(bytes, 8);
    const uint32_t cols = detail::read_be_u32(bytes, 12);
    const size_t expect = 16 + static_cast<size_t>(count) * rows * cols;
    if (bytes.size() < expect)
        throw DataError("IDX parse error at offset " + std::to_string(bytes.size()) +
                        ": truncated image payload (need " + std::to_string(expect) + " bytes)");
    if (bytes.size() > expect)
        throw DataError("IDX parse error at offset " + std::to_string(expect) +
                        ": trailing bytes after image payload");

    IdxImages out;
    out.rows = rows;
    out.cols = cols;
    out.images.resize(count);
    const size_t px = static_cast<size_t>(rows) * cols;
    for (uint32_t i = 0; i < count; ++i) {
        out.images[i].resize(px);
        const uint8_t* src = bytes.data() + 16 + static_cast<size_t>(i) * px;
        for (size_t k = 0; k < px; ++k)
            out.images[i][k] = static_cast<double>(src[k]) / 255.0;
    }
    return out;
}

inline std::vector<int> parse_idx_labels(std::span<const uint8_t> bytes) {
    const uint32_t magic = detail::read_be_u32(bytes, 0);
    if (magic != kIdxLabelMagic)
        throw DataError("IDX parse error at offset 0: expected label magic 0x00000801, got 0x" +
                        [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", magic); return std::string(b); }());
    const uint32_t count = detail::read_be_u32(bytes, 4);
    if (count == 0) throw DataError("IDX parse error: empty dataset (label count 0)");
    const size_t expect = 8 + static_cast<size_t>(count);
    if (bytes.size() < expect)
        throw DataError("IDX parse error at offset " + std::to_string(bytes.size()) +
                        ": truncated label payload (need " + std::to_string(expect) + " bytes)");
    if (bytes.size() > expect)
        throw DataError("IDX parse error at offset " + std::to_string(expect) +
                        ": trailing bytes after label payload");
    std::vector<int> labels(count);
    for (uint32_t i = 0; i < count; ++i)
        labels[i] = static_cast<int>(bytes[8 + i]);
    return labels;
}

/// Encoders, used by the bundled dataset generator and by tests.
inline std::vector<uint8_t> write_idx_images(uint32_t rows, uint32_t cols,
                                             const std::vector<std::vector<uint8_t>>& images) {
    std::vector<uint8_t> out;
    detail::write_be_u32(out, kIdxImageMagic);
    detail::write_be_u32(out, static_cast<uint32_t>(images.size()));
    detail::write_be_u32(out, rows);
    detail::write_be_u32(out, cols);
    for (const auto& img : images) {
        if (img.size() != static_cast<size_t>(rows) * cols)
            throw DataError("write_idx_images: image size mismatch");
        out.insert(out.end(), img.begin(), img.end());
    }
    return out;
}

inline std::vector<uint8_t> write_idx_labels(const std::vector<uint8_t>& labels) {
    std::vector<uint8_t> out;
    detail::write_be_u32(out, kIdxLabelMagic);
    detail::write_be_u32(out, static_cast<uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

} // namespace ilab
