#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ilab/errors.hpp"
#include "ilab/influence.hpp"
#include "ilab/mlp.hpp"

namespace ilab {

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

inline void put_le_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 24));
}

inline void put_le_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_le_f64(std::vector<uint8_t>& out, double v) {
    put_le_u64(out, std::bit_cast<uint64_t>(v));
}

/// Bounds-checked little-endian reader over a byte buffer.
struct ByteReader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;
    std::string what; // file description for error messages

    void need(size_t n, const char* field) {
        if (pos + n > buf.size())
            throw DataError(what + ": truncated while reading " + field + " at offset " +
                            std::to_string(pos));
    }
    uint32_t u32(const char* field) {
        need(4, field);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* field) {
        need(8, field);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* field) { return std::bit_cast<double>(u64(field)); }
    void magic(const char* expect, const char* format_name) {
        need(8, "magic");
        if (std::memcmp(buf.data() + pos, expect, 8) != 0)
            throw DataError(what + ": not a " + format_name + " file (bad magic)");
        pos += 8;
    }
    void done() {
        if (pos != buf.size())
            throw DataError(what + ": " + std::to_string(buf.size() - pos) +
                            " trailing bytes after offset " + std::to_string(pos));
    }
};

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    if (in.bad()) throw DataError("read error on " + path.string());
    return buf;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write error on " + path.string());
}

inline void write_file_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw DataError("write error on " + path.string());
}

/// Shortest round-trip decimal form; %.17g always round-trips f64.
inline std::string format_f64(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// ParameterVector container "INFL-PV\0"
// ---------------------------------------------------------------------------

inline constexpr char kPvMagic[8] = {'I', 'N', 'F', 'L', '-', 'P', 'V', '\0'};
inline constexpr uint32_t kPvVersion = 1;

inline std::vector<uint8_t> serialize_params(const ParameterVector& params) {
    std::vector<uint8_t> out;
    out.reserve(16 + params.size() * 8);
    out.insert(out.end(), kPvMagic, kPvMagic + 8);
    detail::put_le_u32(out, kPvVersion);
    detail::put_le_u32(out, static_cast<uint32_t>(params.size()));
    for (double v : params) detail::put_le_f64(out, v);
    return out;
}

inline ParameterVector parse_params(const std::vector<uint8_t>& bytes,
                                    const std::string& what = "parameter vector") {
    detail::ByteReader r{bytes, 0, what};
    r.magic(kPvMagic, "parameter vector");
    const uint32_t version = r.u32("version");
    if (version != kPvVersion)
        throw DataError(what + ": unsupported version " + std::to_string(version));
    const uint32_t len = r.u32("length");
    ParameterVector params(len);
    for (uint32_t i = 0; i < len; ++i) params[i] = r.f64("values");
    r.done();
    return params;
}

inline void write_params_file(const std::filesystem::path& path, const ParameterVector& params) {
    detail::write_file_bytes(path, serialize_params(params));
}

inline ParameterVector read_params_file(const std::filesystem::path& path) {
    return parse_params(detail::read_file_bytes(path), path.string());
}

// ---------------------------------------------------------------------------
// InfluenceMatrix container "INFL-IM\0"
// ---------------------------------------------------------------------------

inline constexpr char kImMagic[8] = {'I', 'N', 'F', 'L', '-', 'I', 'M', '\0'};
inline constexpr uint32_t kImVersion = 1;

inline std::vector<uint8_t> serialize_matrix(const InfluenceMatrix& m) {
    std::vector<uint8_t> out;
    out.reserve(40 + 4 * (m.n_test + m.n_train) + 8 * m.scores.size());
    out.insert(out.end(), kImMagic, kImMagic + 8);
    detail::put_le_u32(out, kImVersion);
    detail::put_le_u32(out, static_cast<uint32_t>(m.method));
    detail::put_le_u64(out, m.model_fingerprint);
    detail::put_le_u32(out, static_cast<uint32_t>(m.n_test));
    detail::put_le_u32(out, static_cast<uint32_t>(m.n_train));
    for (uint32_t id : m.test_ids) detail::put_le_u32(out, id);
    for (uint32_t id : m.train_ids) detail::put_le_u32(out, id);
    for (double v : m.scores) detail::put_le_f64(out, v);
    return out;
}

inline InfluenceMatrix parse_matrix(const std::vector<uint8_t>& bytes,
                                    const std::string& what = "influence matrix") {
    detail::ByteReader r{bytes, 0, what};
    r.magic(kImMagic, "influence matrix");
    const uint32_t version = r.u32("version");
    if (version != kImVersion)
        throw DataError(what + ": unsupported version " + std::to_string(version));
    InfluenceMatrix m;
    const uint32_t method_tag = r.u32("method");
    if (method_tag > static_cast<uint32_t>(Method::grad_cos))
        throw DataError(what + ": unknown method tag " + std::to_string(method_tag));
    m.method = static_cast<Method>(method_tag);
    m.model_fingerprint = r.u64("fingerprint");
    m.n_test = r.u32("n_test");
    m.n_train = r.u32("n_train");
    m.test_ids.resize(m.n_test);
    for (auto& id : m.test_ids) id = r.u32("test ids");
    m.train_ids.resize(m.n_train);
    for (auto& id : m.train_ids) id = r.u32("train ids");
    m.scores.resize(m.n_test * m.n_train);
    for (auto& v : m.scores) v = r.f64("scores");
    r.done();
    return m;
}

inline void write_matrix_file(const std::filesystem::path& path, const InfluenceMatrix& m) {
    detail::write_file_bytes(path, serialize_matrix(m));
}

inline InfluenceMatrix read_matrix_file(const std::filesystem::path& path) {
    return parse_matrix(detail::read_file_bytes(path), path.string());
}

/// CSV form: header "test_id,<train id>,...", one row per test example,
/// scores printed with %.17g so they parse back bit-exactly.
inline std::string matrix_to_csv(const InfluenceMatrix& m) {
    std::string out = "test_id";
    for (uint32_t id : m.train_ids) {
        out += ',';
        out += std::to_string(id);
    }
    out += '\n';
    for (size_t j = 0; j < m.n_test; ++j) {
        out += std::to_string(m.test_ids[j]);
        for (size_t i = 0; i < m.n_train; ++i) {
            out += ',';
            out += detail::format_f64(m.at(j, i));
        }
        out += '\n';
    }
    return out;
}

inline void write_matrix_csv(const std::filesystem::path& path, const InfluenceMatrix& m) {
    detail::write_file_text(path, matrix_to_csv(m));
}

} // namespace ilab
