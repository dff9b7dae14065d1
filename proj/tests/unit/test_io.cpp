#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <ilab/errors.hpp>
#include <ilab/influence.hpp>
#include <ilab/io.hpp>

#include "../support/helpers.hpp"

using namespace ilab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / "ilab_io_test";
    fs::create_directories(dir);
    return dir;
}

InfluenceMatrix sample_matrix() {
    const auto train_set = helpers::blob_dataset(2, 2, 1.0, 0.4, 110);
    const auto test_set = helpers::blob_dataset(1, 2, 1.0, 0.4, 111);
    InfluenceMatrix m(Method::tracein_cp, train_set, test_set, 0x1122334455667788ull);
    double v = 0.25;
    for (auto& s : m.scores) {
        s = v;
        v = -v * 1.75;
    }
    m.scores[0] = -0.0;
    m.scores[1] = 5e-324; // denormal min
    m.scores[2] = std::numeric_limits<double>::max();
    return m;
}

} // namespace

TEST_CASE("parameter vector container round-trips bit-exactly") {
    ParameterVector params{0.0, -0.0, 1.0, -1.5, 3.141592653589793,
                           5e-324, std::numeric_limits<double>::max(),
                           std::numeric_limits<double>::min()};
    const auto bytes = serialize_params(params);
    CHECK(bytes.size() == 16 + params.size() * 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 7) == "INFL-PV");
    const auto back = parse_params(bytes);
    REQUIRE(back.size() == params.size());
    for (size_t i = 0; i < params.size(); ++i)
        CHECK(std::bit_cast<uint64_t>(back[i]) == std::bit_cast<uint64_t>(params[i]));
}

TEST_CASE("parameter vector parser rejects damage") {
    const auto good = serialize_params({1.0, 2.0});
    auto bad_magic = good;
    bad_magic[5] = 'X';
    CHECK_THROWS_AS(parse_params(bad_magic), DataError);
    auto bad_version = good;
    bad_version[8] = 9;
    CHECK_THROWS_WITH(parse_params(bad_version),
                      Catch::Matchers::ContainsSubstring("version"));
    auto truncated = good;
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_WITH(parse_params(truncated, "test.pv"),
                      Catch::Matchers::ContainsSubstring("test.pv"));
    auto trailing = good;
    trailing.push_back(0);
    CHECK_THROWS_WITH(parse_params(trailing),
                      Catch::Matchers::ContainsSubstring("trailing"));
}

TEST_CASE("parameter vector file io") {
    const auto path = temp_dir() / "params.pv";
    ParameterVector params{1.0, -2.0, 0.5};
    write_params_file(path, params);
    CHECK(read_params_file(path) == params);
    CHECK_THROWS_AS(read_params_file(temp_dir() / "missing.pv"), DataError);
}

TEST_CASE("influence matrix container round-trips bit-exactly") {
    const auto m = sample_matrix();
    const auto bytes = serialize_matrix(m);
    const auto back = parse_matrix(bytes);
    CHECK(back.method == m.method);
    CHECK(back.model_fingerprint == m.model_fingerprint);
    CHECK(back.n_test == m.n_test);
    CHECK(back.n_train == m.n_train);
    CHECK(back.train_ids == m.train_ids);
    CHECK(back.test_ids == m.test_ids);
    REQUIRE(back.scores.size() == m.scores.size());
    for (size_t k = 0; k < m.scores.size(); ++k)
        CHECK(std::bit_cast<uint64_t>(back.scores[k]) == std::bit_cast<uint64_t>(m.scores[k]));
}

TEST_CASE("influence matrix parser rejects damage") {
    const auto good = serialize_matrix(sample_matrix());
    auto bad_magic = good;
    bad_magic[0] = 'Z';
    CHECK_THROWS_AS(parse_matrix(bad_magic), DataError);
    auto bad_method = good;
    bad_method[12] = 200; // method tag out of range
    CHECK_THROWS_WITH(parse_matrix(bad_method),
                      Catch::Matchers::ContainsSubstring("method tag"));
    auto truncated = good;
    truncated.resize(truncated.size() / 2);
    CHECK_THROWS_WITH(parse_matrix(truncated),
                      Catch::Matchers::ContainsSubstring("offset"));
    auto trailing = good;
    trailing.push_back(7);
    CHECK_THROWS_AS(parse_matrix(trailing), DataError);
}

TEST_CASE("influence matrix file io") {
    const auto path = temp_dir() / "scores.im";
    const auto m = sample_matrix();
    write_matrix_file(path, m);
    const auto back = read_matrix_file(path);
    CHECK(back.scores == m.scores);
    CHECK(back.method == m.method);
}

TEST_CASE("matrix csv has a header row and full-precision scores") {
    const auto m = sample_matrix();
    const auto csv = matrix_to_csv(m);
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "test_id,0,1,2,3");
    size_t rows = 0;
    std::string line;
    while (std::getline(lines, line)) {
        ++rows;
        // row starts with the test id, then n_train comma-separated scores
        CHECK(line.rfind(std::to_string(m.test_ids[rows - 1]) + ",", 0) == 0);
        size_t commas = 0;
        for (char ch : line) commas += ch == ',';
        CHECK(commas == m.n_train);
    }
    CHECK(rows == m.n_test);
    // %.17g keeps doubles round-trippable: check one survivor
    CHECK(csv.find(detail::format_f64(std::numeric_limits<double>::max())) != std::string::npos);
    const double parsed = std::strtod(
        detail::format_f64(3.141592653589793 / 7.0).c_str(), nullptr);
    CHECK(parsed == 3.141592653589793 / 7.0);
}

TEST_CASE("format_f64 round-trips awkward values") {
    for (double v : {0.1, -0.0, 1e-300, 9.99999999999999e15, 2.2250738585072014e-308}) {
        const double back = std::strtod(detail::format_f64(v).c_str(), nullptr);
        CHECK(std::bit_cast<uint64_t>(back) == std::bit_cast<uint64_t>(v));
    }
}
