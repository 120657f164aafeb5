#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "deepmaps/runconfig.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace deepmaps;

namespace {

/// Independent FNV-1a 64 over a string, written from the published constants
/// rather than the library, so the config hash has an external check.
std::string fnv_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig parse_text(const std::string& text, const std::string& source = "test.conf") {
    std::istringstream in(text);
    return parse_run_config(in, source);
}

std::string message_of(const std::string& text) {
    try {
        parse_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("runconfig") {

TEST_CASE("defaults finalize cleanly and resolved_text is a parse fixed point") {
    RunConfig config;
    config.finalize();
    CHECK(config.grid.width == 32);
    CHECK(config.grid.num_hours == 168);
    CHECK(config.cv_folds == 5);
    CHECK(config.ablation_test_fraction == doctest::Approx(0.15));

    const std::string text = resolved_text(config);
    RunConfig reparsed = parse_text(text);
    CHECK(resolved_text(reparsed) == text);
    CHECK(config_hash(reparsed) == config_hash(config));
}

TEST_CASE("every key survives a get/set round trip") {
    RunConfig config;
    config.finalize();
    const std::vector<std::string> keys = run_config_keys();
    CHECK(keys.size() >= 40);
    for (const std::string& key : keys) {
        const std::string value = get_run_config_value(config, key);
        RunConfig copy = config;
        set_run_config_value(copy, key, value);
        CHECK(get_run_config_value(copy, key) == value);
    }
    // and the keys of resolved_text are exactly run_config_keys(), sorted
    std::vector<std::string> sorted = keys;
    std::sort(sorted.begin(), sorted.end());
    std::istringstream lines(resolved_text(config));
    std::string line;
    std::size_t i = 0;
    while (std::getline(lines, line)) {
        REQUIRE(i < sorted.size());
        const std::string key = line.substr(0, line.find('='));
        CHECK(key == sorted[i]);
        ++i;
    }
    CHECK(i == sorted.size());
}

TEST_CASE("unknown keys and malformed lines are rejected with file:line") {
    const std::string unknown = message_of("seed=1\n\ngrid.hieght=4\n");
    CHECK(unknown.find("test.conf:3") != std::string::npos);  // blank lines still count
    CHECK(unknown.find("unknown config key 'grid.hieght'") != std::string::npos);

    const std::string no_equals = message_of("# comment\njust words\n");
    CHECK(no_equals.find("test.conf:2") != std::string::npos);
    CHECK(no_equals.find("expected key=value, got 'just words'") != std::string::npos);

    const std::string bad_int = message_of("grid.width=abc\n");
    CHECK(bad_int.find("test.conf:1") != std::string::npos);
    CHECK(bad_int.find("grid.width") != std::string::npos);

    // the master seed is unsigned; a negative literal is not silently wrapped
    const std::string bad_seed = message_of("seed=-1\n");
    CHECK(bad_seed.find("unsigned") != std::string::npos);
}

TEST_CASE("comments, blanks, padding, and CRLF endings all parse") {
    RunConfig config = parse_text(
        "# pipeline overrides\r\n"
        "\r\n"
        "  seed = 99  \r\n"
        "grid.width=16\r\n"
        "io.out_dir = run7 \r\n");
    CHECK(config.seed == 99);
    CHECK(config.grid.width == 16);
    CHECK(config.out_dir == "run7");
}

TEST_CASE("finalize mirrors the shared grid and seed into the city section") {
    RunConfig config;
    set_run_config_value(config, "seed", "99");
    set_run_config_value(config, "grid.width", "16");
    set_run_config_value(config, "grid.hours", "24");
    config.finalize();
    CHECK(config.city.seed == 99);
    CHECK(config.city.grid.width == 16);
    CHECK(config.city.grid.num_hours == 24);
}

TEST_CASE("finalize rejects out-of-range settings") {
    auto expect_reject = [](const std::string& key, const std::string& value) {
        RunConfig config;
        set_run_config_value(config, key, value);
        CHECK_THROWS_AS(config.finalize(), ConfigError);
    };
    expect_reject("cv.folds", "1");
    expect_reject("cv.knn_k", "0");
    expect_reject("cv.idw_power", "0");
    expect_reject("features.static_filters", "0");
    expect_reject("features.dynamic_filters", "0");
    expect_reject("features.macro_shifts", "0");
    expect_reject("features.gap_fill_hours", "-1");
    expect_reject("ablate.fractions", "10,10");
    expect_reject("ablate.fractions", "-1,50");
    expect_reject("ablate.test_fraction", "1");
    expect_reject("ablate.test_fraction", "0");
}

TEST_CASE("list and enum values are formatted canonically") {
    RunConfig config;
    CHECK(get_run_config_value(config, "features.macro_shifts") == "1,2,3,6");
    CHECK(get_run_config_value(config, "ablate.fractions") == "0,20,40,60,80,100");
    CHECK(get_run_config_value(config, "grid.cell_km") == "1");
    CHECK(get_run_config_value(config, "cv.mode") == "random");

    set_run_config_value(config, "features.macro_shifts", " 2, 4 ,8 ");
    CHECK(get_run_config_value(config, "features.macro_shifts") == "2,4,8");
    set_run_config_value(config, "grid.cell_km", "0.5");
    CHECK(get_run_config_value(config, "grid.cell_km") == "0.5");
    set_run_config_value(config, "cv.mode", "grid_grouped");
    CHECK(get_run_config_value(config, "cv.mode") == "grid_grouped");
    CHECK_THROWS_AS(set_run_config_value(config, "cv.mode", "spatial"), ConfigError);
    CHECK_THROWS_AS(set_run_config_value(config, "city.boundary", "open"), ConfigError);
}

TEST_CASE("config_hash matches an independent FNV-1a and tracks changes") {
    RunConfig config;
    config.finalize();
    CHECK(config_hash(config) == fnv_hex(resolved_text(config)));

    const std::string before = config_hash(config);
    set_run_config_value(config, "seed", "12345");
    config.finalize();
    CHECK(config_hash(config) != before);
    CHECK(config_hash(config) == fnv_hex(resolved_text(config)));
}

TEST_CASE("write_resolved_config round trips through load_run_config") {
    testutil::TempDir dir("runconfig");
    RunConfig config;
    set_run_config_value(config, "seed", "7");
    set_run_config_value(config, "grid.width", "12");
    set_run_config_value(config, "grid.height", "9");
    config.finalize();

    const std::string path = dir.file("resolved.conf");
    write_resolved_config(config, path);
    const std::string written = testutil::read_text(path);
    CHECK(written.rfind("# config=" + config_hash(config) + "\n", 0) == 0);

    RunConfig loaded = load_run_config(path);
    CHECK(config_hash(loaded) == config_hash(config));
    CHECK(resolved_text(loaded) == resolved_text(config));
    CHECK(loaded.grid.width == 12);
    CHECK(loaded.city.grid.height == 9);
}

TEST_CASE("load_run_config reports a missing file") {
    CHECK_THROWS_AS(load_run_config("/nonexistent/deepmaps.conf"), IoError);
}

}  // TEST_SUITE
