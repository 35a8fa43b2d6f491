#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "tinv/archive.hpp"
#include "tinv/config.hpp"

using namespace tinv;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("tinv_test_" + tag);
    fs::remove_all(p);
    return p;
}

Archive sample_archive() {
    Archive ar;
    ar.spec = GridSpec{2, {4, 3, 0}, 2};
    ar.arrays.push_back(make_array("alpha", {4, 3}, std::vector<double>{
        0.5, -1.25, 3.0, 0.0625, 7.5, -0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
    ar.arrays.push_back(make_array("mask", {6}, std::vector<unsigned char>{1, 0, 1, 1, 0, 0}));
    return ar;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("archive round trip is value-exact and rewrite is byte-identical") {
    const fs::path dir = temp_dir("roundtrip");
    Archive ar = sample_archive();
    save_archive(dir, ar);
    Archive back = load_archive(dir);
    CHECK(back.spec.ndim == 2);
    CHECK(back.spec.nt == 2);
    REQUIRE(back.arrays.size() == 2);
    CHECK(back.find("alpha")->data == ar.arrays[0].data);
    CHECK(back.find("mask")->data == ar.arrays[1].data);
    CHECK(back.find("alpha")->shape == std::vector<int>{4, 3});

    const fs::path dir2 = temp_dir("roundtrip2");
    save_archive(dir2, ar);
    CHECK(slurp(dir / "manifest.json") == slurp(dir2 / "manifest.json"));
    CHECK(slurp(dir / "alpha.raw") == slurp(dir2 / "alpha.raw"));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("archive load rejects truncation, corruption and unknown dtypes") {
    const fs::path dir = temp_dir("broken");
    save_archive(dir, sample_archive());

    SUBCASE("truncated raw file") {
        fs::resize_file(dir / "alpha.raw", 10);
        CHECK_THROWS_AS(load_archive(dir), ShapeMismatch);
    }
    SUBCASE("corrupted byte") {
        std::fstream f(dir / "alpha.raw", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(5);
        char b = 0x5a;
        f.write(&b, 1);
        f.close();
        CHECK_THROWS_AS(load_archive(dir), ChecksumMismatch);
    }
    SUBCASE("float64 dtype is not supported by schema v1") {
        auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
        j["arrays"][0]["dtype"] = "f64";
        std::ofstream(dir / "manifest.json") << j.dump();
        CHECK_THROWS_AS(load_archive(dir), UnsupportedSchema);
    }
    SUBCASE("wrong schema version") {
        auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
        j["schema_version"] = 2;
        std::ofstream(dir / "manifest.json") << j.dump();
        CHECK_THROWS_AS(load_archive(dir), UnsupportedSchema);
    }
    SUBCASE("missing directory") {
        CHECK_THROWS_AS(load_archive(dir / "nope"), IoError);
    }
    fs::remove_all(dir);
}

TEST_CASE("config parsing validates keys, shapes and values") {
    using nlohmann::json;
    CHECK_NOTHROW(parse_config(json::object()));

    SUBCASE("unknown keys are rejected everywhere") {
        CHECK_THROWS_AS(parse_config(json::parse(R"({"grdi": {}})")), ConfigError);
        CHECK_THROWS_AS(parse_config(json::parse(R"({"grid": {"sahpe": [4, 4]}})")),
                        ConfigError);
        CHECK_THROWS_AS(parse_config(json::parse(R"({"optimizer": {"lr": 0.1, "x": 1}})")),
                        ConfigError);
    }
    SUBCASE("value validation") {
        CHECK_THROWS_AS(parse_config(json::parse(R"({"optimizer": {"lr": 0}})")), ConfigError);
        CHECK_THROWS_AS(parse_config(json::parse(R"({"grid": {"ndim": 4}})")), ConfigError);
        CHECK_THROWS_AS(
            parse_config(json::parse(R"({"weights": {"alpha": [1, 2, 3]}})")), ConfigError);
        CHECK_THROWS_AS(
            parse_config(json::parse(R"({"bounds": {"rho": [0.2, 0.1]}})")), ConfigError);
        CHECK_THROWS_AS(
            parse_config(json::parse(R"({"materials": {"poisson_ratio": [0.5, 0.4, 0.1, 0.45]}})")),
            ConfigError);
        CHECK_THROWS_AS(parse_config(json::parse(R"({"focal_count": 2})")), ConfigError);
    }
    SUBCASE("growth bounds are converted from per-day units to domain units") {
        RunConfig cfg = parse_config(
            json::parse(R"({"bounds": {"d_w": [0.035, 0.2], "rho": [0.035, 0.2]}})"));
        CHECK(cfg.bounds.d_w.lo ==
              doctest::Approx(0.035 * 100.0 / (192.0 * 192.0)).epsilon(1e-12));
        CHECK(cfg.bounds.rho.hi == doctest::Approx(0.2 * 100.0).epsilon(1e-12));
        // ranges() reports them back in per-day units
        ParamSampleRanges r = cfg.ranges();
        CHECK(r.d_w.lo == doctest::Approx(0.035).epsilon(1e-12));
        CHECK(r.rho.hi == doctest::Approx(0.2).epsilon(1e-12));
    }
}

TEST_CASE("config loading maps file problems to the right errors") {
    CHECK_THROWS_AS(load_config("/definitely/not/here.json"), IoError);
    const fs::path bad = fs::temp_directory_path() / "tinv_bad_config.json";
    std::ofstream(bad) << "{ not json";
    CHECK_THROWS_AS(load_config(bad), ConfigError);
    fs::remove(bad);
}

TEST_CASE("the shipped default configuration parses") {
    const char* src = std::getenv("TINV_SOURCE_DIR");
    if (!src) return;  // only checked when the build system provides the path
    RunConfig cfg = load_config(fs::path(src) / "configs" / "default.json");
    CHECK(cfg.spec.shape[0] == 64);
    CHECK(cfg.spec.nt == 16);
    CHECK(cfg.fit.levels == 2);
    for (int k = 0; k < 8; ++k) CHECK(cfg.weights.alpha[k] > 0.0);
}
