#include <doctest.h>

#include "reba/csv.hpp"
#include "reba/rng.hpp"
#include "reba/sha256.hpp"
#include "reba/volume.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace reba;

namespace {
std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}
} // namespace

TEST_CASE("rng: deterministic streams and derived seeds") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
    CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
    CHECK(derive_seed(1, "x", 0) != derive_seed(1, "x", 1));
    CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
}

TEST_CASE("rng: unit interval and normal moments") {
    Rng r(7);
    double mean = 0.0, var = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = r.next_unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mean += u;
    }
    mean /= n;
    CHECK(std::fabs(mean - 0.5) < 0.01);

    Rng g(11);
    mean = 0.0;
    std::vector<double> xs(n);
    for (auto& x : xs) {
        x = g.next_normal();
        mean += x;
    }
    mean /= n;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    CHECK(std::fabs(mean) < 0.01);
    CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("sha256: known vectors") {
    CHECK(sha256_hex(std::string{}) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string{"abc"}) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    // Multi-block message (> 64 bytes).
    CHECK(sha256_hex(std::string(1000, 'a')) ==
          "41edece42d63e8d9bf515a9ba6932e1c20cbc9f5a5d134645adb5db1b9737ea3");
}

TEST_CASE("csv: doubles round-trip losslessly") {
    for (double v : {0.1, -3.14159265358979, 1e-300, 12345.6789, 0.0}) {
        CHECK(csv::parse_double(csv::format_double(v)) == v);
    }
    const auto f = csv::split_row("a,1.5,,x");
    REQUIRE(f.size() == 4);
    CHECK(f[0] == "a");
    CHECK(f[2].empty());
}

TEST_CASE("volume container: round-trip and header") {
    GridShape shape{3, 4, 5};
    Volume v = make_volume(shape);
    Rng r(1);
    for (auto& x : v.voxels) x = float(r.next_normal());
    const auto path = temp_file("reba_test_vol.vol");
    io::write_volume(path, v);
    const Volume back = io::read_volume(path);
    CHECK(back.shape == shape);
    CHECK(back.voxels == v.voxels);

    const auto c = io::read_container(path, io::kVolumeMagic);
    CHECK(c.header_json.find("\"dtype\":\"f32le\"") != std::string::npos);
    CHECK(c.payload.size() == shape.total() * sizeof(float));
    std::filesystem::remove(path);
}

TEST_CASE("atlas container: round-trip preserves labels and region count") {
    Atlas a;
    a.shape = GridShape{2, 2, 2};
    a.labels = {0, 1, 1, 2, 2, 2, 3, 0};
    a.regions = 3;
    const auto path = temp_file("reba_test_atlas.vol");
    io::write_atlas(path, a);
    const Atlas back = io::read_atlas(path);
    CHECK(back.labels == a.labels);
    CHECK(back.regions == 3);
    std::filesystem::remove(path);
}
