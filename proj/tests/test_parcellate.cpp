#include <doctest.h>

#include "reba/datagen.hpp"
#include "reba/parcellate.hpp"
#include "reba/rng.hpp"

#include <cmath>

using namespace reba;

namespace {

Atlas line_atlas() {
    // 2x1x1 grid, labels [1, 2]
    Atlas a;
    a.shape = GridShape{2, 1, 1};
    a.labels = {1, 2};
    a.regions = 2;
    return a;
}

Volume random_volume(GridShape shape, std::uint64_t seed) {
    Volume v = make_volume(shape);
    Rng r(seed);
    for (auto& x : v.voxels) x = float(r.next_normal());
    return v;
}

} // namespace

TEST_CASE("one_hot: direct encoding on a 2-voxel atlas") {
    const auto masks = parc::one_hot(line_atlas());
    REQUIRE(masks.size() == 2);
    CHECK(masks[0].voxels == std::vector<std::uint8_t>{1, 0});
    CHECK(masks[1].voxels == std::vector<std::uint8_t>{0, 1});
    // dilation adds the face neighbor
    CHECK(masks[0].dilated == std::vector<std::uint8_t>{1, 1});
    CHECK(masks[1].dilated == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("one_hot: masks partition the foreground of a generated atlas") {
    const auto [atlas, networks] = datagen::make_synthetic_atlas(GridShape{12, 12, 12}, 5, 2, 21);
    const auto masks = parc::one_hot(atlas);
    for (std::size_t i = 0; i < atlas.labels.size(); ++i) {
        int covered = 0;
        for (const auto& m : masks) covered += m.voxels[i];
        CHECK(covered == (atlas.labels[i] > 0 ? 1 : 0)); // pairwise disjoint, exact cover
    }
}

TEST_CASE("one_hot: dilation adds exactly the 6-connected shell") {
    const auto [atlas, networks] = datagen::make_synthetic_atlas(GridShape{12, 12, 12}, 4, 2, 5);
    const auto masks = parc::one_hot(atlas);
    const GridShape s = atlas.shape;
    for (const auto& m : masks) {
        CHECK(m.dilated_count >= m.count);
        for (int d = 0; d < s.d; ++d)
            for (int h = 0; h < s.h; ++h)
                for (int w = 0; w < s.w; ++w) {
                    const std::size_t i = s.index(d, h, w);
                    if (m.voxels[i]) CHECK(m.dilated[i]); // superset
                    const bool face_adjacent =
                        (d > 0 && m.voxels[s.index(d - 1, h, w)]) ||
                        (d + 1 < s.d && m.voxels[s.index(d + 1, h, w)]) ||
                        (h > 0 && m.voxels[s.index(d, h - 1, w)]) ||
                        (h + 1 < s.h && m.voxels[s.index(d, h + 1, w)]) ||
                        (w > 0 && m.voxels[s.index(d, h, w - 1)]) ||
                        (w + 1 < s.w && m.voxels[s.index(d, h, w + 1)]);
                    if (m.dilated[i] && !m.voxels[i]) CHECK(face_adjacent);
                    if (!m.dilated[i]) CHECK(!face_adjacent);
                }
    }
}

TEST_CASE("extract: eta=0 zeroes everything outside the mask") {
    const auto [atlas, networks] = datagen::make_synthetic_atlas(GridShape{12, 12, 12}, 3, 1, 2);
    const auto masks = parc::one_hot(atlas);
    const Volume v = random_volume(atlas.shape, 9);
    const Volume out = parc::extract_region(v, masks[0], {0.0, 123});
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        if (masks[0].dilated[i])
            CHECK(out.voxels[i] == v.voxels[i]);
        else
            CHECK(out.voxels[i] == 0.0f);
    }
}

TEST_CASE("extract: full-coverage mask is the identity") {
    Atlas a;
    a.shape = GridShape{4, 4, 4};
    a.labels.assign(a.shape.total(), 1);
    a.regions = 1;
    const auto masks = parc::one_hot(a);
    const Volume v = random_volume(a.shape, 10);
    const Volume out = parc::extract_region(v, masks[0], {0.5, 11});
    CHECK(out.voxels == v.voxels);
}

TEST_CASE("extract: replacement noise matches N(0, eta^2) moments") {
    // >= 10^4 outside voxels; sample variance within 20% of eta^2
    Atlas a;
    a.shape = GridShape{24, 24, 24};
    a.labels.assign(a.shape.total(), 0);
    a.labels[0] = 1;
    a.regions = 1;
    const auto masks = parc::one_hot(a);
    Volume v = make_volume(a.shape, 1.0f);
    const double eta = 0.1;
    const Volume out = parc::extract_region(v, masks[0], {eta, 31});
    double mean = 0.0, var = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < out.voxels.size(); ++i) {
        if (masks[0].dilated[i]) continue;
        mean += out.voxels[i];
        ++n;
    }
    REQUIRE(n >= 10000);
    mean /= double(n);
    for (std::size_t i = 0; i < out.voxels.size(); ++i) {
        if (masks[0].dilated[i]) continue;
        const double d = out.voxels[i] - mean;
        var += d * d;
    }
    var /= double(n);
    CHECK(std::fabs(var - eta * eta) < 0.2 * eta * eta);
    CHECK(std::fabs(mean) < 0.01);
}

TEST_CASE("occlude: eta=0 zeroes the region and keeps the rest") {
    const auto [atlas, networks] = datagen::make_synthetic_atlas(GridShape{12, 12, 12}, 3, 1, 4);
    const auto masks = parc::one_hot(atlas);
    const Volume v = random_volume(atlas.shape, 13);
    const Volume out = parc::occlude_region(v, masks[1], {0.0, 0});
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
        if (masks[1].voxels[i])
            CHECK(out.voxels[i] == 0.0f);
        else
            CHECK(out.voxels[i] == v.voxels[i]);
    }
}

TEST_CASE("occlude: empty mask is the identity") {
    parc::RegionMask empty;
    empty.region = 1;
    empty.shape = GridShape{4, 4, 4};
    empty.voxels.assign(empty.shape.total(), 0);
    empty.dilated.assign(empty.shape.total(), 0);
    const Volume v = random_volume(empty.shape, 17);
    const Volume out = parc::occlude_region(v, empty, {0.3, 5});
    CHECK(out.voxels == v.voxels);
}

TEST_CASE("complementarity: undilated extract + occlude reconstruct the volume") {
    const auto [atlas, networks] = datagen::make_synthetic_atlas(GridShape{10, 10, 10}, 4, 2, 6);
    const auto masks = parc::one_hot(atlas);
    const Volume v = random_volume(atlas.shape, 19);
    for (const auto& m : masks) {
        const Volume kept = parc::extract_region(v, m, {0.0, 0}, /*use_dilated=*/false);
        const Volume cut = parc::occlude_region(v, m, {0.0, 0}, /*use_dilated=*/false);
        for (std::size_t i = 0; i < v.voxels.size(); ++i)
            CHECK(kept.voxels[i] + cut.voxels[i] == v.voxels[i]);
    }
}

TEST_CASE("noise seeds: reproducible per (subject, region, op) and independent across ops") {
    const std::uint64_t base = 99;
    CHECK(parc::noise_seed(base, "s1", 1, "extract") == parc::noise_seed(base, "s1", 1, "extract"));
    CHECK(parc::noise_seed(base, "s1", 1, "extract") != parc::noise_seed(base, "s1", 1, "occlude"));
    CHECK(parc::noise_seed(base, "s1", 1, "extract") != parc::noise_seed(base, "s1", 2, "extract"));
    CHECK(parc::noise_seed(base, "s1", 1, "extract") != parc::noise_seed(base, "s2", 1, "extract"));

    const auto [atlas, networks] = datagen::make_synthetic_atlas(GridShape{10, 10, 10}, 2, 1, 8);
    const auto masks = parc::one_hot(atlas);
    const Volume v = random_volume(atlas.shape, 23);
    const parc::NoiseSpec noise{0.1, parc::noise_seed(1, "s", 1, "extract")};
    const Volume a = parc::extract_region(v, masks[0], noise);
    const Volume b = parc::extract_region(v, masks[0], noise);
    CHECK(a.voxels == b.voxels);
}
