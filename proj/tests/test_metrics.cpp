#include <doctest.h>

#include "reba/errors.hpp"
#include "reba/metrics.hpp"
#include "reba/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace reba;
using namespace reba::metrics;

namespace {

PredictionTable hc_train_table(const std::vector<double>& ages,
                               const std::function<double(double, int)>& pred_fn, int regions) {
    PredictionTable t;
    t.regions = regions;
    for (std::size_t n = 0; n < ages.size(); ++n) {
        PredictionRow row;
        row.id = "tr" + std::to_string(n);
        row.age = ages[n];
        row.cohort = kCohortHC;
        row.split = Split::train;
        for (int r = 1; r <= regions; ++r) row.reba.push_back(pred_fn(ages[n], r));
        t.rows.push_back(row);
    }
    return t;
}

std::vector<double> normals(std::size_t n, std::uint64_t seed, double mean = 0.0,
                            double sd = 1.0) {
    std::vector<double> out(n);
    Rng rng(seed);
    for (auto& x : out) x = mean + sd * rng.next_normal();
    return out;
}

} // namespace

TEST_CASE("bias fit: identity, offset, and constant predictors") {
    const std::vector<double> ages{40, 50, 60, 70};
    auto identity = hc_train_table(ages, [](double a, int) { return a; }, 2);
    BiasModel b = fit_bias(identity);
    CHECK(std::fabs(b.lambda0[0]) < 1e-9);
    CHECK(b.lambda1[0] == doctest::Approx(1.0));

    auto offset = hc_train_table(ages, [](double a, int) { return a + 5.0; }, 1);
    b = fit_bias(offset);
    CHECK(b.lambda0[0] == doctest::Approx(5.0));
    CHECK(b.lambda1[0] == doctest::Approx(1.0));

    auto constant = hc_train_table(ages, [](double, int) { return 47.5; }, 1);
    b = fit_bias(constant);
    CHECK(b.lambda0[0] == doctest::Approx(47.5));
    CHECK(std::fabs(b.lambda1[0]) < 1e-9);
}

TEST_CASE("bias fit: rejects fewer than 3 distinct ages") {
    auto degenerate = hc_train_table({50, 50, 60, 60}, [](double a, int) { return a; }, 1);
    CHECK_THROWS_AS(fit_bias(degenerate), ValidationError);
}

TEST_CASE("bias apply: identity model is a no-op; offset model recovers age") {
    BiasModel identity;
    identity.lambda0 = {0.0};
    identity.lambda1 = {1.0};
    CHECK(apply_bias(63.0, 63.0, identity, 1) == doctest::Approx(63.0));

    BiasModel off;
    off.lambda0 = {5.0};
    off.lambda1 = {1.0};
    for (double age : {30.0, 45.0, 77.0})
        CHECK(apply_bias(age + 5.0, age, off, 1) == doctest::Approx(age));
}

TEST_CASE("bias correction: corrected gap is uncorrelated with age on the fit set") {
    // raw = 20 + 0.6 * age + structured residual
    Rng rng(5);
    std::vector<double> ages;
    for (int i = 0; i < 60; ++i) ages.push_back(rng.next_uniform(20, 80));
    auto table = hc_train_table(
        ages, [&](double a, int r) { return 20.0 + 0.6 * a + 0.1 * r * std::sin(a); }, 3);
    const BiasModel bias = fit_bias(table);
    const PredictionTable corrected = apply_bias(table, bias);
    for (int r = 0; r < 3; ++r) {
        double mean_age = 0.0, mean_gap = 0.0;
        for (const auto& row : corrected.rows) {
            mean_age += row.age;
            mean_gap += row.reba[std::size_t(r)] - row.age;
        }
        mean_age /= double(corrected.rows.size());
        mean_gap /= double(corrected.rows.size());
        double cov = 0.0, var = 0.0;
        for (const auto& row : corrected.rows) {
            cov += (row.age - mean_age) * (row.reba[std::size_t(r)] - row.age - mean_gap);
            var += (row.age - mean_age) * (row.age - mean_age);
        }
        CHECK(std::fabs(cov / var) < 1e-6); // OLS residual orthogonality
    }
}

TEST_CASE("delta: direct subtraction and antisymmetry") {
    CHECK(delta_reba(60.0, 60.0) == 0.0);
    CHECK(delta_reba(62.5, 60.0) == doctest::Approx(2.5));
    CHECK(delta_reba(3.0, 7.0) == -delta_reba(7.0, 3.0));
}

TEST_CASE("mmd: hand-computed two-point case at fixed bandwidth") {
    const std::vector<double> a{0.0, 2.0};
    const std::vector<double> b{0.0, 2.0};
    MmdOptions opts;
    opts.rule = BandwidthRule::fixed_value;
    opts.fixed_m = 2.0;
    const double expected = 2.0 * std::exp(-0.5) - (1.0 + std::exp(-0.5));
    CHECK(std::fabs(mmd(a, b, opts) - expected) <= 1e-9);
    CHECK(expected == doctest::Approx(-0.3935).epsilon(1e-4));
    // the clamped similarity treats the negative estimate as perfect alignment
    CHECK(hcs_region(a, b, opts) == doctest::Approx(1.0));
}

TEST_CASE("mmd: symmetry is exact") {
    const auto a = normals(40, 1);
    const auto b = normals(60, 2, 0.5);
    MmdOptions opts;
    CHECK(mmd(a, b, opts) == mmd(b, a, opts));
}

TEST_CASE("mmd: small-sample and bad-bandwidth errors") {
    MmdOptions opts;
    const std::vector<double> one{1.0};
    const std::vector<double> two{1.0, 2.0};
    CHECK_THROWS_AS(mmd(one, two, opts), ValidationError);
    CHECK_THROWS_AS(mmd_with_bandwidth(two, two, 0.0), NumericalError);
    // literal pooled median of all-negative gaps is <= 0 -> error
    MmdOptions literal;
    literal.rule = BandwidthRule::literal_median;
    const std::vector<double> neg{-3.0, -2.0, -1.0};
    CHECK_THROWS_AS(rbf_bandwidth(neg, neg, literal), NumericalError);
    // pairwise rule falls back to 1.0 on identical values
    const std::vector<double> same{2.0, 2.0, 2.0};
    CHECK(rbf_bandwidth(same, same, MmdOptions{}) == doctest::Approx(1.0));
}

TEST_CASE("mmd: near zero for equal distributions, larger under a shift") {
    // n=500 i.i.d. N(0,1) pairs: |mmd| < 0.05 across seeds
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto a = normals(500, 100 + 2 * seed);
        const auto b = normals(500, 101 + 2 * seed);
        const double v = mmd(a, b, MmdOptions{});
        CHECK(std::fabs(v) < 0.05);

        std::vector<double> shifted = a;
        for (auto& x : shifted) x += 10.0;
        CHECK(mmd(a, shifted, MmdOptions{}) > v);
        CHECK(hcs_region(a, shifted, MmdOptions{}) < hcs_region(a, b, MmdOptions{}));
    }
}

TEST_CASE("hcs: separated distributions score strictly below aligned ones") {
    const auto a = normals(200, 7);
    const auto b = normals(200, 8);
    std::vector<double> far = b;
    for (auto& x : far) x += 25.0;
    const double aligned = hcs_region(a, b, MmdOptions{});
    const double drifted = hcs_region(a, far, MmdOptions{});
    CHECK(aligned >= 0.95);
    CHECK(drifted < aligned);
    CHECK(drifted >= 0.0);
    CHECK(aligned <= 1.0);
}

TEST_CASE("sigmoid: safe branches and limits") {
    CHECK(sigmoid(0.0) == doctest::Approx(0.5));
    CHECK(sigmoid(std::log(3.0)) == doctest::Approx(0.75));
    CHECK(sigmoid(1000.0) == doctest::Approx(1.0));
    CHECK(sigmoid(-1000.0) >= 0.0);
    CHECK(sigmoid(-1000.0) < 1e-300);
    CHECK(std::isfinite(sigmoid(-1e6)));
    CHECK(std::isfinite(sigmoid(1e6)));
}

TEST_CASE("ndc: worked values, bounds, and monotonicity") {
    DiseasePrior prior;
    prior.disease = "dx";
    prior.regions = {1};
    CHECK(ndc_subject({60.0, 99.0}, 60.0, prior) == doctest::Approx(0.5));
    CHECK(ndc_subject({60.0 + std::log(3.0), 0.0}, 60.0, prior) == doctest::Approx(0.75));

    prior.regions = {1, 2};
    const double base = ndc_subject({62.0, 58.0}, 60.0, prior);
    const double higher = ndc_subject({64.0, 58.0}, 60.0, prior);
    CHECK(higher > base);
    CHECK(base > 0.0);
    CHECK(base < 1.0);

    DiseasePrior empty;
    empty.disease = "none";
    CHECK_THROWS_AS(ndc_subject({50.0}, 50.0, empty), ValidationError);
}

TEST_CASE("spearman: monotone, reversed, tied inputs") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> up{10, 20, 30, 40, 50};
    const std::vector<double> down{5, 4, 3, 2, 1};
    CHECK(spearman(x, up) == doctest::Approx(1.0));
    CHECK(spearman(x, down) == doctest::Approx(-1.0));
    const std::vector<double> tied{3, 3, 3, 3, 3};
    CHECK(spearman(x, tied) == doctest::Approx(0.0));
    // nonlinear but monotone stays at 1
    const std::vector<double> exp_x{1, 8, 27, 1000, 100000};
    CHECK(spearman(x, exp_x) == doctest::Approx(1.0));
}

TEST_CASE("bundled 48-region disease priors match the strong sets") {
    const std::filesystem::path path =
        std::filesystem::path(REBA_SOURCE_DIR) / "data" / "harvard_oxford_priors.json";
    std::ifstream in(path);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    REQUIRE(j.at("regions").size() == 48);
    const auto pd_strong = j.at("priors").at("PD").at("strong").get<std::vector<int>>();
    CHECK(pd_strong == std::vector<int>{3, 4, 7, 26});
    const auto ad_strong = j.at("priors").at("AD").at("strong").get<std::vector<int>>();
    CHECK(ad_strong == std::vector<int>{8, 9, 10, 11, 12, 13, 14, 15, 16, 20, 21, 22, 23, 30, 31,
                                        34, 35, 37, 38, 39});
    // relevance levels are consistent between the table and the strong sets
    for (const auto& region : j.at("regions")) {
        const int id = region.at("id").get<int>();
        const bool pd_listed =
            std::find(pd_strong.begin(), pd_strong.end(), id) != pd_strong.end();
        CHECK((region.at("pd").get<std::string>() == "strong") == pd_listed);
        const bool ad_listed =
            std::find(ad_strong.begin(), ad_strong.end(), id) != ad_strong.end();
        CHECK((region.at("ad").get<std::string>() == "strong") == ad_listed);
    }
}
