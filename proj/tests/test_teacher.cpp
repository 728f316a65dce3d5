#include <doctest.h>

#include "reba/datagen.hpp"
#include "reba/errors.hpp"
#include "reba/teacher.hpp"

#include <cmath>
#include <map>

using namespace reba;

namespace {

struct TinyWorld {
    DatasetParams params;
    Atlas atlas;
    NetworkMap networks;
    CohortManifest manifest;
    std::vector<parc::RegionMask> masks;
    std::map<std::string, Volume> volumes;

    teacher::VolumeProvider provider() const {
        return [this](const SubjectRecord& s) { return volumes.at(s.id); };
    }
};

TinyWorld make_world(int n_train = 24, double noise = 0.0, std::uint64_t seed = 5) {
    TinyWorld w;
    w.params.shape = GridShape{12, 12, 12};
    w.params.regions = 3;
    w.params.networks = 1;
    w.params.seed = seed;
    w.params.n_hc_train = n_train;
    w.params.n_hc_test = 6;
    w.params.network_aging_offsets = {0.0};
    w.params.network_jitter = 2.0;
    w.params.region_jitter = 1.0;
    w.params.noise_sigma = noise;
    w.params.decay_per_year = 0.008;
    w.params.diseases.clear();
    auto [atlas, networks] = datagen::make_synthetic_atlas(w.params.shape, w.params.regions,
                                                           w.params.networks, w.params.seed);
    w.atlas = std::move(atlas);
    w.networks = networks;
    w.manifest = datagen::build_manifest(w.params);
    w.masks = parc::one_hot(w.atlas);
    for (std::size_t i = 0; i < w.manifest.subjects.size(); ++i) {
        const auto& s = w.manifest.subjects[i];
        w.volumes[s.id] =
            datagen::generate_subject_volume(w.atlas, s, w.params,
                                             datagen::subject_volume_seed(w.params, i));
    }
    return w;
}

BackboneDesc tiny_backbone(GridShape shape) {
    BackboneDesc d;
    d.input = shape;
    d.d_m = 8;
    d.channels = {4, 8};
    d.hidden = 16;
    return d;
}

RegressorModel constant_model(GridShape shape, double bias) {
    auto model = RegressorModel::reference(tiny_backbone(shape), 1);
    auto blocks = model.param_blocks();
    auto& head = blocks.back();
    for (std::size_t i = 0; i + 1 < head.n; ++i) head.p[i] = 0.0;
    model.set_head_bias(bias);
    model.freeze();
    return model;
}

} // namespace

TEST_CASE("mae objective: worked example and zero residual") {
    // predictions {50, 52} against ages {51, 50}
    MaeLoss loss;
    const double total = loss.eval(50, 51).first + loss.eval(52, 50).first;
    CHECK(total / 2.0 == doctest::Approx(1.5));
    CHECK(loss.eval(42.0, 42.0).first == 0.0);
    CHECK(loss.eval(42.0, 42.0).second == 0.0); // subgradient at the kink
}

TEST_CASE("soft label: worked examples") {
    CHECK(teacher::soft_label_value(45.0, 50.0, 2.0, 1.0) == doctest::Approx(47.0));
    CHECK(teacher::soft_label_value(45.0, 50.0, 0.0, 1.0) == doctest::Approx(45.0));
    CHECK(teacher::soft_label_value(55.0, 50.0, 2.0, 1.0) == doctest::Approx(55.0));
}

TEST_CASE("soft label: full sign truth table") {
    // correction fires iff (y_whole - y_init) * rho is strictly positive
    const double alpha = 0.5;
    for (const double resid : {-4.0, 0.0, 4.0}) {
        for (const double rho : {-2.0, 0.0, 2.0}) {
            const double y_init = 50.0;
            const double y_whole = y_init + resid;
            const double got = teacher::soft_label_value(y_init, y_whole, rho, alpha);
            const bool fires = resid * rho > 0.0;
            CHECK(got == doctest::Approx(y_init + (fires ? alpha * rho : 0.0)));
        }
    }
}

TEST_CASE("soft labels: alpha=0 copies the initial predictions") {
    CorrectionVector rho;
    rho.rho = {1.5, -2.0};
    const auto table = teacher::soft_labels({"a", "b"}, {50.0, 60.0},
                                            {{45.0, 55.0}, {70.0, 52.0}}, rho, 0.0);
    for (const auto& row : table.rows) CHECK(row.y_soft == row.y_init);
}

TEST_CASE("train_teacher: rejects a disease subject in the training split") {
    TinyWorld w = make_world(8);
    w.manifest.subjects[0].cohort = disease_cohort_tag("dx");
    // bypass manifest validation on purpose; train_teacher must catch it
    CHECK_THROWS_AS(teacher::train_teacher(w.manifest, w.provider(),
                                           tiny_backbone(w.params.shape), OptimizerConfig{}, 1),
                    ValidationError);
}

TEST_CASE("constant teacher: flat initial predictions and zero correction vector") {
    TinyWorld w = make_world(6);
    auto model = constant_model(w.params.shape, 33.0);
    const auto train = w.manifest.select(Split::train);
    const auto init = teacher::initial_reba(model, w.volumes.at(train[0]->id), w.masks, 0.1,
                                            777, train[0]->id);
    for (double v : init) CHECK(v == doctest::Approx(33.0).epsilon(1e-12));

    const CorrectionVector rho =
        teacher::correction_vector(model, train, w.provider(), w.masks, 0.1, 777);
    CHECK(rho.n_subjects_used == int(train.size()));
    for (double r : rho.rho) CHECK(r == 0.0);
}

TEST_CASE("initial_reba: full-coverage single region with eta=0 equals the whole prediction") {
    Atlas a;
    a.shape = GridShape{8, 8, 8};
    a.labels.assign(a.shape.total(), 1);
    a.regions = 1;
    const auto masks = parc::one_hot(a);
    auto model = RegressorModel::reference(tiny_backbone(a.shape), 3);
    model.freeze();
    Volume v = make_volume(a.shape);
    Rng r(2);
    for (auto& x : v.voxels) x = float(r.next_normal());
    const auto init = teacher::initial_reba(model, v, masks, 0.0, 1, "s");
    CHECK(init[0] == model.predict_age(v));
}

TEST_CASE("correction vector: head bias shift cancels exactly in the difference") {
    TinyWorld w = make_world(5);
    const auto train = w.manifest.select(Split::train);
    auto build = [&](double bias_shift) {
        auto model = RegressorModel::reference(tiny_backbone(w.params.shape), 9);
        auto blocks = model.param_blocks();
        auto& head = blocks.back();
        head.p[head.n - 1] += bias_shift;
        model.freeze();
        return teacher::correction_vector(model, train, w.provider(), w.masks, 0.1, 31);
    };
    const auto rho0 = build(0.0);
    const auto rho10 = build(10.0);
    REQUIRE(rho0.rho.size() == rho10.rho.size());
    for (std::size_t i = 0; i < rho0.rho.size(); ++i)
        CHECK(rho0.rho[i] == doctest::Approx(rho10.rho[i]).epsilon(1e-9));
}

TEST_CASE("correction vector: deterministic given the same noise base") {
    TinyWorld w = make_world(5);
    const auto train = w.manifest.select(Split::train);
    auto model = constant_model(w.params.shape, 20.0);
    const auto a = teacher::correction_vector(model, train, w.provider(), w.masks, 0.1, 55);
    const auto b = teacher::correction_vector(model, train, w.provider(), w.masks, 0.1, 55);
    CHECK(a.rho == b.rho);
}

TEST_CASE("label construction leaves the frozen teacher untouched") {
    TinyWorld w = make_world(6);
    OptimizerConfig opt;
    opt.lr = 2e-3;
    opt.epochs = 3;
    opt.batch_size = 4;
    auto result = teacher::train_teacher(w.manifest, w.provider(),
                                         tiny_backbone(w.params.shape), opt, 77);
    const std::string before = result.model.param_hash();
    CorrectionVector rho;
    const SoftLabelTable table = teacher::build_soft_labels(result.model, w.manifest,
                                                            w.provider(), w.masks, 0.1, 91, 1.0,
                                                            &rho);
    CHECK(result.model.param_hash() == before);
    CHECK(int(table.rows.size()) == w.params.n_hc_train);
    for (const auto& row : table.rows) {
        CHECK(int(row.y_init.size()) == w.params.regions);
        for (double v : row.y_soft) CHECK(std::isfinite(v));
        // Eq-consistency: y_soft is y_init or y_init + alpha*rho exactly
        for (std::size_t r = 0; r < row.y_soft.size(); ++r) {
            const bool plain = row.y_soft[r] == row.y_init[r];
            const bool shifted = row.y_soft[r] == row.y_init[r] + rho.alpha * rho.rho[r];
            CHECK((plain || shifted));
        }
    }
}

TEST_CASE("teacher oracle: trained model recovers ages; single-signal region dominates rho") {
    // Only region 2 carries any signal: the other regions sit at intensity 0
    // (planted age = base/decay), so occluding them barely perturbs the input
    // while occluding region 2 erases the age information entirely.
    TinyWorld w = make_world(40, 0.0, 11);
    const double dark_age = w.params.base_intensity / w.params.decay_per_year;
    for (std::size_t i = 0; i < w.manifest.subjects.size(); ++i) {
        auto& s = w.manifest.subjects[i];
        s.planted_age = {dark_age, s.age, dark_age};
        w.volumes[s.id] = datagen::generate_subject_volume(
            w.atlas, s, w.params, datagen::subject_volume_seed(w.params, i));
    }
    OptimizerConfig opt;
    opt.lr = 1e-2;
    opt.epochs = 80;
    opt.batch_size = 4;
    auto result = teacher::train_teacher(w.manifest, w.provider(),
                                         tiny_backbone(w.params.shape), opt, 13);
    CHECK(result.history.epoch_loss.back() <= 3.0); // desk-scale MAE bound
    CHECK(result.history.epoch_loss.back() < result.history.epoch_loss.front());

    const auto train = w.manifest.select(Split::train);
    const auto rho = teacher::correction_vector(result.model, train, w.provider(), w.masks, 0.1,
                                                17);
    const double signal = std::fabs(rho.rho[1]);
    CHECK(signal > std::fabs(rho.rho[0]));
    CHECK(signal > std::fabs(rho.rho[2]));
}
