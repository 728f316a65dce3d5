#include <doctest.h>

#include "fd_check.hpp"
#include "reba/backbone.hpp"
#include "reba/errors.hpp"
#include "reba/rng.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace reba;

namespace {

BackboneDesc tiny_desc() {
    BackboneDesc d;
    d.input = GridShape{8, 8, 8};
    d.d_m = 8;
    d.channels = {2, 4};
    d.hidden = 12;
    return d;
}

Volume random_volume(GridShape shape, std::uint64_t seed) {
    Volume v = make_volume(shape);
    Rng r(seed);
    for (auto& x : v.voxels) x = float(r.next_normal());
    return v;
}

} // namespace

TEST_CASE("backbone: embedding length and head composition") {
    auto model = RegressorModel::reference(tiny_desc(), 0);
    const Volume v = random_volume(GridShape{8, 8, 8}, 1);
    const nn::Vec e = model.embed(v);
    CHECK(e.size() == 8);
    CHECK(model.param_count() < 100000);
}

TEST_CASE("backbone: zeroed head weights make the prediction the head bias") {
    auto model = RegressorModel::reference(tiny_desc(), 3);
    // zero the head weights via the parameter blocks (head is the last block)
    auto blocks = model.param_blocks();
    auto& head = blocks.back();
    for (std::size_t i = 0; i + 1 < head.n; ++i) head.p[i] = 0.0;
    model.set_head_bias(41.5);
    for (int i = 0; i < 3; ++i)
        CHECK(model.predict_age(random_volume(GridShape{8, 8, 8}, 100 + std::uint64_t(i))) ==
              doctest::Approx(41.5).epsilon(1e-12));
}

TEST_CASE("backbone: identical seeds build identical parameter vectors") {
    auto a = RegressorModel::reference(tiny_desc(), 7);
    auto b = RegressorModel::reference(tiny_desc(), 7);
    auto c = RegressorModel::reference(tiny_desc(), 8);
    CHECK(a.params_f32() == b.params_f32());
    CHECK(a.params_f32() != c.params_f32());
    CHECK(a.param_hash() == b.param_hash());
}

TEST_CASE("backbone: shape too small for the conv stack is rejected") {
    BackboneDesc d = tiny_desc();
    d.channels = {2, 2, 2, 2}; // 8 -> 4 -> 2 -> 1 -> too small
    CHECK_THROWS_AS(RegressorModel::reference(d, 0), ValidationError);
}

TEST_CASE("optimizer: cosine schedule endpoints") {
    CHECK(nn::cosine_lr(1e-3, 0.0, 0, 60) == doctest::Approx(1e-3));
    CHECK(nn::cosine_lr(1e-3, 0.0, 59, 60) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(nn::cosine_lr(1e-3, 1e-5, 9, 10) == doctest::Approx(1e-5));
    CHECK(nn::cosine_lr(1e-3, 0.0, 0, 1) == doctest::Approx(1e-3));
}

TEST_CASE("train: lr=0 leaves parameters untouched and the loss flat") {
    auto model = RegressorModel::reference(tiny_desc(), 11);
    std::vector<Volume> vols;
    for (int i = 0; i < 6; ++i) vols.push_back(random_volume(GridShape{8, 8, 8}, 200 + std::uint64_t(i)));
    std::vector<TrainSample> data;
    for (int i = 0; i < 6; ++i) data.push_back({&vols[std::size_t(i)], 40.0 + i});
    const auto before = model.params_f32();
    OptimizerConfig cfg;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    cfg.epochs = 4;
    cfg.batch_size = 2;
    const TrainHistory hist = train_regressor(model, data, MaeLoss{}, cfg, 5);
    CHECK(model.params_f32() == before);
    for (double l : hist.epoch_loss) CHECK(l == doctest::Approx(hist.epoch_loss[0]).epsilon(1e-12));
}

TEST_CASE("train: descent on a constant-target dataset") {
    auto model = RegressorModel::reference(tiny_desc(), 13);
    std::vector<Volume> vols;
    for (int i = 0; i < 8; ++i) vols.push_back(random_volume(GridShape{8, 8, 8}, 300 + std::uint64_t(i)));
    std::vector<TrainSample> data;
    for (int i = 0; i < 8; ++i) data.push_back({&vols[std::size_t(i)], 52.0});
    OptimizerConfig cfg;
    cfg.lr = 5e-2;
    cfg.epochs = 30;
    cfg.batch_size = 4;
    const TrainHistory hist = train_regressor(model, data, MaeLoss{}, cfg, 6);
    CHECK(hist.epoch_loss.back() < hist.epoch_loss.front());
    CHECK(hist.epoch_loss.back() < 5.0);
}

TEST_CASE("train: deterministic end-to-end given a seed") {
    std::vector<Volume> vols;
    for (int i = 0; i < 5; ++i) vols.push_back(random_volume(GridShape{8, 8, 8}, 400 + std::uint64_t(i)));
    std::vector<TrainSample> data;
    for (int i = 0; i < 5; ++i) data.push_back({&vols[std::size_t(i)], 30.0 + 3.0 * i});
    OptimizerConfig cfg;
    cfg.lr = 1e-3;
    cfg.epochs = 5;
    cfg.batch_size = 2;
    auto a = RegressorModel::reference(tiny_desc(), 21);
    auto b = RegressorModel::reference(tiny_desc(), 21);
    const auto ha = train_regressor(a, data, MaeLoss{}, cfg, 9);
    const auto hb = train_regressor(b, data, MaeLoss{}, cfg, 9);
    CHECK(ha.epoch_loss == hb.epoch_loss);
    CHECK(a.params_f32() == b.params_f32());
}

TEST_CASE("freeze: training rejected, inference bitwise stable") {
    auto model = RegressorModel::reference(tiny_desc(), 31);
    model.freeze();
    const Volume v = random_volume(GridShape{8, 8, 8}, 500);
    const double p1 = model.predict_age(v);
    const double p2 = model.predict_age(v);
    CHECK(std::memcmp(&p1, &p2, sizeof(double)) == 0);
    std::vector<TrainSample> data{{&v, 50.0}};
    CHECK_THROWS_AS(train_regressor(model, data, MaeLoss{}, OptimizerConfig{}, 0), ValidationError);
    CHECK_THROWS_AS(model.forward_train(v), ValidationError);
}

TEST_CASE("gradients: MAE loss agrees with central finite differences") {
    auto model = RegressorModel::reference(tiny_desc(), 17);
    std::vector<Volume> vols;
    for (int i = 0; i < 3; ++i) vols.push_back(random_volume(GridShape{8, 8, 8}, 600 + std::uint64_t(i)));
    const std::vector<double> targets = {47.0, 55.5, 61.0};
    const auto blocks = model.param_blocks();

    auto loss = [&]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < vols.size(); ++i)
            acc += std::fabs(model.predict_age(vols[i]) - targets[i]);
        return acc / double(vols.size());
    };
    auto grad_of = [&](std::size_t block, std::size_t index) {
        model.zero_grad();
        for (std::size_t i = 0; i < vols.size(); ++i) {
            const double pred = model.forward_train(vols[i]);
            const double r = pred - targets[i];
            const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
            model.backward_train(sgn / double(vols.size()));
        }
        return blocks[block].g[index];
    };
    const auto failures = testutil::fd_check(blocks, loss, grad_of, 50, 12345);
    for (const auto& f : failures)
        MESSAGE("block ", f.block, " index ", f.index, " analytic ", f.analytic, " numeric ",
                f.numeric);
    CHECK(failures.empty());
}

TEST_CASE("checkpoint: round-trip, integrity hash, tamper detection") {
    namespace fs = std::filesystem;
    auto model = RegressorModel::reference(tiny_desc(), 41);
    const fs::path path = fs::temp_directory_path() / "reba_test_ckpt.bin";
    save_checkpoint(path, model, "teacher");
    auto loaded = load_checkpoint(path, "teacher");
    CHECK(loaded.params_f32() == model.params_f32());
    CHECK_THROWS_AS(load_checkpoint(path, "student"), ValidationError);

    // flip one payload byte; the recorded content hash must catch it
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    char c;
    f.seekg(-1, std::ios::end);
    f.get(c);
    f.seekp(-1, std::ios::end);
    c = char(c ^ 0x1);
    f.put(c);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path, "teacher"), ValidationError);
    fs::remove(path);
}
