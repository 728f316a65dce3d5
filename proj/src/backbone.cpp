#include "reba/backbone.hpp"

#include "reba/errors.hpp"
#include "reba/sha256.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace reba {

void OptimizerConfig::validate() const {
    if (lr < 0 || weight_decay < 0 || lr_min < 0)
        throw ValidationError("optimizer: rates must be >= 0");
    if (epochs < 1 || batch_size < 1)
        throw ValidationError("optimizer: epochs and batch size must be >= 1");
}

RegressorModel RegressorModel::reference(const BackboneDesc& desc, std::uint64_t seed) {
    if (desc.d_m < 4) throw ValidationError("backbone: d_m must be >= 4");
    if (desc.channels.empty()) throw ValidationError("backbone: need at least one conv stage");
    RegressorModel m;
    m.desc_ = desc;
    Rng rng(derive_seed(seed, "backbone-init"));
    nn::ConvShape shape{1, desc.input.d, desc.input.h, desc.input.w};
    for (int ch : desc.channels) {
        auto conv = std::make_unique<nn::Conv3d>(shape, ch, 2, rng);
        shape = conv->out_shape();
        m.trunk_.add(std::move(conv));
        m.trunk_.add(std::make_unique<nn::Relu>());
    }
    m.trunk_.add(std::make_unique<nn::GlobalAvgPool>(shape));
    m.trunk_.add(std::make_unique<nn::Dense>(shape.c, desc.hidden, rng));
    m.trunk_.add(std::make_unique<nn::Relu>());
    m.trunk_.add(std::make_unique<nn::Dense>(desc.hidden, desc.d_m, rng));
    m.head_ = std::make_unique<nn::Dense>(desc.d_m, 1, rng);
    return m;
}

nn::Vec RegressorModel::standardize(const Volume& v) const {
    if (!(v.shape == desc_.input))
        throw ValidationError("backbone: volume shape does not match model input shape");
    nn::Vec out(v.voxels.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (double(v.voxels[i]) - desc_.input_shift) * desc_.input_gain;
    return out;
}

nn::Vec RegressorModel::embed(const Volume& v) {
    return trunk_.forward(standardize(v));
}

double RegressorModel::predict_age(const Volume& v) {
    return head_->forward(embed(v))[0];
}

double RegressorModel::forward_train(const Volume& v) {
    if (frozen_) throw ValidationError("backbone: training forward on a frozen model");
    return predict_age(v);
}

void RegressorModel::backward_train(double dpred) {
    if (frozen_) throw ValidationError("backbone: backward on a frozen model");
    trunk_.backward(head_->backward({dpred}));
}

std::vector<nn::ParamBlock> RegressorModel::param_blocks() {
    if (frozen_) throw ValidationError("backbone: parameter access on a frozen model");
    auto blocks = trunk_.param_blocks();
    blocks.push_back(head_->params());
    return blocks;
}

void RegressorModel::zero_grad() {
    trunk_.zero_grad();
    head_->zero_grad();
}

void RegressorModel::set_head_bias(double b) {
    if (frozen_) throw ValidationError("backbone: cannot edit a frozen model");
    head_->bias(0) = b;
}

namespace {

std::vector<nn::ParamBlock> all_blocks(nn::Sequential& trunk, nn::Dense& head) {
    auto blocks = trunk.param_blocks();
    blocks.push_back(head.params());
    return blocks;
}

} // namespace

std::size_t RegressorModel::param_count() const {
    auto* self = const_cast<RegressorModel*>(this);
    std::size_t n = 0;
    for (const auto& b : all_blocks(self->trunk_, *self->head_)) n += b.n;
    return n;
}

std::vector<float> RegressorModel::params_f32() const {
    auto* self = const_cast<RegressorModel*>(this);
    std::vector<float> out;
    out.reserve(param_count());
    for (const auto& b : all_blocks(self->trunk_, *self->head_))
        for (std::size_t i = 0; i < b.n; ++i) out.push_back(float(b.p[i]));
    return out;
}

void RegressorModel::load_params_f32(std::span<const float> p) {
    if (frozen_) throw ValidationError("backbone: cannot load into a frozen model");
    if (p.size() != param_count())
        throw ValidationError("backbone: parameter vector length mismatch");
    std::size_t off = 0;
    for (const auto& b : all_blocks(trunk_, *head_)) {
        for (std::size_t i = 0; i < b.n; ++i) b.p[i] = double(p[off + i]);
        off += b.n;
    }
}

std::string RegressorModel::param_hash() const {
    auto* self = const_cast<RegressorModel*>(this);
    Sha256 h;
    for (const auto& b : all_blocks(self->trunk_, *self->head_))
        h.update(b.p, b.n * sizeof(double));
    return to_hex(h.digest());
}

std::pair<double, double> MaeLoss::eval(double pred, double target) const {
    const double r = pred - target;
    const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    return {std::fabs(r), sign};
}

TrainHistory train_regressor(RegressorModel& model, std::span<const TrainSample> data,
                             const ScalarLoss& loss, const OptimizerConfig& cfg,
                             std::uint64_t seed) {
    if (model.frozen()) throw ValidationError("train_regressor: model is frozen");
    if (data.empty()) throw ValidationError("train_regressor: empty dataset");
    cfg.validate();

    const auto blocks = model.param_blocks();
    nn::AdamW opt;
    TrainHistory hist;
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = nn::cosine_lr(cfg.lr, cfg.lr_min, epoch, cfg.epochs);
        Rng shuffle_rng(derive_seed(seed, "shuffle", std::uint64_t(epoch)));
        for (std::size_t i = idx.size(); i > 1; --i) {
            const std::size_t j = std::size_t(shuffle_rng.next_below(i));
            std::swap(idx[i - 1], idx[j]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < idx.size(); start += std::size_t(cfg.batch_size)) {
            const std::size_t end = std::min(idx.size(), start + std::size_t(cfg.batch_size));
            const double inv_batch = 1.0 / double(end - start);
            model.zero_grad();
            for (std::size_t i = start; i < end; ++i) {
                const TrainSample& s = data[idx[i]];
                const double pred = model.forward_train(*s.volume);
                const auto [l, dl] = loss.eval(pred, s.target);
                if (!std::isfinite(l))
                    throw NumericalError("train_regressor: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(start / std::size_t(cfg.batch_size)));
                epoch_loss += l;
                model.backward_train(dl * inv_batch);
            }
            opt.step(lr, cfg.weight_decay, blocks);
        }
        hist.epoch_loss.push_back(epoch_loss / double(data.size()));
    }
    return hist;
}

void save_checkpoint(const std::filesystem::path& path, const RegressorModel& model,
                     const std::string& kind) {
    const std::vector<float> params = model.params_f32();
    const std::string payload_hash =
        sha256_hex(params.data(), params.size() * sizeof(float));
    nlohmann::json j;
    j["kind"] = kind;
    j["input"] = {model.desc().input.d, model.desc().input.h, model.desc().input.w};
    j["d_m"] = model.desc().d_m;
    j["channels"] = model.desc().channels;
    j["hidden"] = model.desc().hidden;
    j["input_shift"] = model.desc().input_shift;
    j["input_gain"] = model.desc().input_gain;
    j["param_count"] = params.size();
    j["sha256"] = payload_hash;
    io::write_container(path, io::kCheckpointMagic, j.dump(), params.data(),
                        params.size() * sizeof(float));
}

RegressorModel load_checkpoint(const std::filesystem::path& path,
                               const std::string& expected_kind) {
    const io::Container c = io::read_container(path, io::kCheckpointMagic);
    const nlohmann::json j = nlohmann::json::parse(c.header_json);
    if (j.at("kind").get<std::string>() != expected_kind)
        throw ValidationError("checkpoint " + path.string() + ": expected kind '" +
                              expected_kind + "'");
    const std::string recorded = j.at("sha256").get<std::string>();
    const std::string actual = sha256_hex(c.payload.data(), c.payload.size());
    if (recorded != actual)
        throw ValidationError("checkpoint " + path.string() +
                              ": content hash mismatch (corrupt or tampered file)");
    BackboneDesc desc;
    desc.input = GridShape{j.at("input")[0], j.at("input")[1], j.at("input")[2]};
    desc.d_m = j.at("d_m").get<int>();
    desc.channels = j.at("channels").get<std::vector<int>>();
    desc.hidden = j.at("hidden").get<int>();
    desc.input_shift = j.at("input_shift").get<double>();
    desc.input_gain = j.at("input_gain").get<double>();
    RegressorModel model = RegressorModel::reference(desc, 0);
    const std::size_t n = j.at("param_count").get<std::size_t>();
    if (c.payload.size() != n * sizeof(float) || n != model.param_count())
        throw ValidationError("checkpoint " + path.string() + ": parameter count mismatch");
    std::vector<float> params(n);
    std::memcpy(params.data(), c.payload.data(), c.payload.size());
    model.load_params_f32(params);
    return model;
}

} // namespace reba
