#pragma once

#include "reba/nn.hpp"
#include "reba/volume.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace reba {

// AdamW with cosine annealing; the schedule reaches lr_min at the final epoch.
struct OptimizerConfig {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double lr_min = 0.0;
    int epochs = 60;
    int batch_size = 4;

    void validate() const;
};

struct BackboneDesc {
    GridShape input{32, 32, 32};
    int d_m = 32;
    std::vector<int> channels{8, 16, 32}; // one stride-2 stage per entry
    int hidden = 64;
    // Fixed affine input map x' = (v - input_shift) * input_gain. Per-volume
    // moment standardization is scale-invariant and erases intensity-coded
    // signals entirely, so the normalization is a dataset-independent
    // constant instead.
    double input_shift = 0.0;
    double input_gain = 2.0;
};

// Volumetric age regressor: a small strided conv stack, global average
// pooling and a two-layer perceptron produce the d_m embedding; a linear head
// maps the embedding to years. predict_age(v) == head(embed(v)) by
// construction.
//
// Inference on a frozen model is deterministic and bitwise stable; copy the
// model per thread for concurrent use, forward passes share scratch state.
class RegressorModel {
public:
    static RegressorModel reference(const BackboneDesc& desc, std::uint64_t seed);

    nn::Vec embed(const Volume& v);
    double predict_age(const Volume& v);

    // Training path. forward_train caches activations for the following
    // backward_train; both reject frozen models.
    double forward_train(const Volume& v);
    void backward_train(double dpred);
    std::vector<nn::ParamBlock> param_blocks();
    void zero_grad();

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }
    void set_head_bias(double b);

    const BackboneDesc& desc() const { return desc_; }
    std::size_t param_count() const;
    std::vector<float> params_f32() const;
    void load_params_f32(std::span<const float> p);
    // SHA-256 over the raw f64 parameter bytes, in block order.
    std::string param_hash() const;

private:
    RegressorModel() = default;
    nn::Vec standardize(const Volume& v) const;

    BackboneDesc desc_;
    nn::Sequential trunk_;
    std::unique_ptr<nn::Dense> head_;
    bool frozen_ = false;
};

struct TrainSample {
    const Volume* volume = nullptr;
    double target = 0.0;
};

// Scalar regression loss; returns (loss, dloss/dpred).
struct ScalarLoss {
    virtual ~ScalarLoss() = default;
    virtual std::pair<double, double> eval(double pred, double target) const = 0;
};

// Mean absolute error with subgradient 0 at the kink.
struct MaeLoss : ScalarLoss {
    std::pair<double, double> eval(double pred, double target) const override;
};

struct TrainHistory {
    std::vector<double> epoch_loss; // mean per-sample loss per epoch
};

// Deterministic mini-batch training: fixed init, seeded shuffle order per
// epoch, single-threaded. Throws NumericalError (with epoch and batch) on a
// non-finite loss and ValidationError for frozen models or empty data.
TrainHistory train_regressor(RegressorModel& model, std::span<const TrainSample> data,
                             const ScalarLoss& loss, const OptimizerConfig& cfg,
                             std::uint64_t seed);

// Checkpoint container: descriptor JSON line (including the payload's
// SHA-256) followed by the f32le parameter vector. load verifies the hash.
void save_checkpoint(const std::filesystem::path& path, const RegressorModel& model,
                     const std::string& kind);
RegressorModel load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind);

} // namespace reba
