#pragma once

#include "reba/rng.hpp"

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace reba::nn {

using Vec = std::vector<double>;

// Channel-major activation layout: (c, d, h, w) with w fastest.
struct ConvShape {
    int c = 0, d = 0, h = 0, w = 0;
    std::size_t size() const {
        return std::size_t(c) * std::size_t(d) * std::size_t(h) * std::size_t(w);
    }
};

struct ParamBlock {
    double* p = nullptr;
    double* g = nullptr;
    std::size_t n = 0;
};

// Single-sample layers with cached forward state; backward must follow the
// matching forward. Parameter gradients accumulate until zero_grad.
class Layer {
public:
    virtual ~Layer() = default;
    virtual const Vec& forward(const Vec& x) = 0;
    virtual Vec backward(const Vec& dy) = 0;
    virtual ParamBlock params() { return {}; }
    virtual void zero_grad() {}
};

// 3x3x3 convolution with zero padding 1 and configurable stride.
class Conv3d : public Layer {
public:
    Conv3d(ConvShape in, int out_channels, int stride, Rng& rng);
    const Vec& forward(const Vec& x) override;
    Vec backward(const Vec& dy) override;
    ParamBlock params() override;
    void zero_grad() override;
    ConvShape out_shape() const { return out_; }

private:
    ConvShape in_, out_;
    int stride_;
    std::size_t weight_count_;
    Vec theta_, grad_; // weights then biases
    Vec x_, y_;
};

class Relu : public Layer {
public:
    const Vec& forward(const Vec& x) override;
    Vec backward(const Vec& dy) override;

private:
    Vec x_, y_;
};

class GlobalAvgPool : public Layer {
public:
    explicit GlobalAvgPool(ConvShape in) : in_(in) {}
    const Vec& forward(const Vec& x) override;
    Vec backward(const Vec& dy) override;

private:
    ConvShape in_;
    Vec y_;
};

class Dense : public Layer {
public:
    Dense(int in, int out, Rng& rng);
    const Vec& forward(const Vec& x) override;
    Vec backward(const Vec& dy) override;
    ParamBlock params() override;
    void zero_grad() override;

    double& weight(int out, int in) { return theta_[std::size_t(out) * std::size_t(in_) + std::size_t(in)]; }
    double& bias(int out) { return theta_[weight_count_ + std::size_t(out)]; }
    int in_features() const { return in_; }
    int out_features() const { return out_count_; }

private:
    int in_, out_count_;
    std::size_t weight_count_;
    Vec theta_, grad_;
    Vec x_, y_;
};

class Sequential {
public:
    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    const Vec& forward(const Vec& x);
    Vec backward(Vec dy);
    std::vector<ParamBlock> param_blocks();
    void zero_grad();
    std::size_t param_count();

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// He-normal initialization for ReLU stacks.
void he_init(Vec& w, std::size_t count, std::size_t fan_in, Rng& rng);

// Adaptive moments with decoupled weight decay. Biases are not excluded from
// decay; at the decay rates used here the distinction is immaterial.
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(double lr, double weight_decay, const std::vector<ParamBlock>& blocks);

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    Vec m_, v_;
};

// Cosine annealing from lr0 (epoch 0) to lr_min (final epoch), no warmup.
double cosine_lr(double lr0, double lr_min, int epoch, int total_epochs);

} // namespace reba::nn
