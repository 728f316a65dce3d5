#include "reba/nn.hpp"

#include "reba/errors.hpp"

#include <cmath>

namespace reba::nn {

void he_init(Vec& w, std::size_t count, std::size_t fan_in, Rng& rng) {
    const double scale = std::sqrt(2.0 / double(fan_in));
    for (std::size_t i = 0; i < count; ++i) w[i] = scale * rng.next_normal();
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(ConvShape in, int out_channels, int stride, Rng& rng)
    : in_(in), stride_(stride) {
    const int od = (in.d + 2 - 3) / stride + 1;
    const int oh = (in.h + 2 - 3) / stride + 1;
    const int ow = (in.w + 2 - 3) / stride + 1;
    if (in.d < 3 || in.h < 3 || in.w < 3 || od < 1 || oh < 1 || ow < 1)
        throw ValidationError("conv3d: input shape too small for a 3x3x3 kernel");
    out_ = ConvShape{out_channels, od, oh, ow};
    weight_count_ = std::size_t(out_channels) * std::size_t(in.c) * 27;
    theta_.assign(weight_count_ + std::size_t(out_channels), 0.0);
    grad_.assign(theta_.size(), 0.0);
    he_init(theta_, weight_count_, std::size_t(in.c) * 27, rng);
}

const Vec& Conv3d::forward(const Vec& x) {
    x_ = x;
    y_.assign(out_.size(), 0.0);
    const std::size_t in_plane = std::size_t(in_.d) * std::size_t(in_.h) * std::size_t(in_.w);
    const std::size_t out_plane = std::size_t(out_.d) * std::size_t(out_.h) * std::size_t(out_.w);
    for (int oc = 0; oc < out_.c; ++oc) {
        const double* wbase = theta_.data() + std::size_t(oc) * std::size_t(in_.c) * 27;
        const double bias = theta_[weight_count_ + std::size_t(oc)];
        double* ybase = y_.data() + std::size_t(oc) * out_plane;
        for (int od = 0; od < out_.d; ++od)
            for (int oh = 0; oh < out_.h; ++oh)
                for (int ow = 0; ow < out_.w; ++ow) {
                    double acc = bias;
                    const int id0 = od * stride_ - 1;
                    const int ih0 = oh * stride_ - 1;
                    const int iw0 = ow * stride_ - 1;
                    for (int ic = 0; ic < in_.c; ++ic) {
                        const double* xc = x_.data() + std::size_t(ic) * in_plane;
                        const double* wc = wbase + std::size_t(ic) * 27;
                        for (int kd = 0; kd < 3; ++kd) {
                            const int id = id0 + kd;
                            if (id < 0 || id >= in_.d) continue;
                            for (int kh = 0; kh < 3; ++kh) {
                                const int ih = ih0 + kh;
                                if (ih < 0 || ih >= in_.h) continue;
                                const double* xrow =
                                    xc + (std::size_t(id) * std::size_t(in_.h) + std::size_t(ih)) *
                                             std::size_t(in_.w);
                                const double* wrow = wc + (kd * 3 + kh) * 3;
                                for (int kw = 0; kw < 3; ++kw) {
                                    const int iw = iw0 + kw;
                                    if (iw < 0 || iw >= in_.w) continue;
                                    acc += wrow[kw] * xrow[iw];
                                }
                            }
                        }
                    }
                    ybase[(std::size_t(od) * std::size_t(out_.h) + std::size_t(oh)) *
                              std::size_t(out_.w) +
                          std::size_t(ow)] = acc;
                }
    }
    return y_;
}

Vec Conv3d::backward(const Vec& dy) {
    Vec dx(in_.size(), 0.0);
    const std::size_t in_plane = std::size_t(in_.d) * std::size_t(in_.h) * std::size_t(in_.w);
    const std::size_t out_plane = std::size_t(out_.d) * std::size_t(out_.h) * std::size_t(out_.w);
    for (int oc = 0; oc < out_.c; ++oc) {
        const double* wbase = theta_.data() + std::size_t(oc) * std::size_t(in_.c) * 27;
        double* gwbase = grad_.data() + std::size_t(oc) * std::size_t(in_.c) * 27;
        double& gbias = grad_[weight_count_ + std::size_t(oc)];
        const double* dybase = dy.data() + std::size_t(oc) * out_plane;
        for (int od = 0; od < out_.d; ++od)
            for (int oh = 0; oh < out_.h; ++oh)
                for (int ow = 0; ow < out_.w; ++ow) {
                    const double g =
                        dybase[(std::size_t(od) * std::size_t(out_.h) + std::size_t(oh)) *
                                   std::size_t(out_.w) +
                               std::size_t(ow)];
                    if (g == 0.0) continue;
                    gbias += g;
                    const int id0 = od * stride_ - 1;
                    const int ih0 = oh * stride_ - 1;
                    const int iw0 = ow * stride_ - 1;
                    for (int ic = 0; ic < in_.c; ++ic) {
                        const double* xc = x_.data() + std::size_t(ic) * in_plane;
                        double* dxc = dx.data() + std::size_t(ic) * in_plane;
                        const double* wc = wbase + std::size_t(ic) * 27;
                        double* gwc = gwbase + std::size_t(ic) * 27;
                        for (int kd = 0; kd < 3; ++kd) {
                            const int id = id0 + kd;
                            if (id < 0 || id >= in_.d) continue;
                            for (int kh = 0; kh < 3; ++kh) {
                                const int ih = ih0 + kh;
                                if (ih < 0 || ih >= in_.h) continue;
                                const std::size_t row_off =
                                    (std::size_t(id) * std::size_t(in_.h) + std::size_t(ih)) *
                                    std::size_t(in_.w);
                                const double* wrow = wc + (kd * 3 + kh) * 3;
                                double* gwrow = gwc + (kd * 3 + kh) * 3;
                                for (int kw = 0; kw < 3; ++kw) {
                                    const int iw = iw0 + kw;
                                    if (iw < 0 || iw >= in_.w) continue;
                                    gwrow[kw] += g * xc[row_off + std::size_t(iw)];
                                    dxc[row_off + std::size_t(iw)] += g * wrow[kw];
                                }
                            }
                        }
                    }
                }
    }
    return dx;
}

ParamBlock Conv3d::params() { return {theta_.data(), grad_.data(), theta_.size()}; }

void Conv3d::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

// ---------------------------------------------------------------------------
// Relu

const Vec& Relu::forward(const Vec& x) {
    x_ = x;
    y_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y_[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y_;
}

Vec Relu::backward(const Vec& dy) {
    Vec dx(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x_[i] > 0.0 ? dy[i] : 0.0;
    return dx;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

const Vec& GlobalAvgPool::forward(const Vec& x) {
    const std::size_t plane = std::size_t(in_.d) * std::size_t(in_.h) * std::size_t(in_.w);
    y_.assign(std::size_t(in_.c), 0.0);
    for (int c = 0; c < in_.c; ++c) {
        double acc = 0.0;
        const double* xc = x.data() + std::size_t(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += xc[i];
        y_[std::size_t(c)] = acc / double(plane);
    }
    return y_;
}

Vec GlobalAvgPool::backward(const Vec& dy) {
    const std::size_t plane = std::size_t(in_.d) * std::size_t(in_.h) * std::size_t(in_.w);
    Vec dx(in_.size());
    for (int c = 0; c < in_.c; ++c) {
        const double g = dy[std::size_t(c)] / double(plane);
        double* dxc = dx.data() + std::size_t(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) dxc[i] = g;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(int in, int out, Rng& rng) : in_(in), out_count_(out) {
    weight_count_ = std::size_t(in) * std::size_t(out);
    theta_.assign(weight_count_ + std::size_t(out), 0.0);
    grad_.assign(theta_.size(), 0.0);
    he_init(theta_, weight_count_, std::size_t(in), rng);
}

const Vec& Dense::forward(const Vec& x) {
    x_ = x;
    y_.assign(std::size_t(out_count_), 0.0);
    for (int o = 0; o < out_count_; ++o) {
        const double* wrow = theta_.data() + std::size_t(o) * std::size_t(in_);
        double acc = theta_[weight_count_ + std::size_t(o)];
        for (int i = 0; i < in_; ++i) acc += wrow[i] * x_[std::size_t(i)];
        y_[std::size_t(o)] = acc;
    }
    return y_;
}

Vec Dense::backward(const Vec& dy) {
    Vec dx(std::size_t(in_), 0.0);
    for (int o = 0; o < out_count_; ++o) {
        const double g = dy[std::size_t(o)];
        grad_[weight_count_ + std::size_t(o)] += g;
        const double* wrow = theta_.data() + std::size_t(o) * std::size_t(in_);
        double* gwrow = grad_.data() + std::size_t(o) * std::size_t(in_);
        for (int i = 0; i < in_; ++i) {
            gwrow[i] += g * x_[std::size_t(i)];
            dx[std::size_t(i)] += g * wrow[i];
        }
    }
    return dx;
}

ParamBlock Dense::params() { return {theta_.data(), grad_.data(), theta_.size()}; }

void Dense::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

// ---------------------------------------------------------------------------
// Sequential

const Vec& Sequential::forward(const Vec& x) {
    const Vec* cur = &x;
    for (auto& l : layers_) cur = &l->forward(*cur);
    return *cur;
}

Vec Sequential::backward(Vec dy) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dy = (*it)->backward(dy);
    return dy;
}

std::vector<ParamBlock> Sequential::param_blocks() {
    std::vector<ParamBlock> out;
    for (auto& l : layers_) {
        const ParamBlock b = l->params();
        if (b.n > 0) out.push_back(b);
    }
    return out;
}

void Sequential::zero_grad() {
    for (auto& l : layers_) l->zero_grad();
}

std::size_t Sequential::param_count() {
    std::size_t n = 0;
    for (const auto& b : param_blocks()) n += b.n;
    return n;
}

// ---------------------------------------------------------------------------
// AdamW

void AdamW::step(double lr, double weight_decay, const std::vector<ParamBlock>& blocks) {
    std::size_t total = 0;
    for (const auto& b : blocks) total += b.n;
    if (m_.size() != total) {
        m_.assign(total, 0.0);
        v_.assign(total, 0.0);
        t_ = 0;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    std::size_t off = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < b.n; ++i) {
            const double g = b.g[i];
            m_[off + i] = beta1_ * m_[off + i] + (1.0 - beta1_) * g;
            v_[off + i] = beta2_ * v_[off + i] + (1.0 - beta2_) * g * g;
            const double mhat = m_[off + i] / bc1;
            const double vhat = v_[off + i] / bc2;
            b.p[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay * b.p[i]);
        }
        off += b.n;
    }
}

double cosine_lr(double lr0, double lr_min, int epoch, int total_epochs) {
    if (total_epochs <= 1) return lr0;
    const double t = double(epoch) / double(total_epochs - 1);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(3.14159265358979323846 * t));
}

} // namespace reba::nn
