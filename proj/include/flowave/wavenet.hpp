#pragma once

#include <string>
#include <vector>

#include "flowave/autograd.hpp"
#include "flowave/conv.hpp"
#include "flowave/rng.hpp"
#include "flowave/tensor.hpp"

namespace flowave {

struct WaveNetConfig {
    int in_channels = 1;
    int cond_channels = 0;  // 0 = unconditioned
    int out_channels = 2;
    int residual_channels = 32;  // residual, skip and gate width
    int n_layers = 2;
    int kernel_size = 3;
    int dilation_cycle = 0;  // 0 means one cycle spanning all layers
    bool causal = false;
    bool zero_init_output = true;  // identity-at-init behaviour for flow layers

    int dilation(int layer) const {
        const int cycle = dilation_cycle > 0 ? dilation_cycle : n_layers;
        return 1 << (layer % cycle);
    }
};

/// Weights snapshot in a chosen precision, for the tape-free evaluation path.
template <typename S>
struct WaveNetWeights {
    TensorT<S> front_w;
    std::vector<S> front_b;
    std::vector<TensorT<S>> dil_w;
    std::vector<std::vector<S>> dil_b;
    std::vector<TensorT<S>> cond_w;
    std::vector<TensorT<S>> res_w;
    std::vector<std::vector<S>> res_b;
    std::vector<TensorT<S>> skip_w;
    std::vector<std::vector<S>> skip_b;
    TensorT<S> out_w;
    std::vector<S> out_b;
};

/// Gated-tanh WaveNet stack: front 1x1 -> n dilated conv layers with
/// condition injection, residual and skip 1x1 projections -> ReLU -> output
/// 1x1. The output projection is zero-initialized when configured, so a
/// fresh network emits exactly zero.
class GatedWaveNet {
public:
    GatedWaveNet() = default;
    GatedWaveNet(WaveNetConfig cfg, const std::string& prefix, Rng& rng);

    const WaveNetConfig& config() const { return cfg_; }

    std::vector<Param*> params();

    /// Tape forward; cond must be valid iff cond_channels > 0.
    Var forward(Tape& t, Var x, Var cond) const;

    template <typename S>
    WaveNetWeights<S> snapshot() const {
        WaveNetWeights<S> w;
        w.front_w = front_w_.value.cast<S>();
        w.front_b = front_b_.value.cast<S>().vec();
        for (int l = 0; l < cfg_.n_layers; ++l) {
            w.dil_w.push_back(dil_w_[l].value.cast<S>());
            w.dil_b.push_back(dil_b_[l].value.cast<S>().vec());
            if (cfg_.cond_channels > 0) w.cond_w.push_back(cond_w_[l].value.cast<S>());
            w.res_w.push_back(res_w_[l].value.cast<S>());
            w.res_b.push_back(res_b_[l].value.cast<S>().vec());
            w.skip_w.push_back(skip_w_[l].value.cast<S>());
            w.skip_b.push_back(skip_b_[l].value.cast<S>().vec());
        }
        w.out_w = out_w_.value.cast<S>();
        w.out_b = out_b_.value.cast<S>().vec();
        return w;
    }

    /// Tape-free evaluation with a weights snapshot (any precision).
    template <typename S>
    TensorT<S> eval(const WaveNetWeights<S>& w, const TensorT<S>& x,
                    const TensorT<S>* cond) const {
        const bool causal = cfg_.causal;
        TensorT<S> h;
        conv1d_forward(x, w.front_w, w.front_b.data(), 1, causal, h);
        const int B = h.dim(0), R = cfg_.residual_channels, T = h.dim(2);
        TensorT<S> skip_sum({B, R, T});
        TensorT<S> z, zc, g({B, R, T}), proj;
        for (int l = 0; l < cfg_.n_layers; ++l) {
            conv1d_forward(h, w.dil_w[static_cast<std::size_t>(l)],
                           w.dil_b[static_cast<std::size_t>(l)].data(), cfg_.dilation(l), causal,
                           z);
            if (cfg_.cond_channels > 0) {
                conv1d_forward(*cond, w.cond_w[static_cast<std::size_t>(l)],
                               nullptr, 1, causal, zc);
                for (std::int64_t i = 0; i < z.size(); ++i) z[i] += zc[i];
            }
            // gated tanh: tanh(a) * sigmoid(b)
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < R; ++c)
                    for (int t = 0; t < T; ++t) {
                        const S a = z.at(b, c, t);
                        const S bg = z.at(b, R + c, t);
                        g.at(b, c, t) = std::tanh(a) * (S(1) / (S(1) + std::exp(-bg)));
                    }
            conv1d_forward(g, w.skip_w[static_cast<std::size_t>(l)],
                           w.skip_b[static_cast<std::size_t>(l)].data(), 1, causal, proj);
            for (std::int64_t i = 0; i < skip_sum.size(); ++i) skip_sum[i] += proj[i];
            conv1d_forward(g, w.res_w[static_cast<std::size_t>(l)],
                           w.res_b[static_cast<std::size_t>(l)].data(), 1, causal, proj);
            for (std::int64_t i = 0; i < h.size(); ++i) h[i] += proj[i];
        }
        for (auto& v : skip_sum.vec()) v = v > S(0) ? v : S(0);
        TensorT<S> out;
        conv1d_forward(skip_sum, w.out_w, w.out_b.data(), 1, causal, out);
        return out;
    }

private:
    WaveNetConfig cfg_;
    Param front_w_, front_b_;
    std::vector<Param> dil_w_, dil_b_, cond_w_, res_w_, res_b_, skip_w_, skip_b_;
    Param out_w_, out_b_;
};

}  // namespace flowave
