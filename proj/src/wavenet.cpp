#include "flowave/wavenet.hpp"

#include <cmath>
#include <stdexcept>

namespace flowave {

namespace {

Tensor init_conv_weight(Rng& rng, int cout, int cin, int k) {
    const double std = std::sqrt(1.0 / (cin * k));
    return rng.normal_tensor({cout, cin, k}, std);
}

}  // namespace

GatedWaveNet::GatedWaveNet(WaveNetConfig cfg, const std::string& prefix, Rng& rng) : cfg_(cfg) {
    const int R = cfg.residual_channels;
    front_w_ = Param(prefix + ".front_w", init_conv_weight(rng, R, cfg.in_channels, 1));
    front_b_ = Param(prefix + ".front_b", Tensor({R}));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string lp = prefix + ".layer" + std::to_string(l);
        dil_w_.emplace_back(lp + ".dil_w", init_conv_weight(rng, 2 * R, R, cfg.kernel_size));
        dil_b_.emplace_back(lp + ".dil_b", Tensor({2 * R}));
        if (cfg.cond_channels > 0) {
            cond_w_.emplace_back(lp + ".cond_w", init_conv_weight(rng, 2 * R, cfg.cond_channels, 1));
        }
        res_w_.emplace_back(lp + ".res_w", init_conv_weight(rng, R, R, 1));
        res_b_.emplace_back(lp + ".res_b", Tensor({R}));
        skip_w_.emplace_back(lp + ".skip_w", init_conv_weight(rng, R, R, 1));
        skip_b_.emplace_back(lp + ".skip_b", Tensor({R}));
    }
    Tensor ow = cfg.zero_init_output ? Tensor({cfg.out_channels, R, 1})
                                     : init_conv_weight(rng, cfg.out_channels, R, 1);
    out_w_ = Param(prefix + ".out_w", std::move(ow));
    out_b_ = Param(prefix + ".out_b", Tensor({cfg.out_channels}));
}

std::vector<Param*> GatedWaveNet::params() {
    std::vector<Param*> out{&front_w_, &front_b_};
    for (int l = 0; l < cfg_.n_layers; ++l) {
        out.push_back(&dil_w_[static_cast<std::size_t>(l)]);
        out.push_back(&dil_b_[static_cast<std::size_t>(l)]);
        if (cfg_.cond_channels > 0) out.push_back(&cond_w_[static_cast<std::size_t>(l)]);
        out.push_back(&res_w_[static_cast<std::size_t>(l)]);
        out.push_back(&res_b_[static_cast<std::size_t>(l)]);
        out.push_back(&skip_w_[static_cast<std::size_t>(l)]);
        out.push_back(&skip_b_[static_cast<std::size_t>(l)]);
    }
    out.push_back(&out_w_);
    out.push_back(&out_b_);
    return out;
}

Var GatedWaveNet::forward(Tape& t, Var x, Var cond) const {
    if (cfg_.cond_channels > 0) {
        if (!cond.valid()) throw std::invalid_argument("wavenet: missing condition input");
        const Tensor& cv = t.value(cond);
        if (cv.dim(1) != cfg_.cond_channels) {
            throw std::invalid_argument("wavenet: condition has " + std::to_string(cv.dim(1)) +
                                        " channels, expected " +
                                        std::to_string(cfg_.cond_channels));
        }
        if (cv.dim(2) != t.value(x).dim(2)) {
            throw std::invalid_argument("wavenet: condition time length " +
                                        std::to_string(cv.dim(2)) + " does not match input " +
                                        std::to_string(t.value(x).dim(2)));
        }
    }
    auto* self = const_cast<GatedWaveNet*>(this);
    const bool causal = cfg_.causal;
    const int R = cfg_.residual_channels;
    Var h = t.conv1d(x, t.leaf(self->front_w_), t.leaf(self->front_b_), 1, causal);
    Var skip_sum;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const auto li = static_cast<std::size_t>(l);
        Var z = t.conv1d(h, t.leaf(self->dil_w_[li]), t.leaf(self->dil_b_[li]), cfg_.dilation(l),
                         causal);
        if (cfg_.cond_channels > 0) {
            Var zc = t.conv1d(cond, t.leaf(self->cond_w_[li]), Var{}, 1, causal);
            z = t.add(z, zc);
        }
        Var a = t.slice_channels(z, 0, R);
        Var bg = t.slice_channels(z, R, 2 * R);
        Var g = t.mul(t.tanh_(a), t.sigmoid_(bg));
        Var sk = t.conv1d(g, t.leaf(self->skip_w_[li]), t.leaf(self->skip_b_[li]), 1, causal);
        skip_sum = skip_sum.valid() ? t.add(skip_sum, sk) : sk;
        Var res = t.conv1d(g, t.leaf(self->res_w_[li]), t.leaf(self->res_b_[li]), 1, causal);
        h = t.add(h, res);
    }
    return t.conv1d(t.relu_(skip_sum), t.leaf(self->out_w_), t.leaf(self->out_b_), 1, causal);
}

}  // namespace flowave
