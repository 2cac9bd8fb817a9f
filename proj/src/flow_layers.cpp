#include "flowave/flow_layers.hpp"

#include <cmath>
#include <stdexcept>

namespace flowave {

ActNorm::ActNorm(int channels, const std::string& prefix)
    : channels_(channels),
      scale_(prefix + ".scale", Tensor::full({channels}, 1.0)),
      bias_(prefix + ".bias", Tensor({channels})) {}

void ActNorm::data_dependent_init(const Tensor& x) {
    const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
    const double n = static_cast<double>(B) * T;
    for (int c = 0; c < C; ++c) {
        double mean = 0.0;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) mean += x.at(b, c, t);
        mean /= n;
        double var = 0.0;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t) {
                const double d = x.at(b, c, t) - mean;
                var += d * d;
            }
        var /= n;
        if (var < 1e-24) {
            throw std::runtime_error("actnorm: zero-variance channel " + std::to_string(c) +
                                     " in init batch (degenerate input)");
        }
        const double std = std::sqrt(var);
        scale_.value[c] = 1.0 / std;
        bias_.value[c] = -mean / std;
    }
    initialized_ = true;
}

std::pair<Var, Var> ActNorm::forward(Tape& t, Var x) {
    const Tensor& xv = t.value(x);
    if (xv.rank() != 3 || xv.dim(1) != channels_) {
        throw std::invalid_argument("actnorm: expected (B," + std::to_string(channels_) +
                                    ",T) input, got " + Tensor::shape_str(xv.shape()));
    }
    if (!initialized_) data_dependent_init(xv);
    for (int c = 0; c < channels_; ++c) {
        if (std::abs(scale_.value[c]) < 1e-8) {
            throw std::runtime_error("actnorm: scale for channel " + std::to_string(c) +
                                     " below 1e-8");
        }
    }
    const int B = xv.dim(0), T = xv.dim(2);
    Var s = t.leaf(scale_);
    Var b = t.leaf(bias_);
    Var y = t.affine_channels(x, s, b);
    // per batch element T * sum_i log|s_i|; total over batch is B times that
    Var logdet = t.scale(t.sum(t.log_abs(s)), static_cast<double>(B) * T);
    return {y, logdet};
}

AffineCoupling::AffineCoupling(int channels, int cond_channels, int residual_channels,
                               int n_layers, int kernel_size, bool causal,
                               const std::string& prefix, Rng& rng)
    : channels_(channels) {
    if (channels % 2 != 0) {
        throw std::invalid_argument("coupling: odd channel count " + std::to_string(channels) +
                                    " (split undefined)");
    }
    WaveNetConfig cfg;
    cfg.in_channels = channels / 2;
    cfg.cond_channels = cond_channels;
    cfg.out_channels = channels;  // m and log-s for the second half
    cfg.residual_channels = residual_channels;
    cfg.n_layers = n_layers;
    cfg.kernel_size = kernel_size;
    cfg.causal = causal;
    cfg.zero_init_output = true;
    net_ = GatedWaveNet(cfg, prefix + ".net", rng);
}

std::pair<Var, Var> AffineCoupling::forward(Tape& t, Var x, Var cond) const {
    const Tensor& xv = t.value(x);
    if (xv.dim(1) != channels_) {
        throw std::invalid_argument("coupling: expected " + std::to_string(channels_) +
                                    " channels, got " + std::to_string(xv.dim(1)));
    }
    const int H = channels_ / 2;
    Var x1 = t.slice_channels(x, 0, H);
    Var x2 = t.slice_channels(x, H, channels_);
    Var ms = net_.forward(t, x1, cond);
    Var m = t.slice_channels(ms, 0, H);
    Var s = t.clamp(t.slice_channels(ms, H, channels_), -kLogScaleClamp, kLogScaleClamp);
    Var y2 = t.mul(t.sub(x2, m), t.exp_(t.neg(s)));
    Var y = t.concat_channels(x1, y2);
    Var logdet = t.neg(t.sum(s));
    return {y, logdet};
}

FactorOutGaussian::FactorOutGaussian(int channels, int residual_channels, int n_layers,
                                     int kernel_size, bool causal, const std::string& prefix,
                                     Rng& rng) {
    if (channels % 2 != 0) {
        throw std::invalid_argument("factor_out: odd channel count " + std::to_string(channels));
    }
    WaveNetConfig cfg;
    cfg.in_channels = channels / 2;
    cfg.cond_channels = 0;
    cfg.out_channels = channels;  // mu and log-sigma for the factored half
    cfg.residual_channels = residual_channels;
    cfg.n_layers = n_layers;
    cfg.kernel_size = kernel_size;
    cfg.causal = causal;
    cfg.zero_init_output = true;
    net_ = GatedWaveNet(cfg, prefix + ".net", rng);
}

std::pair<Var, Var> FactorOutGaussian::forward(Tape& t, Var h) const {
    const Tensor& hv = t.value(h);
    const int C = hv.dim(1), H = C / 2;
    if (C % 2 != 0) throw std::invalid_argument("factor_out: odd channel count");
    Var retained = t.slice_channels(h, 0, H);
    Var factored = t.slice_channels(h, H, C);
    Var ms = net_.forward(t, retained, Var{});
    Var mu = t.slice_channels(ms, 0, H);
    Var log_sigma = t.clamp(t.slice_channels(ms, H, C), -kLogScaleClamp, kLogScaleClamp);
    Var logprob = gaussian_logpdf_sum(t, factored, mu, log_sigma);
    return {retained, logprob};
}

}  // namespace flowave
