#pragma once

#include <string>
#include <utility>

#include "flowave/autograd.hpp"
#include "flowave/rng.hpp"
#include "flowave/wavenet.hpp"

namespace flowave {

// log-scale outputs of coupling/factor-out nets are clamped to this range
// before exponentiation; far outside any trained range.
inline constexpr double kLogScaleClamp = 7.0;

/// Per-channel affine y = x*s + b with data-dependent initialization from the
/// first batch seen (zero mean, unit variance per channel).
class ActNorm {
public:
    ActNorm() = default;
    ActNorm(int channels, const std::string& prefix);

    /// Returns (y, logdet) where logdet = B * T * sum_i log|s_i| (total over
    /// the batch). Initializes from x on first call unless disabled.
    std::pair<Var, Var> forward(Tape& t, Var x);

    template <typename S>
    void inverse_inplace(TensorT<S>& y) const {
        if (!initialized_) throw std::runtime_error("actnorm: inverse before initialization");
        const int B = y.dim(0), C = y.dim(1), T = y.dim(2);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const S sc = static_cast<S>(scale_.value[c]);
                const S bc = static_cast<S>(bias_.value[c]);
                S* row = y.data() + y.idx3(b, c, 0);
                for (int t = 0; t < T; ++t) row[t] = (row[t] - bc) / sc;
            }
    }

    bool initialized() const { return initialized_; }
    void set_identity_initialized() { initialized_ = true; }
    int channels() const { return channels_; }
    Param& scale() { return scale_; }
    Param& bias() { return bias_; }
    std::vector<Param*> params() { return {&scale_, &bias_}; }

    /// Persisted alongside parameters in checkpoints.
    void set_initialized(bool v) { initialized_ = v; }

private:
    void data_dependent_init(const Tensor& x);

    int channels_ = 0;
    Param scale_, bias_;
    bool initialized_ = false;
};

/// Real-NVP style affine coupling: first channel half passes through and
/// drives a WaveNet that predicts (m, log s) for the second half.
class AffineCoupling {
public:
    AffineCoupling() = default;
    AffineCoupling(int channels, int cond_channels, int residual_channels, int n_layers,
                   int kernel_size, bool causal, const std::string& prefix, Rng& rng);

    /// x -> y with y_half2 = (x_half2 - m) * exp(-s); logdet = -sum(s).
    std::pair<Var, Var> forward(Tape& t, Var x, Var cond) const;

    template <typename S>
    TensorT<S> inverse(const WaveNetWeights<S>& w, const TensorT<S>& y,
                       const TensorT<S>& cond) const {
        const int B = y.dim(0), C = y.dim(1), T = y.dim(2), H = C / 2;
        if (C != channels_) throw std::invalid_argument("coupling: channel count mismatch");
        TensorT<S> y1({B, H, T});
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < H; ++c)
                for (int t = 0; t < T; ++t) y1.at(b, c, t) = y.at(b, c, t);
        TensorT<S> ms = net_.eval(w, y1, &cond);
        TensorT<S> x = y;
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < H; ++c)
                for (int t = 0; t < T; ++t) {
                    const S m = ms.at(b, c, t);
                    S s = ms.at(b, H + c, t);
                    s = std::min<S>(std::max<S>(s, S(-kLogScaleClamp)), S(kLogScaleClamp));
                    x.at(b, H + c, t) = y.at(b, H + c, t) * std::exp(s) + m;
                }
        return x;
    }

    template <typename S>
    WaveNetWeights<S> snapshot() const {
        return net_.snapshot<S>();
    }

    int channels() const { return channels_; }
    bool causal() const { return net_.config().causal; }
    GatedWaveNet& net() { return net_; }
    std::vector<Param*> params() { return net_.params(); }

private:
    int channels_ = 0;
    GatedWaveNet net_;
};

/// One flow: ActNorm -> affine coupling -> change-order.
struct FlowStep {
    ActNorm actnorm;
    AffineCoupling coupling;

    FlowStep() = default;
    FlowStep(int channels, int cond_channels, int residual_channels, int n_layers,
             int kernel_size, bool causal, const std::string& prefix, Rng& rng)
        : actnorm(channels, prefix + ".actnorm"),
          coupling(channels, cond_channels, residual_channels, n_layers, kernel_size, causal,
                   prefix + ".coupling", rng) {}

    /// Returns (y, logdet of this flow).
    std::pair<Var, Var> forward(Tape& t, Var x, Var cond) const {
        auto* self = const_cast<FlowStep*>(this);
        auto [h, ld_an] = self->actnorm.forward(t, x);
        auto [y, ld_ac] = coupling.forward(t, h, cond);
        return {t.change_order(y), t.add(ld_an, ld_ac)};
    }

    template <typename S>
    TensorT<S> inverse(const WaveNetWeights<S>& w, const TensorT<S>& y,
                       const TensorT<S>& cond) const {
        TensorT<S> h = change_order_tensor(y);  // involution
        h = coupling.inverse(w, h, cond);
        actnorm.inverse_inplace(h);
        return h;
    }

    std::vector<Param*> params() {
        auto out = actnorm.params();
        for (Param* p : coupling.params()) out.push_back(p);
        return out;
    }

    template <typename S>
    static TensorT<S> change_order_tensor(const TensorT<S>& x) {
        const int B = x.dim(0), C = x.dim(1), T = x.dim(2), H = C / 2;
        if (C % 2 != 0) throw std::invalid_argument("change_order: odd channel count");
        TensorT<S> out(x.shape());
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int t = 0; t < T; ++t) out.at(b, c, t) = x.at(b, (c + H) % C, t);
        return out;
    }
};

/// Multi-scale factor-out: second channel half is scored under a Gaussian
/// whose (mu, log sigma) a WaveNet predicts from the retained first half.
class FactorOutGaussian {
public:
    FactorOutGaussian() = default;
    FactorOutGaussian(int channels, int residual_channels, int n_layers, int kernel_size,
                      bool causal, const std::string& prefix, Rng& rng);

    /// h -> (retained first half, sum log N(h_half2; mu, sigma^2)).
    std::pair<Var, Var> forward(Tape& t, Var h) const;

    /// retained -> factored sample mu + temperature * sigma * eps.
    template <typename S>
    TensorT<S> sample_factored(const WaveNetWeights<S>& w, const TensorT<S>& retained,
                               double temperature, Rng& rng) const {
        TensorT<S> ms = net_.eval(w, retained, static_cast<const TensorT<S>*>(nullptr));
        const int B = retained.dim(0), H = retained.dim(1), T = retained.dim(2);
        TensorT<S> z({B, H, T});
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < H; ++c)
                for (int t = 0; t < T; ++t) {
                    const S mu = ms.at(b, c, t);
                    S ls = ms.at(b, H + c, t);
                    ls = std::min<S>(std::max<S>(ls, S(-kLogScaleClamp)), S(kLogScaleClamp));
                    z.at(b, c, t) =
                        mu + static_cast<S>(temperature * rng.normal()) * std::exp(ls);
                }
        return z;
    }

    template <typename S>
    WaveNetWeights<S> snapshot() const {
        return net_.snapshot<S>();
    }

    GatedWaveNet& net() { return net_; }
    std::vector<Param*> params() { return net_.params(); }

private:
    GatedWaveNet net_;
};

/// Plain-tensor squeeze/unsqueeze mirroring the tape ops: even time indices
/// fill the first C channels, odd indices the last C.
template <typename S>
TensorT<S> squeeze_tensor(const TensorT<S>& x) {
    if (x.rank() != 3) throw std::invalid_argument("squeeze: rank-3 input required");
    const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
    if (T % 2 != 0) throw std::invalid_argument("squeeze: odd time length " + std::to_string(T));
    TensorT<S> out({B, 2 * C, T / 2});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int t2 = 0; t2 < T / 2; ++t2) {
                out.at(b, c, t2) = x.at(b, c, 2 * t2);
                out.at(b, C + c, t2) = x.at(b, c, 2 * t2 + 1);
            }
    return out;
}

template <typename S>
TensorT<S> unsqueeze_tensor(const TensorT<S>& x) {
    if (x.rank() != 3 || x.dim(1) % 2 != 0) {
        throw std::invalid_argument("unsqueeze: even channel count required");
    }
    const int B = x.dim(0), C = x.dim(1) / 2, Th = x.dim(2);
    TensorT<S> out({B, C, Th * 2});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int t2 = 0; t2 < Th; ++t2) {
                out.at(b, c, 2 * t2) = x.at(b, c, t2);
                out.at(b, c, 2 * t2 + 1) = x.at(b, C + c, t2);
            }
    return out;
}

}  // namespace flowave
