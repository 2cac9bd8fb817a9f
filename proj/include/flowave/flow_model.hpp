#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowave/flow_layers.hpp"

namespace flowave {

/// Architecture hyperparameters. Desk-scale defaults below; the reference
/// full-scale configuration is 8 blocks x 6 flows, 256 channels, factor-out
/// after block 4, 80 condition bands.
struct ModelConfig {
    int n_blocks = 4;
    int n_flows = 4;             // per block
    int residual_channels = 32;  // residual/skip/gate width of coupling nets
    int coupling_layers = 2;     // dilations 1, 2
    int kernel_size = 3;
    int factor_out_block = 2;  // factor out after this many blocks; 0 disables
    bool causal = false;
    int cond_channels = 16;  // mel bands
    int hop = 64;           // condition upsampling factor (samples per mel frame)
    double default_temperature = 0.8;

    int total_flows() const { return n_blocks * n_flows; }
    std::int64_t squeeze_factor() const { return std::int64_t(1) << n_blocks; }
};

struct LikelihoodResult {
    Var nats_per_dim;   // graph node, usable as (negated) training loss
    double value = 0.0; // nats per dimension
    double prior_logp = 0.0;
    double factored_logp = 0.0;
    double total_logdet = 0.0;
    std::vector<double> per_flow_logdet;
    Tensor z_final;
    Tensor z_factored;  // empty when no factor-out
};

/// Context-block flow stack: each block squeezes signal and condition, then
/// applies n_flows flow steps; one multi-scale factor-out at the configured
/// depth; unit-Gaussian prior on the final latent.
class FlowaveModel {
public:
    FlowaveModel() = default;
    FlowaveModel(ModelConfig cfg, Rng& rng);

    const ModelConfig& config() const { return cfg_; }
    std::vector<Param*> params();

    /// x: (B,1,T) in [-1,1], T divisible by 2^n_blocks; cond: (B,F,T).
    LikelihoodResult log_likelihood(Tape& t, const Tensor& x, const Tensor& cond);

    /// Parallel sampling: z ~ N(0,I) scaled by temperature, one inverse pass.
    /// Deterministic given rng state. Temperature 0 yields the zero-latent
    /// decode.
    template <typename S>
    TensorT<S> sample(const TensorT<S>& cond, double temperature, Rng& rng,
                      std::int64_t* inverse_pass_counter = nullptr) const {
        if (temperature < 0.0) throw std::invalid_argument("sample: temperature must be >= 0");
        const int B = cond.dim(0);
        const int T = cond.dim(2);
        if (T % (std::int64_t(1) << cfg_.n_blocks) != 0) {
            throw std::invalid_argument("sample: time length not divisible by 2^n_blocks");
        }
        const int t_final = static_cast<int>(T / (std::int64_t(1) << cfg_.n_blocks));
        TensorT<S> z({B, final_latent_channels(), t_final});
        for (std::int64_t i = 0; i < z.size(); ++i) {
            z[i] = static_cast<S>(temperature * rng.normal());
        }
        return decode_impl<S>(z, nullptr, cond, temperature, &rng, inverse_pass_counter);
    }

    /// Exact inverse from given latents: z is the final latent and z_factored
    /// (required iff factor-out is enabled) holds the factored-out channel
    /// values. decode(log_likelihood latents) reconstructs the input.
    template <typename S>
    TensorT<S> decode(const TensorT<S>& z, const TensorT<S>* z_factored,
                      const TensorT<S>& cond,
                      std::int64_t* inverse_pass_counter = nullptr) const {
        if (cfg_.factor_out_block > 0 && !z_factored) {
            throw std::invalid_argument("decode: factored latent required for this config");
        }
        return decode_impl<S>(z, z_factored, cond, 0.0, nullptr, inverse_pass_counter);
    }

    /// Sequential network evaluations needed to produce T samples: T for an
    /// autoregressive sampler, the constant flow count for this model.
    static std::int64_t count_sequential_passes(bool autoregressive, std::int64_t T,
                                                const ModelConfig& cfg) {
        return autoregressive ? T : cfg.total_flows();
    }

    /// Marks every ActNorm as initialized with its identity parameters, so a
    /// fresh model is exactly the identity flow.
    void set_identity_initialized();

    std::vector<std::vector<FlowStep>>& blocks() { return blocks_; }
    std::optional<FactorOutGaussian>& factor_out() { return factor_out_; }
    const std::vector<int>& channels_per_block() const { return channels_per_block_; }

    /// Channel count of the final latent; halved when the factor-out follows
    /// the last block.
    int final_latent_channels() const {
        const int c = channels_per_block_.back();
        return cfg_.factor_out_block == cfg_.n_blocks ? c / 2 : c;
    }

private:
    template <typename S>
    TensorT<S> decode_impl(const TensorT<S>& z, const TensorT<S>* z_factored,
                           const TensorT<S>& cond, double temperature, Rng* rng,
                           std::int64_t* inverse_pass_counter) const {
        const int T = cond.dim(2);
        // squeezed condition per block
        std::vector<TensorT<S>> conds;
        TensorT<S> c = cond;
        for (int b = 0; b < cfg_.n_blocks; ++b) {
            c = squeeze_tensor(c);
            conds.push_back(c);
        }
        const int t_final = static_cast<int>(T / (std::int64_t(1) << cfg_.n_blocks));
        if (z.dim(1) != final_latent_channels() || z.dim(2) != t_final) {
            throw std::invalid_argument("decode: latent must be (B," +
                                        std::to_string(final_latent_channels()) + "," +
                                        std::to_string(t_final) + "), got " + z.shape_str());
        }
        TensorT<S> h = z;
        std::int64_t passes = 0;
        for (int b = cfg_.n_blocks - 1; b >= 0; --b) {
            if (cfg_.factor_out_block > 0 && b + 1 == cfg_.factor_out_block) {
                TensorT<S> zf;
                if (z_factored) {
                    zf = *z_factored;
                    if (zf.shape() != h.shape()) {
                        throw std::invalid_argument("decode: factored latent must match " +
                                                    h.shape_str() + ", got " + zf.shape_str());
                    }
                } else {
                    auto w = factor_out_->snapshot<S>();
                    zf = factor_out_->sample_factored(w, h, temperature, *rng);
                }
                // forward kept the first half; the factored half was the second
                TensorT<S> full({h.dim(0), 2 * h.dim(1), h.dim(2)});
                for (int bb = 0; bb < h.dim(0); ++bb)
                    for (int cc = 0; cc < h.dim(1); ++cc)
                        for (int tt = 0; tt < h.dim(2); ++tt) {
                            full.at(bb, cc, tt) = h.at(bb, cc, tt);
                            full.at(bb, h.dim(1) + cc, tt) = zf.at(bb, cc, tt);
                        }
                h = std::move(full);
            }
            for (int f = cfg_.n_flows - 1; f >= 0; --f) {
                const FlowStep& step =
                    blocks_[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
                auto w = step.coupling.snapshot<S>();
                h = step.inverse(w, h, conds[static_cast<std::size_t>(b)]);
                ++passes;
            }
            h = unsqueeze_tensor(h);
        }
        if (inverse_pass_counter) *inverse_pass_counter = passes;
        return h;
    }

    ModelConfig cfg_;
    std::vector<std::vector<FlowStep>> blocks_;
    std::optional<FactorOutGaussian> factor_out_;
    std::vector<int> channels_per_block_;  // flow channel count inside each block
};

}  // namespace flowave
