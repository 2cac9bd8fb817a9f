#include "flowave/flow_model.hpp"

#include <cmath>
#include <stdexcept>

namespace flowave {

FlowaveModel::FlowaveModel(ModelConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.factor_out_block < 0 || cfg.factor_out_block > cfg.n_blocks) {
        throw std::invalid_argument("model: factor_out_block out of range");
    }
    int channels = 1;
    int cond = cfg.cond_channels;
    for (int b = 0; b < cfg.n_blocks; ++b) {
        channels *= 2;
        cond *= 2;
        channels_per_block_.push_back(channels);
        std::vector<FlowStep> flows;
        for (int f = 0; f < cfg.n_flows; ++f) {
            const std::string prefix =
                "flow.b" + std::to_string(b) + ".f" + std::to_string(f);
            flows.emplace_back(channels, cond, cfg.residual_channels, cfg.coupling_layers,
                               cfg.kernel_size, cfg.causal, prefix, rng);
        }
        blocks_.push_back(std::move(flows));
        if (cfg.factor_out_block > 0 && b + 1 == cfg.factor_out_block) {
            factor_out_.emplace(channels, cfg.residual_channels, cfg.coupling_layers,
                                cfg.kernel_size, cfg.causal, "factor_out", rng);
            channels /= 2;
        }
    }
}

std::vector<Param*> FlowaveModel::params() {
    std::vector<Param*> out;
    for (auto& block : blocks_) {
        for (auto& step : block) {
            for (Param* p : step.params()) out.push_back(p);
        }
    }
    if (factor_out_) {
        for (Param* p : factor_out_->params()) out.push_back(p);
    }
    return out;
}

void FlowaveModel::set_identity_initialized() {
    for (auto& block : blocks_) {
        for (auto& step : block) step.actnorm.set_identity_initialized();
    }
}

LikelihoodResult FlowaveModel::log_likelihood(Tape& t, const Tensor& x, const Tensor& cond) {
    if (x.rank() != 3 || x.dim(1) != 1) {
        throw std::invalid_argument("log_likelihood: x must be (B,1,T)");
    }
    const std::int64_t T = x.dim(2);
    if (T % cfg_.squeeze_factor() != 0) {
        throw std::invalid_argument("log_likelihood: T=" + std::to_string(T) +
                                    " not divisible by 2^" + std::to_string(cfg_.n_blocks));
    }
    if (cond.rank() != 3 || cond.dim(0) != x.dim(0) || cond.dim(2) != x.dim(2)) {
        throw std::invalid_argument("log_likelihood: condition not aligned with signal, got " +
                                    Tensor::shape_str(cond.shape()));
    }
    if (cond.dim(1) != cfg_.cond_channels) {
        throw std::invalid_argument("log_likelihood: condition has " +
                                    std::to_string(cond.dim(1)) + " bands, config says " +
                                    std::to_string(cfg_.cond_channels));
    }

    LikelihoodResult res;
    Var h = t.constant(x);
    Var c = t.constant(cond);
    Var total_logdet;
    Var factored_logp;
    int flow_index = 0;
    for (int b = 0; b < cfg_.n_blocks; ++b) {
        h = t.squeeze2(h);
        c = t.squeeze2(c);
        for (int f = 0; f < cfg_.n_flows; ++f) {
            auto [y, ld] = blocks_[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)]
                               .forward(t, h, c);
            h = y;
            if (!t.value(h).all_finite() || !std::isfinite(t.value(ld).item())) {
                throw std::runtime_error("log_likelihood: non-finite output at flow index " +
                                         std::to_string(flow_index) + " (block " +
                                         std::to_string(b) + ", flow " + std::to_string(f) + ")");
            }
            res.per_flow_logdet.push_back(t.value(ld).item());
            total_logdet = total_logdet.valid() ? t.add(total_logdet, ld) : ld;
            ++flow_index;
        }
        if (factor_out_ && b + 1 == cfg_.factor_out_block) {
            auto [retained, lp] = factor_out_->forward(t, h);
            res.z_factored = t.value(t.slice_channels(h, t.value(h).dim(1) / 2, t.value(h).dim(1)));
            h = retained;
            factored_logp = lp;
        }
    }
    res.z_final = t.value(h);
    Var prior_logp = std_gaussian_logpdf_sum(t, h);
    Var total = t.add(prior_logp, total_logdet);
    if (factored_logp.valid()) total = t.add(total, factored_logp);
    const double n_elems = static_cast<double>(x.size());
    res.nats_per_dim = t.scale(total, 1.0 / n_elems);
    res.value = t.value(res.nats_per_dim).item();
    res.prior_logp = t.value(prior_logp).item();
    res.factored_logp = factored_logp.valid() ? t.value(factored_logp).item() : 0.0;
    res.total_logdet = t.value(total_logdet).item();
    if (!std::isfinite(res.value)) {
        throw std::runtime_error("log_likelihood: non-finite total likelihood");
    }
    return res;
}

}  // namespace flowave
