#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowave/autograd.hpp"

namespace flowave {

/// Adam with stepwise learning-rate decay: lr_eff = lr * decay^floor(step/interval).
struct AdamConfig {
    double lr = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay = 0.5;
    std::int64_t decay_interval = 1000;  // reference scale 200K; desk scale configurable
};

struct AdamState {
    AdamConfig config;
    std::int64_t step = 0;
    std::map<std::string, Tensor> m;  // first moments, keyed by parameter name
    std::map<std::string, Tensor> v;  // second moments

    double effective_lr() const {
        const auto k = static_cast<double>(step / config.decay_interval);
        return config.lr * std::pow(config.decay, k);
    }
};

/// One optimizer step over `params` using their accumulated gradients.
/// Rejects non-finite gradients, naming the offending parameter.
inline void adam_step(std::vector<Param*>& params, AdamState& state) {
    for (Param* p : params) {
        if (!p->grad.same_shape(p->value)) {
            throw std::invalid_argument("adam_step: grad/param shape mismatch for " + p->name);
        }
        if (!p->grad.all_finite()) {
            throw std::runtime_error("adam_step: non-finite gradient for parameter " + p->name);
        }
    }
    const double lr = state.effective_lr();
    state.step += 1;
    const double b1 = state.config.beta1, b2 = state.config.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (Param* p : params) {
        auto mi = state.m.find(p->name);
        if (mi == state.m.end()) {
            mi = state.m.emplace(p->name, Tensor(p->value.shape())).first;
            state.v.emplace(p->name, Tensor(p->value.shape()));
        }
        Tensor& m = mi->second;
        Tensor& v = state.v.at(p->name);
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + state.config.eps);
        }
    }
}

}  // namespace flowave
