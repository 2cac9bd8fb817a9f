#include "flowave/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace flowave {

namespace {
constexpr double kDistillLogScaleClamp = 7.0;
}  // namespace

Var kl_gaussian_mean(Tape& t, Var mu_t, Var log_sigma_t, Var mu_s, Var log_sigma_s) {
    // log(s_t/s_s) + (s_s^2 + (mu_s - mu_t)^2) / (2 s_t^2) - 1/2, elementwise mean.
    Var d = t.sub(mu_s, mu_t);
    Var num = t.add(t.exp_(t.scale(log_sigma_s, 2.0)), t.mul(d, d));
    Var term = t.scale(t.mul(num, t.exp_(t.scale(log_sigma_t, -2.0))), 0.5);
    Var kl = t.offset(t.add(t.sub(log_sigma_t, log_sigma_s), term), -0.5);
    return t.mean(kl);
}

Var kl_regularized_mean(Tape& t, Var mu_t, Var log_sigma_t, Var mu_s, Var log_sigma_s,
                        double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("kl_regularized_mean: lambda must be >= 0");
    Var kl = kl_gaussian_mean(t, mu_t, log_sigma_t, mu_s, log_sigma_s);
    Var dls = t.sub(log_sigma_t, log_sigma_s);
    return t.add(kl, t.scale(t.mean(t.mul(dls, dls)), lambda));
}

Var frame_loss(Tape& t, Var x_hat, Var x_ref, const FrameLossConfig& cfg) {
    if (cfg.floor <= 0.0) throw std::invalid_argument("frame_loss: floor must be positive");
    Var pa = t.log_abs(t.clamp(t.stft_power(x_hat, cfg.fft_size, cfg.hop), cfg.floor, 1e300));
    Var pb = t.log_abs(t.clamp(t.stft_power(x_ref, cfg.fft_size, cfg.hop), cfg.floor, 1e300));
    return mse(t, pa, pb);
}

GaussianARModel::GaussianARModel(TeacherConfig cfg, const std::string& prefix, Rng& rng)
    : cfg_(cfg) {
    WaveNetConfig wc;
    wc.in_channels = 1;
    wc.cond_channels = cfg.cond_channels;
    wc.out_channels = 2;  // (mu, log sigma)
    wc.residual_channels = cfg.residual_channels;
    wc.n_layers = cfg.n_layers;
    wc.kernel_size = cfg.kernel_size;
    wc.dilation_cycle = cfg.dilation_cycle;
    wc.causal = true;
    wc.zero_init_output = true;  // fresh teacher is exactly N(0, 1)
    net_ = GatedWaveNet(wc, prefix, rng);
}

std::pair<Var, Var> GaussianARModel::conditionals(Tape& t, Var x, Var cond) const {
    Var out = net_.forward(t, t.shift_time_right(x), cond);
    Var mu = t.slice_channels(out, 0, 1);
    Var ls = t.clamp(t.slice_channels(out, 1, 2), std::log(cfg_.sigma_floor),
                     kDistillLogScaleClamp);
    return {mu, ls};
}

Var GaussianARModel::log_likelihood(Tape& t, const Tensor& x, const Tensor& cond,
                                    std::int64_t* clamp_count) const {
    if (x.rank() != 3 || x.dim(1) != 1) {
        throw std::invalid_argument("ar log_likelihood: x must be (B,1,T), got " + x.shape_str());
    }
    Var xv = t.constant(x);
    Var cv;
    if (cfg_.cond_channels > 0) {
        if (cond.rank() != 3 || cond.dim(1) != cfg_.cond_channels || cond.dim(2) != x.dim(2)) {
            throw std::invalid_argument("ar log_likelihood: condition shape mismatch, got " +
                                        cond.shape_str());
        }
        cv = t.constant(cond);
    }
    Var raw = net_.forward(t, t.shift_time_right(xv), cv);
    Var mu = t.slice_channels(raw, 0, 1);
    Var ls_raw = t.slice_channels(raw, 1, 2);
    const double lo = std::log(cfg_.sigma_floor);
    if (clamp_count) {
        std::int64_t n = 0;
        for (double v : t.value(ls_raw).vec()) {
            if (v < lo || v > kDistillLogScaleClamp) ++n;
        }
        *clamp_count = n;
    }
    Var ls = t.clamp(ls_raw, lo, kDistillLogScaleClamp);
    Var logp = gaussian_logpdf_sum(t, xv, mu, ls);
    return t.scale(logp, 1.0 / static_cast<double>(x.dim(0) * x.dim(2)));
}

Tensor GaussianARModel::sample(const Tensor& cond, Rng& rng, std::int64_t* pass_counter,
                               int max_timesteps) const {
    if (cond.rank() != 3 || cond.dim(1) != cfg_.cond_channels) {
        throw std::invalid_argument("ar sample: condition must be (B,cond,T), got " +
                                    cond.shape_str());
    }
    const int B = cond.dim(0);
    const int T = cond.dim(2);
    const auto w = net_.snapshot<double>();
    Tensor x({B, 1, T});
    Tensor xs({B, 1, T});
    const double lo = std::log(cfg_.sigma_floor);
    std::int64_t passes = 0;
    const int t_end = max_timesteps >= 0 ? std::min(max_timesteps, T) : T;
    for (int ti = 0; ti < t_end; ++ti) {
        for (int b = 0; b < B; ++b) {
            for (int u = 1; u <= ti; ++u) xs.at(b, 0, u) = x.at(b, 0, u - 1);
        }
        Tensor out = net_.eval<double>(w, xs, &cond);
        ++passes;
        for (int b = 0; b < B; ++b) {
            const double mu = out.at(b, 0, ti);
            double ls = out.at(b, 1, ti);
            ls = std::min(std::max(ls, lo), kDistillLogScaleClamp);
            x.at(b, 0, ti) = mu + std::exp(ls) * rng.normal();
        }
    }
    if (pass_counter) *pass_counter = passes;
    return x;
}

GaussianIAFStudent::GaussianIAFStudent(StudentConfig cfg, const std::string& prefix, Rng& rng)
    : cfg_(cfg) {
    for (int k = 0; k < cfg.n_stacks; ++k) {
        WaveNetConfig wc;
        wc.in_channels = 1;
        wc.cond_channels = cfg.cond_channels;
        wc.out_channels = 2;
        wc.residual_channels = cfg.residual_channels;
        wc.n_layers = cfg.layers_per_stack;
        wc.kernel_size = cfg.kernel_size;
        wc.causal = true;
        wc.zero_init_output = true;  // fresh student maps z -> z (output N(0, 1))
        stacks_.emplace_back(wc, prefix + ".stack" + std::to_string(k), rng);
    }
}

std::vector<Param*> GaussianIAFStudent::params() {
    std::vector<Param*> ps;
    for (auto& s : stacks_) {
        for (Param* p : s.params()) ps.push_back(p);
    }
    return ps;
}

GaussianIAFStudent::ParallelPass GaussianIAFStudent::transform(
    Tape& t, Var z, Var cond, std::int64_t* pass_counter) const {
    Var x = z;
    Var mu_tot = t.constant(Tensor(t.value(z).shape()));
    Var ls_tot = t.constant(Tensor(t.value(z).shape()));
    std::int64_t passes = 0;
    for (const auto& stack : stacks_) {
        Var out = stack.forward(t, t.shift_time_right(x), cond);
        ++passes;
        Var mu_k = t.slice_channels(out, 0, 1);
        Var ls_k = t.clamp(t.slice_channels(out, 1, 2), -kDistillLogScaleClamp,
                           kDistillLogScaleClamp);
        Var sig_k = t.exp_(ls_k);
        x = t.add(t.mul(x, sig_k), mu_k);
        // Composed output distribution: mu <- mu*sigma_k + mu_k, log sigma adds.
        mu_tot = t.add(t.mul(mu_tot, sig_k), mu_k);
        ls_tot = t.add(ls_tot, ls_k);
    }
    if (pass_counter) *pass_counter = passes;
    return {x, mu_tot, ls_tot};
}

DistillMode parse_distill_mode(const std::string& s) {
    if (s == "kl_only") return DistillMode::kKlOnly;
    if (s == "frame_only") return DistillMode::kFrameOnly;
    if (s == "both") return DistillMode::kBoth;
    throw std::invalid_argument("unknown distill mode: " + s);
}

std::string distill_mode_name(DistillMode m) {
    switch (m) {
        case DistillMode::kKlOnly: return "kl_only";
        case DistillMode::kFrameOnly: return "frame_only";
        case DistillMode::kBoth: return "both";
    }
    return "?";
}

DistillStepResult distill_loss(Tape& t, GaussianIAFStudent& student,
                               const GaussianARModel& teacher, const Tensor& cond,
                               const Tensor& x_ref, const DistillLossConfig& cfg, Rng& rng,
                               Var* loss_out) {
    if (x_ref.rank() != 3 || x_ref.dim(1) != 1) {
        throw std::invalid_argument("distill_loss: x_ref must be (B,1,T), got " +
                                    x_ref.shape_str());
    }
    Tensor z(x_ref.shape());
    for (auto& v : z.vec()) v = rng.normal();

    Var zv = t.constant(std::move(z));
    Var cv;
    if (student.config().cond_channels > 0) cv = t.constant(cond);
    auto pass = student.transform(t, zv, cv);
    auto [mu_t, ls_t] = teacher.conditionals(t, pass.x, cv);

    Var kl = kl_gaussian_mean(t, mu_t, ls_t, pass.mu, pass.log_sigma);
    Var kl_reg = kl_regularized_mean(t, mu_t, ls_t, pass.mu, pass.log_sigma, cfg.lambda);
    Var fr = frame_loss(t, pass.x, t.constant(x_ref), cfg.frame);

    Var loss;
    switch (cfg.mode) {
        case DistillMode::kKlOnly: loss = kl_reg; break;
        case DistillMode::kFrameOnly: loss = t.scale(fr, cfg.frame_weight); break;
        case DistillMode::kBoth:
            loss = t.add(kl_reg, t.scale(fr, cfg.frame_weight));
            break;
    }
    DistillStepResult r;
    r.loss = t.value(loss).vec()[0];
    r.kl = t.value(kl).vec()[0];
    r.frame_loss = t.value(fr).vec()[0];
    if (loss_out) *loss_out = loss;
    return r;
}

}  // namespace flowave
