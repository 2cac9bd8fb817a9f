#include "flowave/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "flowave/audio.hpp"
#include "flowave/baselines.hpp"
#include "flowave/checkpoint.hpp"
#include "flowave/trainer.hpp"

namespace flowave {

namespace {

Tensor random_uniform(const std::vector<int>& shape, Rng& rng, double lo, double hi) {
    Tensor t(shape);
    for (auto& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

void randomize_params(std::vector<Param*> params, Rng& rng, double stddev) {
    for (Param* p : params) {
        for (auto& v : p->value.vec()) v = stddev * rng.normal();
    }
}

// log|det| of a dense matrix via Gaussian elimination with partial pivoting.
double log_abs_det(std::vector<double> a, int n) {
    double logdet = 0.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r) {
            if (std::abs(a[static_cast<std::size_t>(r) * n + col]) >
                std::abs(a[static_cast<std::size_t>(piv) * n + col])) {
                piv = r;
            }
        }
        if (piv != col) {
            for (int c = 0; c < n; ++c) {
                std::swap(a[static_cast<std::size_t>(col) * n + c],
                          a[static_cast<std::size_t>(piv) * n + c]);
            }
        }
        const double d = a[static_cast<std::size_t>(col) * n + col];
        if (d == 0.0) return -std::numeric_limits<double>::infinity();
        logdet += std::log(std::abs(d));
        for (int r = col + 1; r < n; ++r) {
            const double f = a[static_cast<std::size_t>(r) * n + col] / d;
            for (int c = col; c < n; ++c) {
                a[static_cast<std::size_t>(r) * n + c] -=
                    f * a[static_cast<std::size_t>(col) * n + c];
            }
        }
    }
    return logdet;
}

// Dense FD Jacobian of fn: R^n -> R^n around x, then log|det| comparison.
double fd_logdet(const Tensor& x, const std::function<std::vector<double>(const Tensor&)>& fn,
                 double h = 1e-5) {
    const int n = static_cast<int>(x.size());
    std::vector<double> jac(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
        Tensor xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const std::vector<double> fp = fn(xp);
        const std::vector<double> fm = fn(xm);
        for (int i = 0; i < n; ++i) {
            jac[static_cast<std::size_t>(i) * n + j] = (fp[static_cast<std::size_t>(i)] -
                                                        fm[static_cast<std::size_t>(i)]) /
                                                       (2.0 * h);
        }
    }
    return log_abs_det(std::move(jac), n);
}

// Central FD gradient comparison; returns max relative error over all
// parameter elements.
double fd_grad_max_err(std::vector<Param*> params,
                       const std::function<Var(Tape&)>& build, double h = 1e-5) {
    Tape t0;
    Var loss = build(t0);
    for (Param* p : params) p->zero_grad();
    t0.backward(loss);
    std::vector<Tensor> analytic;
    for (Param* p : params) analytic.push_back(p->grad);

    double max_err = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + h;
            Tape tp;
            const double fp = tp.value(build(tp)).vec()[0];
            p->value[i] = orig - h;
            Tape tm;
            const double fm = tm.value(build(tm)).vec()[0];
            p->value[i] = orig;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[pi][i];
            const double err =
                std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1.0});
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

std::string temp_path(const std::string& stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        if (!r.pass) return false;
    }
    return true;
}

std::string format_report(const std::vector<CheckResult>& results) {
    std::ostringstream ss;
    for (const auto& r : results) {
        char line[256];
        std::snprintf(line, sizeof line, "%-52s measured=%-12.4g tol=%-10.3g %s\n",
                      r.name.c_str(), r.measured, r.tolerance, r.pass ? "PASS" : "FAIL");
        ss << line;
    }
    return ss.str();
}

std::vector<CheckResult> verify_invertibility(FlowaveModel& model, std::uint64_t seed,
                                              int n_trials, int chunk_len) {
    const ModelConfig& cfg = model.config();
    double max_err = 0.0;
    for (int trial = 0; trial < n_trials; ++trial) {
        Rng rng(Rng::mix(seed, 10'000 + static_cast<std::uint64_t>(trial)));
        Tensor x = random_uniform({1, 1, chunk_len}, rng, -1.0, 1.0);
        Tensor cond = random_uniform({1, cfg.cond_channels, chunk_len}, rng, -3.0, 0.0);
        Tape t;
        const LikelihoodResult res = model.log_likelihood(t, x, cond);
        const Tensor* zf = res.z_factored.size() > 0 ? &res.z_factored : nullptr;
        const Tensor x_rec = model.decode<double>(res.z_final, zf, cond);
        for (std::int64_t i = 0; i < x.size(); ++i) {
            max_err = std::max(max_err, std::abs(x[i] - x_rec[i]));
        }
    }
    CheckResult r{"invertibility: max |x - f_inv(f(x))| over " + std::to_string(n_trials) +
                      " trials",
                  max_err, 1e-6, max_err < 1e-6};
    return {r};
}

std::vector<CheckResult> verify_jacobian(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const double tol = 1e-4;

    {  // ActNorm on (1,2,4): 8 elements
        ActNorm an(2, "jac.actnorm");
        Rng rng(Rng::mix(seed, 21));
        Tensor x0 = random_uniform({1, 2, 4}, rng, -1.0, 1.0);
        {
            Tape t;
            an.forward(t, t.constant(x0));  // data-dependent init
        }
        Tape t;
        auto [y, ld] = an.forward(t, t.constant(x0));
        const double analytic = t.value(ld).vec()[0];
        auto fn = [&](const Tensor& x) {
            Tape tt;
            auto [yy, l] = an.forward(tt, tt.constant(x));
            return tt.value(yy).vec();
        };
        const double fd = fd_logdet(x0, fn);
        const double err = std::abs(analytic - fd);
        out.push_back({"jacobian: actnorm (1,2,4)", err, tol, err < tol});
    }

    {  // coupling on (1,2,8): 16 elements, randomized weights
        Rng rng(Rng::mix(seed, 22));
        AffineCoupling cp(2, 0, 4, 2, 3, false, "jac.coupling", rng);
        randomize_params(cp.params(), rng, 0.3);
        Tensor x0 = random_uniform({1, 2, 8}, rng, -1.0, 1.0);
        Tape t;
        auto [y, ld] = cp.forward(t, t.constant(x0), Var{});
        const double analytic = t.value(ld).vec()[0];
        auto fn = [&](const Tensor& x) {
            Tape tt;
            auto [yy, l] = cp.forward(tt, tt.constant(x), Var{});
            return tt.value(yy).vec();
        };
        const double fd = fd_logdet(x0, fn);
        const double err = std::abs(analytic - fd);
        out.push_back({"jacobian: affine coupling (1,2,8)", err, tol, err < tol});
    }

    {  // 2-block stack with factor-out on (1,1,16): 16 elements
        ModelConfig mc;
        mc.n_blocks = 2;
        mc.n_flows = 2;
        mc.residual_channels = 4;
        mc.coupling_layers = 2;
        mc.kernel_size = 3;
        mc.factor_out_block = 1;
        mc.cond_channels = 2;
        Rng rng(Rng::mix(seed, 23));
        FlowaveModel model(mc, rng);
        randomize_params(model.params(), rng, 0.2);
        Tensor x0 = random_uniform({1, 1, 16}, rng, -1.0, 1.0);
        Tensor cond = random_uniform({1, 2, 16}, rng, -1.0, 1.0);
        {
            Tape t;
            model.log_likelihood(t, x0, cond);  // actnorm data init
        }
        Tape t;
        const LikelihoodResult res = model.log_likelihood(t, x0, cond);
        const double analytic = res.total_logdet;
        auto fn = [&](const Tensor& x) {
            Tape tt;
            const LikelihoodResult r = model.log_likelihood(tt, x, cond);
            std::vector<double> z = r.z_final.vec();
            for (double v : r.z_factored.vec()) z.push_back(v);
            return z;
        };
        const double fd = fd_logdet(x0, fn);
        const double err = std::abs(analytic - fd);
        out.push_back({"jacobian: 2-block stack with factor-out (1,1,16)", err, tol, err < tol});
    }
    return out;
}

std::vector<CheckResult> verify_gradients(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const double tol = 1e-4;
    auto add = [&](const std::string& name, double err) {
        out.push_back({"gradients: " + name, err, tol, err < tol});
    };

    {  // ActNorm
        ActNorm an(2, "gc.actnorm");
        Rng rng(Rng::mix(seed, 31));
        Tensor x = random_uniform({2, 2, 6}, rng, -1.0, 1.0);
        {
            Tape t;
            an.forward(t, t.constant(x));
        }
        add("actnorm", fd_grad_max_err(an.params(), [&](Tape& t) {
                auto [y, ld] = an.forward(t, t.constant(x));
                return t.add(t.sum(t.mul(y, y)), ld);
            }));
    }

    {  // coupling (conditioned, non-causal) through (y, logdet)
        Rng rng(Rng::mix(seed, 32));
        AffineCoupling cp(2, 2, 4, 2, 3, false, "gc.coupling", rng);
        randomize_params(cp.params(), rng, 0.3);
        Tensor x = random_uniform({1, 2, 8}, rng, -1.0, 1.0);
        Tensor cond = random_uniform({1, 2, 8}, rng, -1.0, 1.0);
        add("affine coupling", fd_grad_max_err(cp.params(), [&](Tape& t) {
                auto [y, ld] = cp.forward(t, t.constant(x), t.constant(cond));
                return t.add(t.sum(t.mul(y, y)), ld);
            }));
    }

    {  // factor-out predictor through the factored log-likelihood
        Rng rng(Rng::mix(seed, 33));
        FactorOutGaussian fo(4, 4, 2, 3, false, "gc.factor", rng);
        randomize_params(fo.params(), rng, 0.3);
        Tensor h = random_uniform({1, 4, 6}, rng, -1.0, 1.0);
        add("factor-out predictor", fd_grad_max_err(fo.params(), [&](Tape& t) {
                auto [kept, logp] = fo.forward(t, t.constant(h));
                return logp;
            }));
    }

    {  // Gaussian AR teacher likelihood
        Rng rng(Rng::mix(seed, 34));
        TeacherConfig tc;
        tc.cond_channels = 2;
        tc.residual_channels = 4;
        tc.n_layers = 3;
        tc.dilation_cycle = 3;
        GaussianARModel ar(tc, "gc.ar", rng);
        randomize_params(ar.params(), rng, 0.3);
        Tensor x = random_uniform({1, 1, 10}, rng, -1.0, 1.0);
        Tensor cond = random_uniform({1, 2, 10}, rng, -1.0, 1.0);
        add("gaussian AR likelihood", fd_grad_max_err(ar.params(), [&](Tape& t) {
                return ar.log_likelihood(t, x, cond);
            }));
    }

    {  // IAF student through the full distillation objective
        Rng rng(Rng::mix(seed, 35));
        TeacherConfig tc;
        tc.cond_channels = 2;
        tc.residual_channels = 4;
        tc.n_layers = 2;
        tc.dilation_cycle = 2;
        GaussianARModel ar(tc, "gc.ar2", rng);
        randomize_params(ar.params(), rng, 0.3);
        StudentConfig sc;
        sc.cond_channels = 2;
        sc.residual_channels = 4;
        sc.n_stacks = 2;
        sc.layers_per_stack = 2;
        GaussianIAFStudent st(sc, "gc.student", rng);
        randomize_params(st.params(), rng, 0.3);
        Tensor x = random_uniform({1, 1, 8}, rng, -0.5, 0.5);
        Tensor cond = random_uniform({1, 2, 8}, rng, -1.0, 1.0);
        DistillLossConfig dc;
        dc.frame.fft_size = 8;
        dc.frame.hop = 4;
        add("IAF student distillation loss", fd_grad_max_err(st.params(), [&](Tape& t) {
                Rng zr(Rng::mix(seed, 36));  // same noise every rebuild
                Var loss;
                distill_loss(t, st, ar, cond, x, dc, zr, &loss);
                return loss;
            }));
    }
    return out;
}

std::vector<CheckResult> verify_causality(std::uint64_t seed) {
    std::vector<CheckResult> out;
    const int T = 32, t0 = 16;
    auto probe = [&](bool causal, double& past_dep, double& future_dep) {
        WaveNetConfig wc;
        wc.in_channels = 1;
        wc.out_channels = 1;
        wc.residual_channels = 8;
        wc.n_layers = 3;
        wc.kernel_size = causal ? 2 : 3;
        wc.causal = causal;
        wc.zero_init_output = false;
        Rng rng(Rng::mix(seed, causal ? 41 : 42));
        GatedWaveNet net(wc, "causality", rng);
        const auto w = net.snapshot<double>();
        Tensor x({1, 1, T});
        Rng xr(Rng::mix(seed, 43));
        for (auto& v : x.vec()) v = xr.normal();
        const Tensor y0 = net.eval<double>(w, x, nullptr);
        Tensor xp = x;
        xp.at(0, 0, t0) += 1.0;  // impulse perturbation
        const Tensor y1 = net.eval<double>(w, xp, nullptr);
        past_dep = 0.0;
        future_dep = 0.0;
        for (int ti = 0; ti < T; ++ti) {
            const double d = std::abs(y1.at(0, 0, ti) - y0.at(0, 0, ti));
            if (ti < t0) {
                past_dep = std::max(past_dep, d);
            } else {
                future_dep = std::max(future_dep, d);
            }
        }
    };
    double past, future;
    probe(true, past, future);
    out.push_back({"causality: causal net, impulse leakage into past outputs", past, 0.0,
                   past == 0.0});
    out.push_back({"causality: causal net, dependence at/after impulse", future, 0.0,
                   future > 0.0});
    probe(false, past, future);
    out.push_back({"causality: non-causal net, dependence before impulse", past, 0.0,
                   past > 0.0});
    return out;
}

std::vector<CheckResult> verify_roundtrip(FlowaveModel& model, std::uint64_t seed) {
    std::vector<CheckResult> out;
    const ModelConfig& cfg = model.config();

    {  // latent recovery: decode then re-encode
        const int T = 512;
        Rng rng(Rng::mix(seed, 51));
        Tensor cond = random_uniform({1, cfg.cond_channels, T}, rng, -3.0, 0.0);
        {   // make sure actnorms are initialized before using the inverse path
            Tensor x = random_uniform({1, 1, T}, rng, -1.0, 1.0);
            Tape t;
            model.log_likelihood(t, x, cond);
        }
        const int t_final = static_cast<int>(T / model.config().squeeze_factor());
        Tensor z({1, model.channels_per_block().back(), t_final});
        for (auto& v : z.vec()) v = 0.5 * rng.normal();
        Tensor zf;
        const Tensor* zfp = nullptr;
        if (cfg.factor_out_block > 0) {
            const std::int64_t half_T =
                T / (std::int64_t(1) << cfg.factor_out_block);
            const int cf = (1 << cfg.factor_out_block) / 2;
            zf = Tensor({1, cf, static_cast<int>(half_T)});
            for (auto& v : zf.vec()) v = 0.5 * rng.normal();
            zfp = &zf;
        }
        const Tensor x = model.decode<double>(z, zfp, cond);
        Tape t;
        const LikelihoodResult res = model.log_likelihood(t, x, cond);
        double err = 0.0;
        for (std::int64_t i = 0; i < z.size(); ++i) {
            err = std::max(err, std::abs(z[i] - res.z_final[i]));
        }
        if (zfp) {
            for (std::int64_t i = 0; i < zf.size(); ++i) {
                err = std::max(err, std::abs(zf[i] - res.z_factored[i]));
            }
        }
        out.push_back({"roundtrip: latent -> decode -> re-encoded latent", err, 1e-6,
                       err < 1e-6});
    }

    {  // checkpoint byte-identity and corruption rejection
        AdamState adam;
        Checkpoint c = make_flow_checkpoint(model, adam, 0);
        const std::string p1 = temp_path("flowave_verify_ck1.bin");
        const std::string p2 = temp_path("flowave_verify_ck2.bin");
        save_checkpoint(c, p1);
        Checkpoint c2 = load_checkpoint(p1);
        save_checkpoint(c2, p2);
        std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
        std::ostringstream b1, b2;
        b1 << f1.rdbuf();
        b2 << f2.rdbuf();
        const bool identical = b1.str() == b2.str();
        out.push_back({"roundtrip: checkpoint save->load->save byte-identical",
                       identical ? 0.0 : 1.0, 0.0, identical});

        std::string corrupt = b1.str();
        corrupt[corrupt.size() / 2] = static_cast<char>(corrupt[corrupt.size() / 2] ^ 0x01);
        const std::string p3 = temp_path("flowave_verify_ck3.bin");
        std::ofstream(p3, std::ios::binary).write(corrupt.data(),
                                                  static_cast<std::streamsize>(corrupt.size()));
        bool rejected = false;
        try {
            load_checkpoint(p3);
        } catch (const std::exception&) {
            rejected = true;
        }
        out.push_back({"roundtrip: flipped-byte checkpoint rejected", rejected ? 0.0 : 1.0, 0.0,
                       rejected});
        std::filesystem::remove(p1);
        std::filesystem::remove(p2);
        std::filesystem::remove(p3);
    }

    {  // WAV byte-exact round trip
        Rng rng(Rng::mix(seed, 52));
        WavClip clip;
        clip.sample_rate = 4000;
        clip.samples.resize(1000);
        for (auto& s : clip.samples) {
            s = static_cast<std::int16_t>(rng.uniform(-32768.0, 32767.0));
        }
        const std::string p = temp_path("flowave_verify_rt.wav");
        write_wav(clip, p);
        const WavClip back = load_wav(p);
        const bool same = back.sample_rate == clip.sample_rate && back.samples == clip.samples;
        out.push_back({"roundtrip: WAV write -> read bit-exact", same ? 0.0 : 1.0, 0.0, same});
        std::filesystem::remove(p);
    }
    return out;
}

std::vector<CheckResult> run_verify(const std::string& scope, FlowaveModel& model,
                                    std::uint64_t seed) {
    std::vector<CheckResult> out;
    auto want = [&](const char* s) { return scope == "all" || scope == s; };
    if (!(want("invertibility") || want("jacobian") || want("gradients") ||
          want("causality") || want("roundtrip"))) {
        throw std::invalid_argument("verify: unknown scope '" + scope + "'");
    }
    if (want("invertibility")) {
        for (auto& r : verify_invertibility(model, seed)) out.push_back(r);
    }
    if (want("jacobian")) {
        for (auto& r : verify_jacobian(seed)) out.push_back(r);
    }
    if (want("gradients")) {
        for (auto& r : verify_gradients(seed)) out.push_back(r);
    }
    if (want("causality")) {
        for (auto& r : verify_causality(seed)) out.push_back(r);
    }
    if (want("roundtrip")) {
        for (auto& r : verify_roundtrip(model, seed)) out.push_back(r);
    }
    return out;
}

}  // namespace flowave
