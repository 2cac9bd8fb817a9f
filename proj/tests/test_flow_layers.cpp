#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "flowave/flow_layers.hpp"
#include "flowave/verify.hpp"

using namespace flowave;

namespace {

Tensor rand_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (auto& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("actnorm: hand example s=[2,0.5] has zero logdet") {
    ActNorm an(2, "an");
    an.scale().value[0] = 2.0;
    an.scale().value[1] = 0.5;
    an.bias().value[0] = 1.0;
    an.bias().value[1] = -1.0;
    an.set_identity_initialized();
    Tensor x({1, 2, 3});
    for (int i = 0; i < 6; ++i) x[i] = i;  // ch0: 0,1,2; ch1: 3,4,5
    Tape t;
    auto [y, ld] = an.forward(t, t.constant(x));
    // y = x*s + b
    CHECK(t.value(y).at(0, 0, 0) == doctest::Approx(1.0));
    CHECK(t.value(y).at(0, 0, 2) == doctest::Approx(5.0));
    CHECK(t.value(y).at(0, 1, 0) == doctest::Approx(0.5));
    CHECK(t.value(y).at(0, 1, 2) == doctest::Approx(1.5));
    // logdet = B*T*(log 2 + log 0.5) = 0
    CHECK(t.value(ld).vec()[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("actnorm: data-dependent init whitens the first batch per channel") {
    ActNorm an(3, "an");
    Rng rng(11);
    Tensor x({4, 3, 32});
    for (auto& v : x.vec()) v = 2.0 + 0.7 * rng.normal();
    Tape t;
    auto [y, ld] = an.forward(t, t.constant(x));
    const Tensor& yv = t.value(y);
    const double n = 4 * 32;
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int b = 0; b < 4; ++b)
            for (int ti = 0; ti < 32; ++ti) mean += yv.at(b, c, ti);
        mean /= n;
        for (int b = 0; b < 4; ++b)
            for (int ti = 0; ti < 32; ++ti) {
                const double d = yv.at(b, c, ti) - mean;
                var += d * d;
            }
        var /= n;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-10);
    }
    // logdet matches B*T*sum log|s| for the initialized scales
    double sum_log_s = 0.0;
    for (int c = 0; c < 3; ++c) sum_log_s += std::log(std::abs(an.scale().value[c]));
    CHECK(t.value(ld).vec()[0] == doctest::Approx(n * sum_log_s));
}

TEST_CASE("actnorm: constant channel rejected at init, naming the channel") {
    ActNorm an(2, "an");
    Tensor x({1, 2, 8});
    for (int ti = 0; ti < 8; ++ti) {
        x.at(0, 0, ti) = 0.3 * ti;
        x.at(0, 1, ti) = 5.0;  // zero variance
    }
    Tape t;
    CHECK_THROWS_WITH_AS(an.forward(t, t.constant(x)),
                         doctest::Contains("channel 1"), std::runtime_error);
}

TEST_CASE("actnorm: inverse undoes forward") {
    ActNorm an(2, "an");
    Rng rng(3);
    Tensor x = rand_tensor({2, 2, 10}, rng);
    Tape t;
    auto [y, ld] = an.forward(t, t.constant(x));
    Tensor back = t.value(y);
    an.inverse_inplace(back);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-12));
    }
}

TEST_CASE("coupling: zero-initialized layer is exactly the identity") {
    Rng rng(5);
    AffineCoupling cp(4, 0, 8, 2, 3, false, "cp", rng);
    Tensor x = rand_tensor({2, 4, 12}, rng);
    Tape t;
    auto [y, ld] = cp.forward(t, t.constant(x), Var{});
    const Tensor& yv = t.value(y);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(yv[i] == x[i]);
    CHECK(t.value(ld).vec()[0] == 0.0);
}

TEST_CASE("coupling: constant net output m=1, s=log2 gives hand-checkable affine") {
    Rng rng(6);
    AffineCoupling cp(2, 0, 4, 2, 3, false, "cp", rng);
    // Zero every weight, then set the output bias so the net emits
    // (m, s) = (1, log 2) at every timestep regardless of input.
    for (Param* p : cp.params()) {
        for (auto& v : p->value.vec()) v = 0.0;
    }
    for (Param* p : cp.params()) {
        if (p->name.find("out_b") != std::string::npos) {
            REQUIRE(p->value.size() == 2);
            p->value[0] = 1.0;           // m
            p->value[1] = std::log(2.0); // s
        }
    }
    const int B = 1, T = 4;
    Tensor x({B, 2, T});
    for (int ti = 0; ti < T; ++ti) {
        x.at(0, 0, ti) = 0.1 * ti;
        x.at(0, 1, ti) = 3.0 + ti;
    }
    Tape t;
    auto [y, ld] = cp.forward(t, t.constant(x), Var{});
    const Tensor& yv = t.value(y);
    for (int ti = 0; ti < T; ++ti) {
        CHECK(yv.at(0, 0, ti) == x.at(0, 0, ti));  // pass-through half
        // y2 = (x2 - m) * exp(-s) = (x2 - 1) / 2
        CHECK(yv.at(0, 1, ti) == doctest::Approx((x.at(0, 1, ti) - 1.0) / 2.0));
    }
    // logdet = -sum s = -B*T*log 2 over the transformed half
    CHECK(t.value(ld).vec()[0] == doctest::Approx(-T * std::log(2.0)));
}

TEST_CASE("coupling: odd channel count rejected") {
    Rng rng(7);
    CHECK_THROWS_AS(AffineCoupling(3, 0, 4, 2, 3, false, "cp", rng), std::invalid_argument);
}

TEST_CASE("coupling: inverse recovers input with randomized weights") {
    Rng rng(8);
    AffineCoupling cp(4, 2, 8, 2, 3, false, "cp", rng);
    for (Param* p : cp.params()) {
        for (auto& v : p->value.vec()) v = 0.3 * rng.normal();
    }
    Tensor x = rand_tensor({2, 4, 16}, rng);
    Tensor cond = rand_tensor({2, 2, 16}, rng);
    Tape t;
    auto [y, ld] = cp.forward(t, t.constant(x), t.constant(cond));
    const Tensor back = cp.inverse(cp.snapshot<double>(), t.value(y), cond);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-10));
    }
}

TEST_CASE("squeeze: even time indices fill the first channel half") {
    Tensor x({1, 1, 8});
    for (int i = 0; i < 8; ++i) x[i] = i;
    const Tensor y = squeeze_tensor(x);
    REQUIRE(y.dim(1) == 2);
    REQUIRE(y.dim(2) == 4);
    for (int ti = 0; ti < 4; ++ti) {
        CHECK(y.at(0, 0, ti) == 2 * ti);      // even samples
        CHECK(y.at(0, 1, ti) == 2 * ti + 1);  // odd samples
    }
    const Tensor back = unsqueeze_tensor(y);
    for (int i = 0; i < 8; ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("squeeze: odd time length rejected") {
    Tensor x({1, 1, 7});
    CHECK_THROWS_AS(squeeze_tensor(x), std::invalid_argument);
}

TEST_CASE("change_order: swaps halves and is an involution") {
    Tensor x({1, 4, 2});
    for (int i = 0; i < 8; ++i) x[i] = i;
    const Tensor y = FlowStep::change_order_tensor(x);
    CHECK(y.at(0, 0, 0) == x.at(0, 2, 0));
    CHECK(y.at(0, 3, 1) == x.at(0, 1, 1));
    const Tensor twice = FlowStep::change_order_tensor(y);
    for (int i = 0; i < 8; ++i) CHECK(twice[i] == x[i]);
}

TEST_CASE("factor-out: zero-init predictor scores the standard normal") {
    Rng rng(9);
    FactorOutGaussian fo(4, 4, 2, 3, false, "fo", rng);
    Tensor h = rand_tensor({1, 4, 6}, rng);
    Tape t;
    auto [kept, logp] = fo.forward(t, t.constant(h));
    REQUIRE(t.value(kept).dim(1) == 2);
    // predictor emits (mu, log sigma) = (0, 0), so logp is the standard
    // normal density of the second half: sum(-0.5 log(2 pi) - 0.5 x^2)
    double expect = 0.0;
    for (int c = 2; c < 4; ++c) {
        for (int ti = 0; ti < 6; ++ti) {
            expect += -0.5 * std::log(2.0 * M_PI) - 0.5 * h.at(0, c, ti) * h.at(0, c, ti);
        }
    }
    CHECK(t.value(logp).vec()[0] == doctest::Approx(expect));
}

TEST_CASE("factor-out: temperature 0 sampling returns mu exactly") {
    Rng rng(10);
    FactorOutGaussian fo(4, 4, 2, 3, false, "fo", rng);
    for (Param* p : fo.params()) {
        for (auto& v : p->value.vec()) v = 0.2 * rng.normal();
    }
    Tensor retained = rand_tensor({1, 2, 6}, rng);
    const auto w = fo.snapshot<double>();
    Rng r1(100), r2(200);
    const Tensor a = fo.sample_factored(w, retained, 0.0, r1);
    const Tensor b = fo.sample_factored(w, retained, 0.0, r2);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("flow step: forward/inverse round trip after data init") {
    Rng rng(12);
    FlowStep step(4, 2, 8, 2, 3, false, "fs", rng);
    for (Param* p : step.coupling.params()) {
        for (auto& v : p->value.vec()) v = 0.2 * rng.normal();
    }
    Tensor x = rand_tensor({2, 4, 16}, rng);
    Tensor cond = rand_tensor({2, 2, 16}, rng);
    Tape t;
    auto [y, ld] = step.forward(t, t.constant(x), t.constant(cond));
    const Tensor back = step.inverse(step.coupling.snapshot<double>(), t.value(y), cond);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-10));
    }
}

TEST_CASE("finite-difference Jacobian log-det oracle (actnorm, coupling, stack)") {
    for (const auto& r : verify_jacobian(2024)) {
        INFO(r.name);
        CHECK(r.pass);
    }
}
