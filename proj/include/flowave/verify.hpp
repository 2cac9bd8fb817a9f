#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowave/flow_model.hpp"

namespace flowave {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Invertibility: inverse(forward(x)) reconstruction error over random
/// (input, condition, seed) triples on the given model.
std::vector<CheckResult> verify_invertibility(FlowaveModel& model, std::uint64_t seed,
                                              int n_trials = 100, int chunk_len = 1024);

/// Analytic log-det vs log|det| of a dense finite-difference Jacobian on
/// tiny (<= 64 element) configurations: ActNorm, coupling, 2-block stack.
std::vector<CheckResult> verify_jacobian(std::uint64_t seed);

/// Central finite-difference gradient comparison for every trainable layer
/// family on tiny shapes.
std::vector<CheckResult> verify_gradients(std::uint64_t seed);

/// Causal nets must show zero future-dependence under impulse perturbation;
/// non-causal nets must show dependence inside the receptive field.
std::vector<CheckResult> verify_causality(std::uint64_t seed);

/// Round trips: latent -> decode -> likelihood latent recovery, checkpoint
/// byte-identity (plus corrupt rejection), WAV byte-identity.
std::vector<CheckResult> verify_roundtrip(FlowaveModel& model, std::uint64_t seed);

/// scope: all | invertibility | jacobian | gradients | causality | roundtrip
std::vector<CheckResult> run_verify(const std::string& scope, FlowaveModel& model,
                                    std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);
std::string format_report(const std::vector<CheckResult>& results);

}  // namespace flowave
