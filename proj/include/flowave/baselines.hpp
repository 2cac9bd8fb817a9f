#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowave/autograd.hpp"
#include "flowave/rng.hpp"
#include "flowave/wavenet.hpp"

namespace flowave {

inline constexpr double kSigmaFloorLog = -11.512925464970229;  // log(1e-5)

/// Closed-form KL(N(mu_s, sigma_s^2) || N(mu_t, sigma_t^2)).
inline double kl_gaussian(double mu_t, double sigma_t, double mu_s, double sigma_s) {
    if (sigma_t <= 0.0 || sigma_s <= 0.0) {
        throw std::invalid_argument("kl_gaussian: non-positive sigma");
    }
    const double d = mu_s - mu_t;
    return std::log(sigma_t / sigma_s) +
           (sigma_s * sigma_s + d * d) / (2.0 * sigma_t * sigma_t) - 0.5;
}

/// KL plus the log-sigma regularizer lambda * (log sigma_t - log sigma_s)^2.
inline double kl_regularized(double mu_t, double sigma_t, double mu_s, double sigma_s,
                             double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("kl_regularized: lambda must be >= 0");
    const double dls = std::log(sigma_t) - std::log(sigma_s);
    return kl_gaussian(mu_t, sigma_t, mu_s, sigma_s) + lambda * dls * dls;
}

/// Tape versions operating elementwise on (mu, log sigma) tensors; result is
/// the mean over all elements.
Var kl_gaussian_mean(Tape& t, Var mu_t, Var log_sigma_t, Var mu_s, Var log_sigma_s);
Var kl_regularized_mean(Tape& t, Var mu_t, Var log_sigma_t, Var mu_s, Var log_sigma_s,
                        double lambda);

struct FrameLossConfig {
    int fft_size = 256;
    int hop = 64;
    double floor = 1e-5;  // magnitude-squared floor before the log
};

/// Mean squared difference of log-power STFT frames.
Var frame_loss(Tape& t, Var x_hat, Var x_ref, const FrameLossConfig& cfg);

struct TeacherConfig {
    int cond_channels = 16;
    int residual_channels = 32;
    int n_layers = 8;
    int dilation_cycle = 4;
    int kernel_size = 2;
    double sigma_floor = 1e-5;
};

/// Gaussian autoregressive WaveNet: per-timestep (mu_t, log sigma_t) from
/// x_{<t} and the condition. Strictly causal via a one-step input shift.
class GaussianARModel {
public:
    GaussianARModel() = default;
    GaussianARModel(TeacherConfig cfg, const std::string& prefix, Rng& rng);

    const TeacherConfig& config() const { return cfg_; }
    std::vector<Param*> params() { return net_.params(); }
    GatedWaveNet& net() { return net_; }

    /// (mu, log_sigma) for every timestep in one teacher-forced pass.
    std::pair<Var, Var> conditionals(Tape& t, Var x, Var cond) const;

    /// Mean over batch/time of log N(x_t; mu_t, sigma_t^2). Sub-floor sigmas
    /// are clamped; *clamp_count (optional) reports how many.
    Var log_likelihood(Tape& t, const Tensor& x, const Tensor& cond,
                       std::int64_t* clamp_count = nullptr) const;

    /// Ancestral sampling: one full network evaluation per timestep.
    /// pass_counter, when given, receives the number of sequential passes.
    /// max_timesteps >= 0 stops early (benchmarking aid); later samples stay 0.
    Tensor sample(const Tensor& cond, Rng& rng, std::int64_t* pass_counter = nullptr,
                  int max_timesteps = -1) const;

private:
    TeacherConfig cfg_;
    GatedWaveNet net_;
};

struct StudentConfig {
    int cond_channels = 16;
    int residual_channels = 32;
    int n_stacks = 2;
    int layers_per_stack = 4;
    int kernel_size = 2;
};

/// Gaussian IAF student: each stack is a causal WaveNet reading the running
/// sequence's strict past and applying x_t = z_t * sigma_t + mu_t. Sampling
/// is one parallel pass per stack.
class GaussianIAFStudent {
public:
    GaussianIAFStudent() = default;
    GaussianIAFStudent(StudentConfig cfg, const std::string& prefix, Rng& rng);

    const StudentConfig& config() const { return cfg_; }
    std::vector<Param*> params();

    struct ParallelPass {
        Var x;          // transformed sample
        Var mu;         // composed per-timestep output mean
        Var log_sigma;  // composed per-timestep output log std
    };

    /// Transforms noise z (B,1,T) in n_stacks parallel passes and tracks the
    /// composed per-timestep output distribution.
    ParallelPass transform(Tape& t, Var z, Var cond,
                           std::int64_t* pass_counter = nullptr) const;

    std::vector<GatedWaveNet>& stacks() { return stacks_; }

private:
    StudentConfig cfg_;
    std::vector<GatedWaveNet> stacks_;
};

enum class DistillMode { kKlOnly, kFrameOnly, kBoth };

DistillMode parse_distill_mode(const std::string& s);
std::string distill_mode_name(DistillMode m);

struct DistillLossConfig {
    DistillMode mode = DistillMode::kBoth;
    double lambda = 4.0;  // log-sigma regularizer weight
    double frame_weight = 1.0;
    FrameLossConfig frame;
};

struct DistillStepResult {
    double loss = 0.0;
    double kl = 0.0;          // unregularized closed-form KL (diagnostic)
    double frame_loss = 0.0;  // diagnostic
};

/// One distillation step: draw z, run the student in parallel, score its
/// sample under the frozen teacher, combine losses per mode, and leave the
/// gradients on the student parameters (caller applies the optimizer).
DistillStepResult distill_loss(Tape& t, GaussianIAFStudent& student,
                               const GaussianARModel& teacher, const Tensor& cond,
                               const Tensor& x_ref, const DistillLossConfig& cfg, Rng& rng,
                               Var* loss_out);

}  // namespace flowave
