#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "flowave/adam.hpp"
#include "flowave/audio.hpp"
#include "flowave/baselines.hpp"
#include "flowave/checkpoint.hpp"
#include "flowave/flow_model.hpp"

namespace flowave {

/// Append-only CSV metric log with a header row; steps must be strictly
/// increasing. The extras column holds semicolon-separated key=value pairs.
class MetricLog {
public:
    MetricLog() = default;
    /// Empty path disables file output (rows are still validated).
    explicit MetricLog(const std::string& path, bool append = false);

    void log(std::int64_t step, double wall_ms, double loss, double nats_per_dim, double lr,
             const std::string& extras = "");
    void note(const std::string& message);  // comment line, e.g. trim warnings

    static constexpr const char* kHeader = "step,wall_ms,loss,nats_per_dim,lr,extras";

private:
    std::ofstream out_;
    std::int64_t last_step_ = -1;
};

struct TrainConfig {
    ModelConfig model;
    MelConfig mel;
    CorpusConfig corpus;
    AdamConfig adam;
    TeacherConfig teacher;
    StudentConfig student;
    DistillLossConfig distill;
    int batch = 2;
    int chunk_len = 4096;
    int steps = 2000;
    int checkpoint_every = 500;
    int eval_every = 500;
    std::uint64_t seed = 7;
    std::string checkpoint_path;  // empty = no checkpointing
    std::string log_path;         // empty = no metric file
};

struct TrainResult {
    double initial_eval = 0.0;  // held-out nats/dim (flow, ar) or loss (distill)
    double final_eval = 0.0;
    double final_kl = 0.0;     // distill only: unregularized test KL
    double final_frame = 0.0;  // distill only: test frame loss
    bool nan_seen = false;
    std::int64_t steps_run = 0;
};

/// Maximum-likelihood flow training on the synthetic corpus. Deterministic
/// given (config, seed); resuming from a checkpoint is bit-compatible with an
/// uninterrupted run. resume_from, when set, must be a "flow" checkpoint.
TrainResult train_flow(const TrainConfig& cfg,
                       const std::optional<std::string>& resume_from = {},
                       FlowaveModel* model_out = nullptr);

/// Teacher-forced maximum likelihood for the Gaussian autoregressive model.
TrainResult train_ar(const TrainConfig& cfg,
                     const std::optional<std::string>& resume_from = {},
                     GaussianARModel* model_out = nullptr);

/// Probability-density distillation of an IAF student against a frozen
/// teacher checkpoint.
TrainResult train_distill(const TrainConfig& cfg, const std::string& teacher_checkpoint,
                          GaussianIAFStudent* student_out = nullptr);

// --- Checkpoint bindings -------------------------------------------------

Checkpoint make_flow_checkpoint(FlowaveModel& model, const AdamState& adam,
                                std::int64_t step);
void restore_flow_checkpoint(const Checkpoint& ckpt, FlowaveModel& model, AdamState* adam);
ModelConfig model_config_from_checkpoint(const Checkpoint& ckpt);

Checkpoint make_ar_checkpoint(GaussianARModel& model, const AdamState& adam, std::int64_t step);
void restore_ar_checkpoint(const Checkpoint& ckpt, GaussianARModel& model, AdamState* adam);
TeacherConfig teacher_config_from_checkpoint(const Checkpoint& ckpt);

Checkpoint make_student_checkpoint(GaussianIAFStudent& model, const AdamState& adam,
                                   std::int64_t step);
void restore_student_checkpoint(const Checkpoint& ckpt, GaussianIAFStudent& model,
                                AdamState* adam);
StudentConfig student_config_from_checkpoint(const Checkpoint& ckpt);

/// Held-out nats/dim of the flow model on fixed test chunks.
double eval_flow(FlowaveModel& model, const Corpus& corpus, const MelConfig& mel,
                 int chunk_len, int batch);

/// Held-out mean negative log likelihood per dimension of the AR model.
double eval_ar(const GaussianARModel& model, const Corpus& corpus, const MelConfig& mel,
               int chunk_len, int batch);

/// Deterministic test KL and frame loss of a student against a teacher.
void eval_distill(GaussianIAFStudent& student, const GaussianARModel& teacher,
                  const Corpus& corpus, const MelConfig& mel, const DistillLossConfig& dcfg,
                  int chunk_len, int batch, std::uint64_t seed, double* kl_out,
                  double* frame_out);

/// Fixed evaluation batch: the leading chunk of clips [offset, offset+batch),
/// cycled over the clip list.
Tensor eval_batch(const std::vector<SynthClip>& clips, int batch, int chunk_len,
                  int offset = 0);

}  // namespace flowave
