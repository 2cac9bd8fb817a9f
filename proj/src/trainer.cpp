#include "flowave/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flowave {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

// Seed-stream tags so every consumer of the run seed draws from an
// independent deterministic stream.
constexpr std::uint64_t kTagModelInit = 1;
constexpr std::uint64_t kTagTeacherInit = 2;
constexpr std::uint64_t kTagStudentInit = 3;
constexpr std::uint64_t kTagFlowStep = 1000;
constexpr std::uint64_t kTagArStep = 2'000'000;
constexpr std::uint64_t kTagDistillStep = 3'000'000;
constexpr std::uint64_t kTagEval = 99;

void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

}  // namespace

MetricLog::MetricLog(const std::string& path, bool append) {
    if (path.empty()) return;
    out_.open(path, append ? std::ios::app : std::ios::out);
    if (!out_) throw std::runtime_error("metric log: cannot open " + path);
    if (!append) out_ << kHeader << '\n';
}

void MetricLog::log(std::int64_t step, double wall_ms, double loss, double nats_per_dim,
                    double lr, const std::string& extras) {
    if (step <= last_step_) {
        throw std::runtime_error("metric log: step " + std::to_string(step) +
                                 " not greater than previous step " +
                                 std::to_string(last_step_));
    }
    last_step_ = step;
    if (!out_.is_open()) return;
    out_ << step << ',' << wall_ms << ',' << loss << ',' << nats_per_dim << ',' << lr << ','
         << extras << '\n';
    out_.flush();
}

void MetricLog::note(const std::string& message) {
    if (out_.is_open()) {
        out_ << "# " << message << '\n';
        out_.flush();
    }
}

// --- Checkpoint bindings -------------------------------------------------

namespace {

void put_model_config(Checkpoint& c, const ModelConfig& m) {
    c.set("model.n_blocks", std::to_string(m.n_blocks));
    c.set("model.n_flows", std::to_string(m.n_flows));
    c.set("model.residual_channels", std::to_string(m.residual_channels));
    c.set("model.coupling_layers", std::to_string(m.coupling_layers));
    c.set("model.kernel_size", std::to_string(m.kernel_size));
    c.set("model.factor_out_block", std::to_string(m.factor_out_block));
    c.set("model.causal", m.causal ? "1" : "0");
    c.set("model.cond_channels", std::to_string(m.cond_channels));
    c.set("model.hop", std::to_string(m.hop));
    c.set("model.default_temperature", fmt_double(m.default_temperature));
}

}  // namespace

ModelConfig model_config_from_checkpoint(const Checkpoint& c) {
    ModelConfig m;
    m.n_blocks = std::stoi(c.get_or("model.n_blocks", "4"));
    m.n_flows = std::stoi(c.get_or("model.n_flows", "4"));
    m.residual_channels = std::stoi(c.get_or("model.residual_channels", "32"));
    m.coupling_layers = std::stoi(c.get_or("model.coupling_layers", "2"));
    m.kernel_size = std::stoi(c.get_or("model.kernel_size", "3"));
    m.factor_out_block = std::stoi(c.get_or("model.factor_out_block", "2"));
    m.causal = c.get_or("model.causal", "0") == "1";
    m.cond_channels = std::stoi(c.get_or("model.cond_channels", "8"));
    m.hop = std::stoi(c.get_or("model.hop", "64"));
    m.default_temperature = std::stod(c.get_or("model.default_temperature", "0.8"));
    return m;
}

Checkpoint make_flow_checkpoint(FlowaveModel& model, const AdamState& adam,
                                std::int64_t step) {
    Checkpoint c;
    c.kind = "flow";
    c.step = step;
    put_model_config(c, model.config());
    pack_params(c, model.params());
    pack_adam(c, adam);
    std::string flags;
    for (auto& block : model.blocks()) {
        for (auto& st : block) flags.push_back(st.actnorm.initialized() ? '1' : '0');
    }
    c.set("actnorm_initialized", flags);
    return c;
}

void restore_flow_checkpoint(const Checkpoint& c, FlowaveModel& model, AdamState* adam) {
    if (c.kind != "flow") {
        throw std::runtime_error("checkpoint kind is '" + c.kind + "', expected 'flow'");
    }
    unpack_params(c, model.params());
    if (adam) unpack_adam(c, *adam);
    const std::string flags = c.get_or("actnorm_initialized", "");
    std::size_t i = 0;
    for (auto& block : model.blocks()) {
        for (auto& st : block) {
            st.actnorm.set_initialized(i < flags.size() && flags[i] == '1');
            ++i;
        }
    }
}

namespace {

void put_teacher_config(Checkpoint& c, const TeacherConfig& t) {
    c.set("teacher.cond_channels", std::to_string(t.cond_channels));
    c.set("teacher.residual_channels", std::to_string(t.residual_channels));
    c.set("teacher.n_layers", std::to_string(t.n_layers));
    c.set("teacher.dilation_cycle", std::to_string(t.dilation_cycle));
    c.set("teacher.kernel_size", std::to_string(t.kernel_size));
    c.set("teacher.sigma_floor", fmt_double(t.sigma_floor));
}

void put_student_config(Checkpoint& c, const StudentConfig& s) {
    c.set("student.cond_channels", std::to_string(s.cond_channels));
    c.set("student.residual_channels", std::to_string(s.residual_channels));
    c.set("student.n_stacks", std::to_string(s.n_stacks));
    c.set("student.layers_per_stack", std::to_string(s.layers_per_stack));
    c.set("student.kernel_size", std::to_string(s.kernel_size));
}

}  // namespace

TeacherConfig teacher_config_from_checkpoint(const Checkpoint& c) {
    TeacherConfig t;
    t.cond_channels = std::stoi(c.get_or("teacher.cond_channels", "8"));
    t.residual_channels = std::stoi(c.get_or("teacher.residual_channels", "32"));
    t.n_layers = std::stoi(c.get_or("teacher.n_layers", "8"));
    t.dilation_cycle = std::stoi(c.get_or("teacher.dilation_cycle", "4"));
    t.kernel_size = std::stoi(c.get_or("teacher.kernel_size", "2"));
    t.sigma_floor = std::stod(c.get_or("teacher.sigma_floor", "1e-5"));
    return t;
}

StudentConfig student_config_from_checkpoint(const Checkpoint& c) {
    StudentConfig s;
    s.cond_channels = std::stoi(c.get_or("student.cond_channels", "8"));
    s.residual_channels = std::stoi(c.get_or("student.residual_channels", "32"));
    s.n_stacks = std::stoi(c.get_or("student.n_stacks", "2"));
    s.layers_per_stack = std::stoi(c.get_or("student.layers_per_stack", "4"));
    s.kernel_size = std::stoi(c.get_or("student.kernel_size", "2"));
    return s;
}

Checkpoint make_ar_checkpoint(GaussianARModel& model, const AdamState& adam,
                              std::int64_t step) {
    Checkpoint c;
    c.kind = "ar";
    c.step = step;
    put_teacher_config(c, model.config());
    pack_params(c, model.params());
    pack_adam(c, adam);
    return c;
}

void restore_ar_checkpoint(const Checkpoint& c, GaussianARModel& model, AdamState* adam) {
    if (c.kind != "ar") {
        throw std::runtime_error("checkpoint kind is '" + c.kind + "', expected 'ar'");
    }
    unpack_params(c, model.params());
    if (adam) unpack_adam(c, *adam);
}

Checkpoint make_student_checkpoint(GaussianIAFStudent& model, const AdamState& adam,
                                   std::int64_t step) {
    Checkpoint c;
    c.kind = "student";
    c.step = step;
    put_student_config(c, model.config());
    pack_params(c, model.params());
    pack_adam(c, adam);
    return c;
}

void restore_student_checkpoint(const Checkpoint& c, GaussianIAFStudent& model,
                                AdamState* adam) {
    if (c.kind != "student") {
        throw std::runtime_error("checkpoint kind is '" + c.kind + "', expected 'student'");
    }
    unpack_params(c, model.params());
    if (adam) unpack_adam(c, *adam);
}

// --- Evaluation ----------------------------------------------------------

Tensor eval_batch(const std::vector<SynthClip>& clips, int batch, int chunk_len,
                  int offset) {
    if (clips.empty()) throw std::invalid_argument("eval_batch: empty clip list");
    Tensor x({batch, 1, chunk_len});
    for (int b = 0; b < batch; ++b) {
        const auto& clip = clips[static_cast<std::size_t>(offset + b) % clips.size()];
        if (static_cast<int>(clip.samples.size()) < chunk_len) {
            throw std::invalid_argument("eval_batch: clip shorter than chunk");
        }
        for (int t = 0; t < chunk_len; ++t) {
            x.at(b, 0, t) = clip.samples[static_cast<std::size_t>(t)];
        }
    }
    return x;
}

namespace {
// Held-out evaluation covers up to this many test clips per call; a larger
// window mostly adds wall time without changing the estimate much.
constexpr int kMaxEvalClips = 16;
}  // namespace

double eval_flow(FlowaveModel& model, const Corpus& corpus, const MelConfig& mel,
                 int chunk_len, int batch) {
    const int n_clips = std::min<int>(kMaxEvalClips,
                                      static_cast<int>(corpus.test.size()));
    double total = 0.0;
    int n_batches = 0;
    for (int off = 0; off < n_clips; off += batch, ++n_batches) {
        const Tensor x = eval_batch(corpus.test, batch, chunk_len, off);
        const Tensor cond = batch_condition(x, mel);
        Tape t;
        const LikelihoodResult res = model.log_likelihood(t, x, cond);
        total += -res.value;  // negative log likelihood per dimension
    }
    return total / n_batches;
}

double eval_ar(const GaussianARModel& model, const Corpus& corpus, const MelConfig& mel,
               int chunk_len, int batch) {
    const int n_clips = std::min<int>(kMaxEvalClips,
                                      static_cast<int>(corpus.test.size()));
    double total = 0.0;
    int n_batches = 0;
    for (int off = 0; off < n_clips; off += batch, ++n_batches) {
        const Tensor x = eval_batch(corpus.test, batch, chunk_len, off);
        const Tensor cond = batch_condition(x, mel);
        Tape t;
        const Var ll = model.log_likelihood(t, x, cond);
        total += -t.value(ll).vec()[0];
    }
    return total / n_batches;
}

void eval_distill(GaussianIAFStudent& student, const GaussianARModel& teacher,
                  const Corpus& corpus, const MelConfig& mel, const DistillLossConfig& dcfg,
                  int chunk_len, int batch, std::uint64_t seed, double* kl_out,
                  double* frame_out) {
    const Tensor x = eval_batch(corpus.test, batch, chunk_len);
    const Tensor cond = batch_condition(x, mel);
    Rng rng(Rng::mix(seed, kTagEval));
    Tape t;
    Var loss;
    const DistillStepResult r = distill_loss(t, student, teacher, cond, x, dcfg, rng, &loss);
    if (kl_out) *kl_out = r.kl;
    if (frame_out) *frame_out = r.frame_loss;
}

// --- Training loops ------------------------------------------------------

TrainResult train_flow(const TrainConfig& cfg, const std::optional<std::string>& resume_from,
                       FlowaveModel* model_out) {
    const Corpus corpus = synth_corpus(cfg.corpus, cfg.seed);
    Rng init_rng(Rng::mix(cfg.seed, kTagModelInit));
    FlowaveModel model(cfg.model, init_rng);
    AdamState adam{cfg.adam};
    std::int64_t start_step = 0;

    if (resume_from) {
        const Checkpoint c = load_checkpoint(*resume_from);
        restore_flow_checkpoint(c, model, &adam);
        start_step = c.step;
    }

    MetricLog log(cfg.log_path, /*append=*/start_step > 0);
    if (start_step == 0) {
        log.note("optimizer: adam; no gradient clipping or weight decay");
    }
    auto params = model.params();
    TrainResult result;

    // ActNorm data-dependent init runs inside the first forward pass; prime
    // it with the step-0 training batch so the held-out evaluation below sees
    // the initialized model and never drives the init itself.
    {
        bool any_uninit = false;
        for (auto& block : model.blocks()) {
            for (auto& st : block) any_uninit |= !st.actnorm.initialized();
        }
        if (any_uninit) {
            Rng rng(Rng::mix(cfg.seed, kTagFlowStep + 0));
            const Tensor x = sample_chunk_batch(corpus.train, cfg.batch, cfg.chunk_len, rng);
            const Tensor cond = batch_condition(x, cfg.mel);
            Tape t;
            model.log_likelihood(t, x, cond);
        }
    }

    result.initial_eval = eval_flow(model, corpus, cfg.mel, cfg.chunk_len, cfg.batch);

    for (std::int64_t s = start_step; s < cfg.steps; ++s) {
        const double t0 = now_ms();
        Rng rng(Rng::mix(cfg.seed, kTagFlowStep + static_cast<std::uint64_t>(s)));
        const Tensor x = sample_chunk_batch(corpus.train, cfg.batch, cfg.chunk_len, rng);
        const Tensor cond = batch_condition(x, cfg.mel);
        Tape t;
        const LikelihoodResult res = model.log_likelihood(t, x, cond);
        const Var loss = t.neg(res.nats_per_dim);
        const double loss_v = -res.value;
        if (!std::isfinite(loss_v)) result.nan_seen = true;
        zero_grads(params);
        t.backward(loss);
        const double lr = adam.effective_lr();
        adam_step(params, adam);
        ++result.steps_run;

        const bool last = s + 1 == cfg.steps;
        std::string extras;
        if (cfg.eval_every > 0 && ((s + 1) % cfg.eval_every == 0 || last)) {
            const double nll = eval_flow(model, corpus, cfg.mel, cfg.chunk_len, cfg.batch);
            extras = "heldout=" + fmt_double(nll);
            result.final_eval = nll;
        }
        log.log(s + 1, now_ms() - t0, loss_v, loss_v, lr, extras);
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            ((s + 1) % cfg.checkpoint_every == 0 || last)) {
            Checkpoint c = make_flow_checkpoint(model, adam, s + 1);
            c.set("train.seed", std::to_string(cfg.seed));
            save_checkpoint(c, cfg.checkpoint_path);
        }
    }
    if (cfg.steps == start_step) {
        result.final_eval = result.initial_eval;
    }
    if (model_out) {
        Rng r2(Rng::mix(cfg.seed, kTagModelInit));
        *model_out = FlowaveModel(cfg.model, r2);
        auto src = model.params();
        auto dst = model_out->params();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
        std::size_t i = 0;
        std::vector<bool> flags;
        for (auto& block : model.blocks()) {
            for (auto& st : block) flags.push_back(st.actnorm.initialized());
        }
        for (auto& block : model_out->blocks()) {
            for (auto& st : block) st.actnorm.set_initialized(flags[i++]);
        }
    }
    return result;
}

TrainResult train_ar(const TrainConfig& cfg, const std::optional<std::string>& resume_from,
                     GaussianARModel* model_out) {
    const Corpus corpus = synth_corpus(cfg.corpus, cfg.seed);
    Rng init_rng(Rng::mix(cfg.seed, kTagTeacherInit));
    GaussianARModel model(cfg.teacher, "ar", init_rng);
    AdamState adam{cfg.adam};
    std::int64_t start_step = 0;

    if (resume_from) {
        const Checkpoint c = load_checkpoint(*resume_from);
        restore_ar_checkpoint(c, model, &adam);
        start_step = c.step;
    }

    MetricLog log(cfg.log_path, /*append=*/start_step > 0);
    if (start_step == 0) {
        log.note("optimizer: adam; no gradient clipping or weight decay");
    }
    auto params = model.params();
    TrainResult result;
    result.initial_eval = eval_ar(model, corpus, cfg.mel, cfg.chunk_len, cfg.batch);

    for (std::int64_t s = start_step; s < cfg.steps; ++s) {
        const double t0 = now_ms();
        Rng rng(Rng::mix(cfg.seed, kTagArStep + static_cast<std::uint64_t>(s)));
        const Tensor x = sample_chunk_batch(corpus.train, cfg.batch, cfg.chunk_len, rng);
        const Tensor cond = batch_condition(x, cfg.mel);
        Tape t;
        const Var ll = model.log_likelihood(t, x, cond);
        const Var loss = t.neg(ll);
        const double loss_v = t.value(loss).vec()[0];
        if (!std::isfinite(loss_v)) result.nan_seen = true;
        zero_grads(params);
        t.backward(loss);
        const double lr = adam.effective_lr();
        adam_step(params, adam);
        ++result.steps_run;
        log.log(s + 1, now_ms() - t0, loss_v, loss_v, lr);

        const bool last = s + 1 == cfg.steps;
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            ((s + 1) % cfg.checkpoint_every == 0 || last)) {
            Checkpoint c = make_ar_checkpoint(model, adam, s + 1);
            c.set("train.seed", std::to_string(cfg.seed));
            save_checkpoint(c, cfg.checkpoint_path);
        }
        if (last) {
            result.final_eval = eval_ar(model, corpus, cfg.mel, cfg.chunk_len, cfg.batch);
        }
    }
    if (cfg.steps == start_step) result.final_eval = result.initial_eval;
    if (model_out) {
        Rng r2(Rng::mix(cfg.seed, kTagTeacherInit));
        *model_out = GaussianARModel(cfg.teacher, "ar", r2);
        auto src = model.params();
        auto dst = model_out->params();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    }
    return result;
}

TrainResult train_distill(const TrainConfig& cfg, const std::string& teacher_checkpoint,
                          GaussianIAFStudent* student_out) {
    if (teacher_checkpoint.empty()) {
        throw std::invalid_argument("distill training requires a teacher checkpoint");
    }
    const Checkpoint tc = load_checkpoint(teacher_checkpoint);
    Rng dummy(0);
    GaussianARModel teacher(teacher_config_from_checkpoint(tc), "ar", dummy);
    restore_ar_checkpoint(tc, teacher, nullptr);
    auto teacher_params = teacher.params();

    const Corpus corpus = synth_corpus(cfg.corpus, cfg.seed);
    Rng init_rng(Rng::mix(cfg.seed, kTagStudentInit));
    GaussianIAFStudent student(cfg.student, "student", init_rng);
    AdamState adam{cfg.adam};
    auto params = student.params();

    MetricLog log(cfg.log_path);
    log.note("optimizer: adam; no gradient clipping or weight decay; mode=" +
             distill_mode_name(cfg.distill.mode));

    TrainResult result;
    double kl0 = 0.0, fr0 = 0.0;
    eval_distill(student, teacher, corpus, cfg.mel, cfg.distill, cfg.chunk_len, cfg.batch,
                 cfg.seed, &kl0, &fr0);
    result.initial_eval = kl0;

    for (std::int64_t s = 0; s < cfg.steps; ++s) {
        const double t0 = now_ms();
        Rng rng(Rng::mix(cfg.seed, kTagDistillStep + static_cast<std::uint64_t>(s)));
        const Tensor x = sample_chunk_batch(corpus.train, cfg.batch, cfg.chunk_len, rng);
        const Tensor cond = batch_condition(x, cfg.mel);
        Tape t;
        Var loss;
        const DistillStepResult r =
            distill_loss(t, student, teacher, cond, x, cfg.distill, rng, &loss);
        if (!std::isfinite(r.loss)) result.nan_seen = true;
        zero_grads(params);
        zero_grads(teacher_params);  // teacher is frozen; discard its gradients
        t.backward(loss);
        const double lr = adam.effective_lr();
        adam_step(params, adam);
        ++result.steps_run;
        log.log(s + 1, now_ms() - t0, r.loss, 0.0, lr,
                "kl=" + fmt_double(r.kl) + ";frame=" + fmt_double(r.frame_loss));

        const bool last = s + 1 == cfg.steps;
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            ((s + 1) % cfg.checkpoint_every == 0 || last)) {
            Checkpoint c = make_student_checkpoint(student, adam, s + 1);
            c.set("train.seed", std::to_string(cfg.seed));
            save_checkpoint(c, cfg.checkpoint_path);
        }
    }

    eval_distill(student, teacher, corpus, cfg.mel, cfg.distill, cfg.chunk_len, cfg.batch,
                 cfg.seed, &result.final_kl, &result.final_frame);
    result.final_eval = result.final_kl;
    if (student_out) {
        Rng r2(Rng::mix(cfg.seed, kTagStudentInit));
        *student_out = GaussianIAFStudent(cfg.student, "student", r2);
        auto src = student.params();
        auto dst = student_out->params();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    }
    return result;
}

}  // namespace flowave
