// flowave: single-binary CLI for training, sampling, verification,
// benchmarking and ablation on the desk-scale flow vocoder.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowave/audio.hpp"
#include "flowave/baselines.hpp"
#include "flowave/checkpoint.hpp"
#include "flowave/flow_model.hpp"
#include "flowave/runtime.hpp"
#include "flowave/trainer.hpp"
#include "flowave/verify.hpp"

namespace {

using namespace flowave;

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel g_log_level = LogLevel::kInfo;

void init_log_level() {
    const char* env = std::getenv("FLOWAVE_LOG_LEVEL");
    if (!env) return;
    const std::string v(env);
    if (v == "quiet" || v == "error") {
        g_log_level = LogLevel::kQuiet;
    } else if (v == "debug") {
        g_log_level = LogLevel::kDebug;
    } else {
        g_log_level = LogLevel::kInfo;
    }
}

void info(const std::string& msg) {
    if (g_log_level >= LogLevel::kInfo) std::cerr << "[flowave] " << msg << '\n';
}

void debug(const std::string& msg) {
    if (g_log_level >= LogLevel::kDebug) std::cerr << "[flowave:debug] " << msg << '\n';
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// --- flat key=value config files ----------------------------------------

struct RunConfig {
    TrainConfig train;
    std::string mode = "flow";      // flow | ar | distill
    std::string loss = "both";      // distill loss mode
    double temperature = 0.8;
    std::string teacher_checkpoint;
    std::string resume;
};

bool apply_config_field(RunConfig& rc, const std::string& key, const std::string& val) {
    TrainConfig& t = rc.train;
    auto i = [&] { return std::stoi(val); };
    auto d = [&] { return std::stod(val); };
    auto b = [&] { return val == "1" || val == "true"; };
    if (key == "model.n_blocks") t.model.n_blocks = i();
    else if (key == "model.n_flows") t.model.n_flows = i();
    else if (key == "model.residual_channels") t.model.residual_channels = i();
    else if (key == "model.coupling_layers") t.model.coupling_layers = i();
    else if (key == "model.kernel_size") t.model.kernel_size = i();
    else if (key == "model.factor_out_block") t.model.factor_out_block = i();
    else if (key == "model.causal") t.model.causal = b();
    else if (key == "model.cond_channels") t.model.cond_channels = i();
    else if (key == "model.hop") t.model.hop = i();
    else if (key == "model.default_temperature") t.model.default_temperature = d();
    else if (key == "mel.fft_size") t.mel.fft_size = i();
    else if (key == "mel.hop") t.mel.hop = i();
    else if (key == "mel.n_mels") t.mel.n_mels = i();
    else if (key == "mel.fmin") t.mel.fmin = d();
    else if (key == "mel.fmax") t.mel.fmax = d();
    else if (key == "mel.floor") t.mel.floor = d();
    else if (key == "mel.sample_rate") t.mel.sample_rate = i();
    else if (key == "corpus.n_clips") t.corpus.n_clips = i();
    else if (key == "corpus.sample_rate") t.corpus.sample_rate = i();
    else if (key == "corpus.clip_len") t.corpus.clip_len = i();
    else if (key == "corpus.max_amp") t.corpus.max_amp = d();
    else if (key == "corpus.test_every") t.corpus.test_every = i();
    else if (key == "adam.lr") t.adam.lr = d();
    else if (key == "adam.decay") t.adam.decay = d();
    else if (key == "adam.decay_interval") t.adam.decay_interval = i();
    else if (key == "teacher.cond_channels") t.teacher.cond_channels = i();
    else if (key == "teacher.residual_channels") t.teacher.residual_channels = i();
    else if (key == "teacher.n_layers") t.teacher.n_layers = i();
    else if (key == "teacher.dilation_cycle") t.teacher.dilation_cycle = i();
    else if (key == "teacher.kernel_size") t.teacher.kernel_size = i();
    else if (key == "student.cond_channels") t.student.cond_channels = i();
    else if (key == "student.residual_channels") t.student.residual_channels = i();
    else if (key == "student.n_stacks") t.student.n_stacks = i();
    else if (key == "student.layers_per_stack") t.student.layers_per_stack = i();
    else if (key == "student.kernel_size") t.student.kernel_size = i();
    else if (key == "distill.lambda") t.distill.lambda = d();
    else if (key == "distill.frame_weight") t.distill.frame_weight = d();
    else if (key == "distill.frame_fft") t.distill.frame.fft_size = i();
    else if (key == "distill.frame_hop") t.distill.frame.hop = i();
    else if (key == "train.batch") t.batch = i();
    else if (key == "train.chunk_len") t.chunk_len = i();
    else if (key == "train.steps") t.steps = i();
    else if (key == "train.checkpoint_every") t.checkpoint_every = i();
    else if (key == "train.eval_every") t.eval_every = i();
    else if (key == "train.seed") t.seed = static_cast<std::uint64_t>(std::stoull(val));
    else if (key == "train.checkpoint_path") t.checkpoint_path = val;
    else if (key == "train.log_path") t.log_path = val;
    else if (key == "mode") rc.mode = val;
    else if (key == "loss") rc.loss = val;
    else if (key == "temperature") rc.temperature = d();
    else if (key == "teacher_checkpoint") rc.teacher_checkpoint = val;
    else if (key == "resume") rc.resume = val;
    else return false;
    return true;
}

void load_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: missing '=' at " + path + ":" +
                                     std::to_string(lineno));
        }
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            const auto b2 = s.find_first_not_of(" \t");
            const auto e2 = s.find_last_not_of(" \t");
            s = b2 == std::string::npos ? "" : s.substr(b2, e2 - b2 + 1);
        };
        trim(key);
        trim(val);
        if (!apply_config_field(rc, key, val)) {
            throw std::runtime_error("config: unknown field '" + key + "' at " + path + ":" +
                                     std::to_string(lineno));
        }
    }
}

// --- shared helpers -------------------------------------------------------

FlowaveModel load_flow_model(const std::string& checkpoint_path, std::uint64_t seed) {
    const Checkpoint c = load_checkpoint(checkpoint_path);
    const ModelConfig mc = model_config_from_checkpoint(c);
    Rng rng(Rng::mix(seed, 1));
    FlowaveModel model(mc, rng);
    restore_flow_checkpoint(c, model, nullptr);
    return model;
}

FlowaveModel fresh_flow_model(const ModelConfig& mc, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 1));
    FlowaveModel model(mc, rng);
    model.set_identity_initialized();
    // Perturb away from the exact-identity init so the invertibility and
    // round-trip suites exercise a non-trivial flow.
    for (Param* p : model.params()) {
        for (auto& v : p->value.vec()) v += 0.1 * rng.normal();
    }
    return model;
}

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 7;
    int steps = -1;
    double temperature = -1.0;  // <0 = unset (default 0.8)
    std::string checkpoint;
    std::string out;
    std::string mode;
    std::string loss;
};

RunConfig assemble_config(const CommonOpts& o) {
    RunConfig rc;
    if (!o.config_path.empty()) load_config_file(rc, o.config_path);
    rc.train.seed = o.seed;
    if (o.steps >= 0) rc.train.steps = o.steps;
    if (o.temperature >= 0.0) rc.temperature = o.temperature;
    if (!o.mode.empty()) rc.mode = o.mode;
    if (!o.loss.empty()) rc.loss = o.loss;
    return rc;
}

// --- subcommands ----------------------------------------------------------

int cmd_train(const CommonOpts& o, const std::string& teacher, const std::string& resume) {
    RunConfig rc = assemble_config(o);
    if (!teacher.empty()) rc.teacher_checkpoint = teacher;
    if (!resume.empty()) rc.resume = resume;
    if (!o.checkpoint.empty()) rc.train.checkpoint_path = o.checkpoint;
    if (!o.out.empty()) rc.train.log_path = o.out;
    if (rc.mode != "flow" && rc.mode != "ar" && rc.mode != "distill") {
        throw std::runtime_error("train: invalid mode '" + rc.mode +
                                 "' (expected flow, ar or distill)");
    }
    std::optional<std::string> resume_opt;
    if (!rc.resume.empty()) resume_opt = rc.resume;

    TrainResult result;
    if (rc.mode == "flow") {
        info("flow training: " + std::to_string(rc.train.steps) + " steps, seed " +
             std::to_string(rc.train.seed));
        result = train_flow(rc.train, resume_opt);
        info("held-out nats/dim: " + std::to_string(result.initial_eval) + " -> " +
             std::to_string(result.final_eval));
    } else if (rc.mode == "ar") {
        info("autoregressive teacher training: " + std::to_string(rc.train.steps) + " steps");
        result = train_ar(rc.train, resume_opt);
        info("held-out nats/dim: " + std::to_string(result.initial_eval) + " -> " +
             std::to_string(result.final_eval));
    } else {
        if (rc.teacher_checkpoint.empty()) {
            throw std::runtime_error("train: distill mode requires --teacher CHECKPOINT");
        }
        rc.train.distill.mode = parse_distill_mode(rc.loss);
        info("distillation (" + rc.loss + "): " + std::to_string(rc.train.steps) + " steps");
        result = train_distill(rc.train, rc.teacher_checkpoint);
        info("test KL: " + std::to_string(result.initial_eval) + " -> " +
             std::to_string(result.final_kl) +
             ", test frame loss: " + std::to_string(result.final_frame));
    }
    if (result.nan_seen) {
        std::cerr << "[flowave] training produced non-finite loss values\n";
        return 1;
    }
    return 0;
}

int cmd_sample(const CommonOpts& o, const std::string& in_path) {
    if (o.checkpoint.empty()) throw std::runtime_error("sample: --checkpoint is required");
    if (o.out.empty()) throw std::runtime_error("sample: --out is required");
    RunConfig rc = assemble_config(o);
    const double temperature = o.temperature >= 0.0 ? o.temperature : 0.8;

    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    Rng mrng(Rng::mix(rc.train.seed, 1));
    FlowaveModel model(model_config_from_checkpoint(ckpt), mrng);
    restore_flow_checkpoint(ckpt, model, nullptr);
    const ModelConfig& mc = model.config();
    MelConfig mel = rc.train.mel;
    mel.n_mels = mc.cond_channels;
    mel.hop = mc.hop;

    Tensor mel_frames;  // (1, bands, frames)
    if (in_path.empty()) {
        // No input: condition on a held-out synthetic clip from the corpus
        // the checkpoint was trained on; --seed then only drives sampling
        // noise, so temperature-0 output is seed-independent.
        const std::uint64_t corpus_seed =
            static_cast<std::uint64_t>(std::stoull(ckpt.get_or("train.seed", "7")));
        const Corpus corpus = synth_corpus(rc.train.corpus, corpus_seed);
        mel_frames = mel_spectrogram(corpus.test.at(0).samples, mel);
        info("no input given; conditioning on held-out synthetic clip 0");
    } else if (in_path.size() >= 4 && in_path.substr(in_path.size() - 4) == ".wav") {
        const WavClip clip = load_wav(in_path);
        mel.sample_rate = clip.sample_rate;
        mel_frames = mel_spectrogram(wav_to_float(clip), mel);
    } else {
        mel_frames = read_mel_cache(in_path);
        if (mel_frames.dim(1) != mc.cond_channels) {
            throw std::runtime_error("sample: mel cache has " +
                                     std::to_string(mel_frames.dim(1)) + " bands, model needs " +
                                     std::to_string(mc.cond_channels));
        }
    }

    int target_t = mel_frames.dim(2) * mel.hop;
    const auto sq = mc.squeeze_factor();
    if (target_t % sq != 0) {
        const int trimmed = static_cast<int>(target_t / sq * sq);
        info("warning: length " + std::to_string(target_t) + " not divisible by " +
             std::to_string(sq) + "; trimming to " + std::to_string(trimmed));
        target_t = trimmed;
    }
    Tensor cond = upsample_condition(mel_frames, mel.hop, mel_frames.dim(2) * mel.hop);
    if (cond.dim(2) != target_t) {
        Tensor trimmed({1, cond.dim(1), target_t});
        for (int c = 0; c < cond.dim(1); ++c) {
            for (int t = 0; t < target_t; ++t) trimmed.at(0, c, t) = cond.at(0, c, t);
        }
        cond = std::move(trimmed);
    }

    Rng rng(Rng::mix(rc.train.seed, 77));
    const Tensor y = model.sample<double>(cond, temperature, rng);
    std::vector<double> samples(static_cast<std::size_t>(target_t));
    for (int t = 0; t < target_t; ++t) samples[static_cast<std::size_t>(t)] = y.at(0, 0, t);
    std::int64_t clipped = 0;
    const WavClip out_clip = float_to_wav(samples, mel.sample_rate, &clipped);
    write_wav(out_clip, o.out);
    info("wrote " + o.out + " (" + std::to_string(target_t) + " samples at " +
         std::to_string(mel.sample_rate) + " Hz, temperature " + std::to_string(temperature) +
         ", " + std::to_string(clipped) + " clipped)");
    std::cout << "samples=" << target_t << " clipped=" << clipped << '\n';
    return 0;
}

int cmd_verify(const CommonOpts& o, const std::string& scope) {
    RunConfig rc = assemble_config(o);
    FlowaveModel model = o.checkpoint.empty()
                                ? fresh_flow_model(rc.train.model, rc.train.seed)
                                : load_flow_model(o.checkpoint, rc.train.seed);
    const auto results = run_verify(scope, model, rc.train.seed);
    std::cout << format_report(results);
    const bool ok = all_passed(results);
    std::cout << (ok ? "ALL CHECKS PASSED" : "CHECKS FAILED") << '\n';
    return ok ? 0 : 1;
}

int cmd_benchmark(const CommonOpts& o, int length, int repeats) {
    RunConfig rc = assemble_config(o);
    FlowaveModel model = o.checkpoint.empty()
                                ? fresh_flow_model(rc.train.model, rc.train.seed)
                                : load_flow_model(o.checkpoint, rc.train.seed);
    const ModelConfig& mc = model.config();
    Rng crng(Rng::mix(rc.train.seed, 81));
    Tensor cond({1, mc.cond_channels, length});
    for (auto& v : cond.vec()) v = crng.uniform(-3.0, 0.0);

    auto median_spread = [](std::vector<double> v, double* med, double* spread) {
        std::sort(v.begin(), v.end());
        *med = v[v.size() / 2];
        *spread = v.back() - v.front();
    };

    // Flow sampling: repeats full single-pass generations.
    std::vector<double> flow_rates;
    std::int64_t flow_passes = 0;
    for (int r = 0; r < repeats; ++r) {
        Rng rng(Rng::mix(rc.train.seed, 82 + static_cast<std::uint64_t>(r)));
        const double t0 = now_ms();
        model.sample<double>(cond, 0.8, rng, &flow_passes);
        flow_rates.push_back(length / ((now_ms() - t0) / 1000.0));
    }

    // AR sampling: time a handful of full-length sequential passes; each
    // pass produces one sample, so the rate is samples per pass time.
    TeacherConfig tc = rc.train.teacher;
    tc.cond_channels = mc.cond_channels;
    Rng arng(Rng::mix(rc.train.seed, 83));
    GaussianARModel ar(tc, "bench.ar", arng);
    const int ar_probe = 4;
    std::vector<double> ar_rates;
    for (int r = 0; r < repeats; ++r) {
        Rng rng(Rng::mix(rc.train.seed, 84 + static_cast<std::uint64_t>(r)));
        std::int64_t passes = 0;
        const double t0 = now_ms();
        ar.sample(cond, rng, &passes, ar_probe);
        ar_rates.push_back(ar_probe / ((now_ms() - t0) / 1000.0));
    }
    const std::int64_t ar_passes =
        FlowaveModel::count_sequential_passes(true, length, mc);
    const std::int64_t flow_passes_expected =
        FlowaveModel::count_sequential_passes(false, length, mc);

    // Training iterations: a few flow maximum-likelihood steps.
    std::vector<double> train_rates;
    {
        CorpusConfig cc = rc.train.corpus;
        const Corpus corpus = synth_corpus(cc, rc.train.seed);
        AdamState adam{rc.train.adam};
        auto params = model.params();
        const int n_steps = std::min(3, repeats);
        for (int s = 0; s < n_steps; ++s) {
            Rng rng(Rng::mix(rc.train.seed, 85 + static_cast<std::uint64_t>(s)));
            const Tensor x = sample_chunk_batch(corpus.train, rc.train.batch,
                                                rc.train.chunk_len, rng);
            const Tensor bc = batch_condition(x, rc.train.mel);
            const double t0 = now_ms();
            Tape t;
            const LikelihoodResult res = model.log_likelihood(t, x, bc);
            for (Param* p : params) p->zero_grad();
            t.backward(t.neg(res.nats_per_dim));
            adam_step(params, adam);
            train_rates.push_back(1000.0 / (now_ms() - t0));
        }
    }

    double fm, fs, am, as, tm, ts;
    median_spread(flow_rates, &fm, &fs);
    median_spread(ar_rates, &am, &as);
    median_spread(train_rates, &tm, &ts);

    std::cout << "metric,median,spread,unit\n";
    std::cout << "flow_samples_per_sec," << fm << ',' << fs << ",samples/s\n";
    std::cout << "ar_samples_per_sec," << am << ',' << as << ",samples/s\n";
    std::cout << "train_iters_per_sec," << tm << ',' << ts << ",iters/s\n";
    std::cout << "flow_sequential_passes," << flow_passes_expected << ",0,passes\n";
    std::cout << "ar_sequential_passes," << ar_passes << ",0,passes\n";
    std::cout << "speedup_flow_over_ar," << fm / am << ",0,x\n";
    if (flow_passes != flow_passes_expected) {
        std::cerr << "[flowave] pass counter mismatch: measured "
                  << flow_passes << ", expected " << flow_passes_expected << '\n';
        return 1;
    }
    return 0;
}

int cmd_ablate(const CommonOpts& o, const std::string& teacher,
               std::vector<std::string> modes) {
    if (teacher.empty()) throw std::runtime_error("ablate: --teacher CHECKPOINT is required");
    RunConfig rc = assemble_config(o);
    if (modes.empty()) modes = {"kl_only", "both", "frame_only"};

    std::ostringstream table;
    table << "mode,test_kl,test_frame_loss,steps\n";
    for (const auto& mode : modes) {
        TrainConfig tc = rc.train;
        tc.distill.mode = parse_distill_mode(mode);
        tc.checkpoint_path.clear();
        tc.log_path.clear();
        info("ablation: training student with loss mode " + mode);
        const TrainResult r = train_distill(tc, teacher);
        table << mode << ',' << r.final_kl << ',' << r.final_frame << ',' << r.steps_run
              << '\n';
    }
    std::cout << table.str();
    if (!o.out.empty()) {
        std::ofstream f(o.out);
        f << table.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    configure_allocator();
    init_log_level();

    CLI::App app{"flowave: flow-based parallel waveform vocoder (desk scale)"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string teacher, resume, in_path, scope = "all";
    int length = 16000, repeats = 5;
    std::vector<std::string> modes;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "flat key=value config file");
        sub->add_option("--seed", o.seed, "run seed");
        sub->add_option("--steps", o.steps, "training steps");
        sub->add_option("--temperature", o.temperature, "prior temperature (default 0.8)");
        sub->add_option("--checkpoint", o.checkpoint, "checkpoint path");
        sub->add_option("--out", o.out, "output path");
        sub->add_option("--mode", o.mode, "flow | ar | distill")
            ->check(CLI::IsMember({"flow", "ar", "distill"}));
        sub->add_option("--loss", o.loss, "distill loss: kl_only | frame_only | both")
            ->check(CLI::IsMember({"kl_only", "frame_only", "both"}));
    };

    CLI::App* train = app.add_subcommand("train", "run a training loop");
    add_common(train);
    train->add_option("--teacher", teacher, "teacher checkpoint (distill mode)");
    train->add_option("--resume", resume, "checkpoint to resume from");

    CLI::App* sample = app.add_subcommand("sample", "generate a waveform");
    add_common(sample);
    sample->add_option("--in", in_path, "conditioning input (.wav or mel cache)");

    CLI::App* verify = app.add_subcommand("verify", "run verification suites");
    add_common(verify);
    verify->add_option("--scope", scope,
                       "all | invertibility | jacobian | gradients | causality | roundtrip");

    CLI::App* bench = app.add_subcommand("benchmark", "throughput report");
    add_common(bench);
    bench->add_option("--length", length, "sample length T");
    bench->add_option("--repeats", repeats, "benchmark repeats");

    CLI::App* ablate = app.add_subcommand("ablate", "distillation loss ablation");
    add_common(ablate);
    ablate->add_option("--teacher", teacher, "teacher checkpoint");
    ablate->add_option("--modes", modes, "loss modes to ablate");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(o, teacher, resume);
        if (sample->parsed()) return cmd_sample(o, in_path);
        if (verify->parsed()) return cmd_verify(o, scope);
        if (bench->parsed()) return cmd_benchmark(o, length, repeats);
        if (ablate->parsed()) return cmd_ablate(o, teacher, modes);
    } catch (const std::exception& e) {
        std::cerr << "[flowave] error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
