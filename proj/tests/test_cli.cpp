#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "flowave/audio.hpp"
#include "flowave/checkpoint.hpp"
#include "flowave/trainer.hpp"

using namespace flowave;
namespace fs = std::filesystem;

namespace {

const std::string kDir = "/tmp/flowave_cli_test";

struct CliResult {
    int exit_code = -1;
    std::string out;
};

CliResult run_cli(const std::string& args) {
    const std::string out_path = kDir + "/cli_stdout.txt";
    const std::string cmd = std::string("FLOWAVE_LOG_LEVEL=quiet ") + FLOWAVE_CLI_BIN + " " +
                            args + " > " + out_path + " 2>" + kDir + "/cli_stderr.txt";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string tiny_config() {
    const std::string path = kDir + "/tiny.cfg";
    std::ofstream f(path);
    f << "model.n_blocks=2\n"
         "model.n_flows=2\n"
         "model.residual_channels=8\n"
         "model.coupling_layers=2\n"
         "corpus.n_clips=4\n"
         "corpus.clip_len=1024\n"
         "train.batch=1\n"
         "train.chunk_len=256\n"
         "train.eval_every=1000\n"
         "train.checkpoint_every=1000\n";
    return path;
}

struct DirFixture {
    DirFixture() { fs::create_directories(kDir); }
};
DirFixture fixture;

}  // namespace

TEST_CASE("train writes a checkpoint and a well-formed CSV metric log") {
    const std::string cfg = tiny_config();
    const std::string ckpt = kDir + "/flow.ckpt";
    const std::string log = kDir + "/flow.csv";
    const CliResult r = run_cli("train --config " + cfg + " --steps 3 --checkpoint " + ckpt +
                                " --out " + log);
    CHECK(r.exit_code == 0);
    REQUIRE(fs::exists(ckpt));
    REQUIRE(fs::exists(log));

    const Checkpoint c = load_checkpoint(ckpt);
    CHECK(c.kind == "flow");
    CHECK(c.step == 3);
    CHECK(c.get_or("train.seed", "") == "7");

    std::ifstream in(log);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == MetricLog::kHeader);
    int rows = 0;
    std::string last;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        ++rows;
        last = line;
        CHECK(line.substr(0, line.find(',')) == std::to_string(rows));
    }
    CHECK(rows == 3);
    CHECK(last.find("heldout=") != std::string::npos);  // final-step eval
}

TEST_CASE("resumed training is bit-compatible with an uninterrupted run") {
    const std::string cfg = tiny_config();
    const std::string a = kDir + "/oneshot.ckpt";
    const std::string b = kDir + "/split.ckpt";
    CHECK(run_cli("train --config " + cfg + " --steps 6 --checkpoint " + a).exit_code == 0);
    CHECK(run_cli("train --config " + cfg + " --steps 3 --checkpoint " + b).exit_code == 0);
    CHECK(run_cli("train --config " + cfg + " --steps 6 --checkpoint " + b + " --resume " + b)
              .exit_code == 0);
    const std::string bytes_a = slurp(a), bytes_b = slurp(b);
    CHECK(!bytes_a.empty());
    CHECK(bytes_a == bytes_b);
}

TEST_CASE("distill mode without a teacher checkpoint fails") {
    const CliResult r =
        run_cli("train --config " + tiny_config() + " --mode distill --steps 1");
    CHECK(r.exit_code != 0);
}

TEST_CASE("omitting --temperature equals passing the 0.8 default explicitly") {
    const std::string cfg = tiny_config();
    const std::string ckpt = kDir + "/temp_default.ckpt";
    REQUIRE(run_cli("train --config " + cfg + " --steps 2 --checkpoint " + ckpt).exit_code ==
            0);
    const std::string w1 = kDir + "/default.wav", w2 = kDir + "/explicit.wav";
    CHECK(run_cli("sample --config " + cfg + " --checkpoint " + ckpt + " --out " + w1)
              .exit_code == 0);
    CHECK(run_cli("sample --config " + cfg + " --checkpoint " + ckpt +
                  " --temperature 0.8 --out " + w2)
              .exit_code == 0);
    const std::string b1 = slurp(w1), b2 = slurp(w2);
    CHECK(!b1.empty());
    CHECK(b1 == b2);
}

TEST_CASE("temperature 0 output is independent of the sampling seed") {
    const std::string cfg = tiny_config();
    const std::string ckpt = kDir + "/temp0.ckpt";
    REQUIRE(run_cli("train --config " + cfg + " --steps 2 --checkpoint " + ckpt).exit_code ==
            0);
    const std::string w1 = kDir + "/t0_seed1.wav", w2 = kDir + "/t0_seed2.wav";
    CHECK(run_cli("sample --config " + cfg + " --checkpoint " + ckpt +
                  " --temperature 0 --seed 1 --out " + w1)
              .exit_code == 0);
    CHECK(run_cli("sample --config " + cfg + " --checkpoint " + ckpt +
                  " --temperature 0 --seed 2 --out " + w2)
              .exit_code == 0);
    const std::string b1 = slurp(w1), b2 = slurp(w2);
    CHECK(!b1.empty());
    CHECK(b1 == b2);
    // different seeds at temperature > 0 must differ
    const std::string w3 = kDir + "/t8_seed1.wav", w4 = kDir + "/t8_seed2.wav";
    CHECK(run_cli("sample --config " + cfg + " --checkpoint " + ckpt +
                  " --temperature 0.8 --seed 1 --out " + w3)
              .exit_code == 0);
    CHECK(run_cli("sample --config " + cfg + " --checkpoint " + ckpt +
                  " --temperature 0.8 --seed 2 --out " + w4)
              .exit_code == 0);
    CHECK(slurp(w3) != slurp(w4));
}

TEST_CASE("identity checkpoint: sample variance tracks temperature^2") {
    // Build an identity-flow checkpoint directly; the sampler output is then
    // a permutation of the prior draw, so its variance is temperature^2.
    ModelConfig mc;
    mc.n_blocks = 2;
    mc.n_flows = 2;
    mc.residual_channels = 8;
    mc.coupling_layers = 2;
    Rng rng(1);
    FlowaveModel model(mc, rng);
    model.set_identity_initialized();
    AdamState adam;
    Checkpoint c = make_flow_checkpoint(model, adam, 0);
    c.set("train.seed", "7");
    const std::string ckpt = kDir + "/identity.ckpt";
    save_checkpoint(c, ckpt);

    // temperature 0.2 keeps the draw far from the PCM clipping range so the
    // WAV round trip preserves the variance
    const std::string wav = kDir + "/identity.wav";
    const CliResult r = run_cli("sample --checkpoint " + ckpt +
                                " --temperature 0.2 --seed 5 --out " + wav);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("clipped=0") != std::string::npos);
    const auto x = wav_to_float(load_wav(wav));
    REQUIRE(x.size() >= 4096);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    CHECK(std::abs(var - 0.04) < 0.05 * 0.04);
}

TEST_CASE("verify subcommand runs a scoped suite and reports success") {
    const CliResult r = run_cli("verify --config " + tiny_config() + " --scope jacobian");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("ALL CHECKS PASSED") != std::string::npos);
    CHECK(run_cli("verify --scope no_such_scope").exit_code != 0);
}

TEST_CASE("benchmark emits the throughput table") {
    const CliResult r =
        run_cli("benchmark --config " + tiny_config() + " --length 512 --repeats 1");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("metric,median,spread,unit") != std::string::npos);
    CHECK(r.out.find("flow_samples_per_sec") != std::string::npos);
    CHECK(r.out.find("ar_samples_per_sec") != std::string::npos);
    CHECK(r.out.find("train_iters_per_sec") != std::string::npos);
    CHECK(r.out.find("flow_sequential_passes,4,") != std::string::npos);  // 2 blocks x 2 flows
    CHECK(r.out.find("ar_sequential_passes,512,") != std::string::npos);
    CHECK(r.out.find("speedup_flow_over_ar") != std::string::npos);
}

TEST_CASE("unknown config fields are rejected with the field name and line") {
    const std::string bad = kDir + "/bad.cfg";
    {
        std::ofstream f(bad);
        f << "model.n_blocks=2\nmodel.not_a_field=3\n";
    }
    const CliResult r = run_cli("train --config " + bad + " --steps 1");
    CHECK(r.exit_code != 0);
    const std::string err = slurp(kDir + "/cli_stderr.txt");
    CHECK(err.find("model.not_a_field") != std::string::npos);
    CHECK(err.find(":2") != std::string::npos);
}
