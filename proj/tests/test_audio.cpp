#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "flowave/audio.hpp"

using namespace flowave;

namespace {

struct TempPath {
    std::string path;
    explicit TempPath(const std::string& name) : path("/tmp/flowave_audio_" + name) {}
    ~TempPath() { std::remove(path.c_str()); }
};

std::vector<double> sine(double f_hz, int sr, int n, double amp = 0.5) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) x[static_cast<std::size_t>(t)] =
        amp * std::sin(2.0 * M_PI * f_hz * t / sr);
    return x;
}

}  // namespace

TEST_CASE("WAV write/load round trip is bit exact") {
    TempPath p("roundtrip.wav");
    WavClip clip;
    clip.sample_rate = 4000;
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        clip.samples.push_back(static_cast<std::int16_t>(rng.uniform(-32768.0, 32767.0)));
    }
    clip.samples[0] = -32768;
    clip.samples[1] = 32767;
    write_wav(clip, p.path);
    const WavClip back = load_wav(p.path);
    CHECK(back.sample_rate == clip.sample_rate);
    REQUIRE(back.samples.size() == clip.samples.size());
    for (std::size_t i = 0; i < clip.samples.size(); ++i) CHECK(back.samples[i] == clip.samples[i]);
}

TEST_CASE("PCM-16 <-> float conversion endpoints") {
    WavClip clip;
    clip.sample_rate = 4000;
    clip.samples = {-32768, 0, 16384, 32767};
    const auto f = wav_to_float(clip);
    CHECK(f[0] == doctest::Approx(-1.0));
    CHECK(f[1] == doctest::Approx(0.0));
    CHECK(f[2] == doctest::Approx(0.5));
    CHECK(f[3] == doctest::Approx(32767.0 / 32768.0));

    std::int64_t clipped = 0;
    const WavClip back = float_to_wav({-2.0, -1.0, 0.0, 1.5}, 4000, &clipped);
    CHECK(clipped == 2);
    CHECK(back.samples[0] == -32768);
    CHECK(back.samples[1] == -32768);
    CHECK(back.samples[2] == 0);
    CHECK(back.samples[3] == 32767);
}

TEST_CASE("stereo and non-PCM WAV files are rejected with a message") {
    // handcraft a 44-byte stereo header with zero frames
    TempPath p("stereo.wav");
    {
        unsigned char h[44] = {0};
        auto put32 = [&](int off, std::uint32_t v) {
            for (int i = 0; i < 4; ++i) h[off + i] = static_cast<unsigned char>(v >> (8 * i));
        };
        auto put16 = [&](int off, std::uint16_t v) {
            h[off] = static_cast<unsigned char>(v & 0xff);
            h[off + 1] = static_cast<unsigned char>(v >> 8);
        };
        std::memcpy(h, "RIFF", 4);
        put32(4, 36);
        std::memcpy(h + 8, "WAVE", 4);
        std::memcpy(h + 12, "fmt ", 4);
        put32(16, 16);
        put16(20, 1);   // PCM
        put16(22, 2);   // stereo
        put32(24, 4000);
        put32(28, 4000 * 2 * 2);
        put16(32, 4);
        put16(34, 16);
        std::memcpy(h + 36, "data", 4);
        put32(40, 0);
        std::ofstream f(p.path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(h), 44);
    }
    CHECK_THROWS_WITH_AS(load_wav(p.path), doctest::Contains("mono"), std::runtime_error);
    CHECK_THROWS_AS(load_wav("/tmp/flowave_no_such_file.wav"), std::runtime_error);
}

TEST_CASE("mel spectrogram of silence is the log floor everywhere") {
    MelConfig cfg;
    const Tensor mel = mel_spectrogram(std::vector<double>(1024, 0.0), cfg);
    CHECK(mel.dim(1) == cfg.n_mels);
    CHECK(mel.dim(2) == 1024 / cfg.hop);
    for (double v : mel.vec()) CHECK(v == doctest::Approx(std::log(cfg.floor)));
}

TEST_CASE("a pure tone peaks in the band the filterbank maps its frequency to") {
    MelConfig cfg;
    const double f = 440.0;
    const Tensor mel = mel_spectrogram(sine(f, cfg.sample_rate, 4096), cfg);
    const int expect_band = mel_band_of_frequency(cfg, f);
    // argmax over bands of the time-averaged log power
    int best = -1;
    double best_v = -1e300;
    for (int m = 0; m < cfg.n_mels; ++m) {
        double s = 0.0;
        for (int fr = 0; fr < mel.dim(2); ++fr) s += mel.at(0, m, fr);
        if (s > best_v) { best_v = s; best = m; }
    }
    CHECK(best == expect_band);
}

TEST_CASE("frame count is ceil(T / hop)") {
    MelConfig cfg;
    cfg.hop = 256;
    CHECK(mel_spectrogram(std::vector<double>(16000, 0.0), cfg).dim(2) == 63);
    cfg.fft_size = 64;
    cfg.hop = 64;
    CHECK(mel_spectrogram(std::vector<double>(100, 0.0), cfg).dim(2) == 2);
}

TEST_CASE("mel filterbank rows are non-negative and cover the spectrum") {
    MelConfig cfg;
    const Tensor fb = mel_filterbank(cfg);
    CHECK(fb.dim(1) == cfg.n_mels);
    CHECK(fb.dim(2) == cfg.fft_size / 2 + 1);
    for (double v : fb.vec()) CHECK(v >= 0.0);
    for (int m = 0; m < cfg.n_mels; ++m) {
        double row = 0.0;
        for (int k = 0; k < fb.dim(2); ++k) row += fb.at(0, m, k);
        CHECK(row > 0.0);
    }
}

TEST_CASE("nearest-frame upsampling duplicates frames and aligns as floor(t/hop)") {
    Tensor mel({1, 2, 4});
    for (std::int64_t i = 0; i < mel.size(); ++i) mel[i] = static_cast<double>(i);
    const int hop = 2;
    const Tensor up = upsample_condition(mel, hop, 8);
    CHECK(up.dim(2) == 8);
    for (int c = 0; c < 2; ++c) {
        for (int t = 0; t < 8; ++t) {
            CHECK(up.at(0, c, t) == mel.at(0, c, t / hop));
        }
    }
    // stride subsampling recovers the original frames exactly
    for (int c = 0; c < 2; ++c) {
        for (int f = 0; f < 4; ++f) CHECK(up.at(0, c, f * hop) == mel.at(0, c, f));
    }
    CHECK_THROWS_AS(upsample_condition(mel, hop, 7), std::invalid_argument);
}

TEST_CASE("synthetic corpus is deterministic, bounded, and split as configured") {
    CorpusConfig cfg;
    const Corpus a = synth_corpus(cfg, 42);
    const Corpus b = synth_corpus(cfg, 42);
    const Corpus c = synth_corpus(cfg, 43);
    CHECK(a.train.size() + a.test.size() == static_cast<std::size_t>(cfg.n_clips));
    CHECK(a.test.size() == static_cast<std::size_t>(cfg.n_clips / cfg.test_every));
    REQUIRE(a.train.size() == b.train.size());
    bool any_diff_seed_differs = false;
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        REQUIRE(a.train[i].samples.size() == static_cast<std::size_t>(cfg.clip_len));
        for (std::size_t t = 0; t < a.train[i].samples.size(); ++t) {
            CHECK(a.train[i].samples[t] == b.train[i].samples[t]);
            CHECK(std::abs(a.train[i].samples[t]) <= cfg.max_amp + 1e-12);
            if (a.train[i].samples[t] != c.train[i].samples[t]) any_diff_seed_differs = true;
        }
        const std::size_t nf = a.train[i].freqs.size();
        CHECK(nf >= 2);
        CHECK(nf <= 4);
    }
    CHECK(any_diff_seed_differs);
}

TEST_CASE("corpus clips concentrate mel energy near their generator frequencies") {
    CorpusConfig cfg;
    MelConfig mc;
    const Corpus corpus = synth_corpus(cfg, 7);
    const SynthClip& clip = corpus.train.front();
    const Tensor mel = mel_spectrogram(clip.samples, mc);
    int best = -1;
    double best_v = -1e300;
    for (int m = 0; m < mc.n_mels; ++m) {
        double s = 0.0;
        for (int fr = 0; fr < mel.dim(2); ++fr) s += mel.at(0, m, fr);
        if (s > best_v) { best_v = s; best = m; }
    }
    bool near = false;
    for (double f : clip.freqs) {
        if (std::abs(mel_band_of_frequency(mc, f) - best) <= 1) near = true;
    }
    CHECK(near);
}

TEST_CASE("chunk batches stay inside their clips and match the mel condition shape") {
    CorpusConfig cfg;
    const Corpus corpus = synth_corpus(cfg, 9);
    Rng rng(3);
    const int chunk = 512;
    const Tensor batch = sample_chunk_batch(corpus.train, 4, chunk, rng);
    CHECK(batch.dim(0) == 4);
    CHECK(batch.dim(1) == 1);
    CHECK(batch.dim(2) == chunk);
    for (double v : batch.vec()) CHECK(std::abs(v) <= cfg.max_amp + 1e-12);

    MelConfig mc;
    const Tensor cond = batch_condition(batch, mc);
    CHECK(cond.dim(0) == 4);
    CHECK(cond.dim(1) == mc.n_mels);
    CHECK(cond.dim(2) == chunk);
}

TEST_CASE("mel cache round trip preserves shape and float32 precision") {
    TempPath p("mel.cache");
    Rng rng(4);
    Tensor mel({1, 8, 17});
    for (auto& v : mel.vec()) v = rng.uniform(-20.0, 2.0);
    write_mel_cache(p.path, mel);
    const Tensor back = read_mel_cache(p.path);
    REQUIRE(back.shape() == mel.shape());
    for (std::int64_t i = 0; i < mel.size(); ++i) {
        CHECK(back[i] == doctest::Approx(mel[i]).epsilon(1e-6));
        CHECK(back[i] == static_cast<double>(static_cast<float>(mel[i])));
    }
    CHECK_THROWS_AS(read_mel_cache("/tmp/flowave_no_such.cache"), std::runtime_error);
}

TEST_CASE("manifest round trip preserves order and content") {
    TempPath p("manifest.txt");
    const std::vector<std::string> paths = {"a/one.wav", "b/two.wav", "three.wav"};
    write_manifest(p.path, paths);
    CHECK(read_manifest(p.path) == paths);
}

TEST_CASE("wav directory loader reads back written clips in sorted order") {
    const std::string dir = "/tmp/flowave_wavdir_test";
    std::filesystem::create_directories(dir);
    CorpusConfig cfg;
    cfg.n_clips = 3;
    cfg.clip_len = 256;
    const Corpus corpus = synth_corpus(cfg, 11);
    std::vector<std::vector<double>> all;
    for (const auto& split : {corpus.train, corpus.test}) {
        for (const auto& clip : split) all.push_back(clip.samples);
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        write_wav(float_to_wav(all[i], cfg.sample_rate),
                  dir + "/clip" + std::to_string(i) + ".wav");
    }
    const auto loaded = load_wav_dir(dir, cfg.sample_rate);
    REQUIRE(loaded.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        REQUIRE(loaded[i].samples.size() == all[i].size());
        for (std::size_t t = 0; t < all[i].size(); ++t) {
            CHECK(std::abs(loaded[i].samples[t] - all[i][t]) < 1.0 / 32768.0);
        }
    }
    std::filesystem::remove_all(dir);
}
