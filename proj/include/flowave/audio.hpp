#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowave/rng.hpp"
#include "flowave/tensor.hpp"

namespace flowave {

struct WavClip {
    int sample_rate = 0;
    std::vector<std::int16_t> samples;  // mono PCM-16
};

/// RIFF/WAVE PCM-16 mono reader; anything else is rejected with a message.
WavClip load_wav(const std::string& path);
void write_wav(const WavClip& clip, const std::string& path);

/// PCM-16 -> [-1, 1) by /32768.
std::vector<double> wav_to_float(const WavClip& clip);

/// Hard-clips to [-1, 1], rounds to PCM-16; clip_count (optional) receives
/// the number of out-of-range samples.
WavClip float_to_wav(const std::vector<double>& x, int sample_rate,
                     std::int64_t* clip_count = nullptr);

struct MelConfig {
    int fft_size = 256;
    int hop = 64;
    int n_mels = 16;
    double fmin = 0.0;
    double fmax = 0.0;  // 0 = Nyquist
    double floor = 1e-10;
    int sample_rate = 4000;
};

/// Triangular mel filterbank weights, shape (n_mels, fft_size/2 + 1).
Tensor mel_filterbank(const MelConfig& cfg);

/// Mel band whose filter has the largest weight at frequency f_hz.
int mel_band_of_frequency(const MelConfig& cfg, double f_hz);

/// log(max(mel power, floor)) with Hann window and reflect padding;
/// frames = ceil(T / hop). Returns (1, n_mels, frames).
Tensor mel_spectrogram(const std::vector<double>& signal, const MelConfig& cfg);

/// Nearest-frame repetition: (B, C, F) -> (B, C, F*hop). target_t must equal
/// F*hop; the condition frame at sample t is floor(t/hop).
Tensor upsample_condition(const Tensor& mel, int hop, int target_t);

// --- Synthetic corpus --------------------------------------------------

struct CorpusConfig {
    int n_clips = 1536;
    int sample_rate = 4000;
    int clip_len = 8192;
    double max_amp = 0.95;
    int test_every = 4;  // every test_every-th clip goes to the test split
};

struct SynthClip {
    std::vector<double> samples;
    std::vector<double> freqs;  // generator sinusoid frequencies (Hz)
};

struct Corpus {
    std::vector<SynthClip> train;
    std::vector<SynthClip> test;
    int sample_rate = 0;
};

/// Deterministic mixtures of 2-4 AM-modulated sinusoids, |x| <= max_amp.
/// Same seed -> byte-identical corpus; split is fixed by clip index.
Corpus synth_corpus(const CorpusConfig& cfg, std::uint64_t seed);

/// Loads every .wav in a directory (sorted by name) as a single-split corpus.
std::vector<SynthClip> load_wav_dir(const std::string& dir, int expected_sample_rate);

/// Random batch of chunk_len-sample windows, each fully inside its clip.
/// Returns (batch, 1, chunk_len).
Tensor sample_chunk_batch(const std::vector<SynthClip>& clips, int batch, int chunk_len,
                          Rng& rng);

/// Mel condition for every sequence in a batch, upsampled to the sample rate.
/// x is (B, 1, T) with T divisible by cfg.hop; returns (B, n_mels, T).
Tensor batch_condition(const Tensor& x, const MelConfig& cfg);

// --- Caching / manifests ------------------------------------------------

/// Binary mel cache: magic, dims, row-major float32 little-endian.
void write_mel_cache(const std::string& path, const Tensor& mel);
Tensor read_mel_cache(const std::string& path);

void write_manifest(const std::string& path, const std::vector<std::string>& rel_paths);
std::vector<std::string> read_manifest(const std::string& path);

}  // namespace flowave
