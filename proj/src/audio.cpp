#include "flowave/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace flowave {

namespace {

constexpr char kMelCacheMagic[8] = {'F', 'W', 'M', 'E', 'L', '0', '1', '\n'};

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

}  // namespace

WavClip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_wav: cannot open " + path);
    char riff[4], wave[4];
    in.read(riff, 4);
    read_u32(in);  // file size, unused
    in.read(wave, 4);
    if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
        throw std::runtime_error("load_wav: not a RIFF/WAVE file: " + path);
    }
    WavClip clip;
    bool have_fmt = false, have_data = false;
    while (in && !(have_fmt && have_data)) {
        char id[4];
        in.read(id, 4);
        if (!in) break;
        std::uint32_t sz = read_u32(in);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            const std::uint16_t format = read_u16(in);
            const std::uint16_t channels = read_u16(in);
            clip.sample_rate = static_cast<int>(read_u32(in));
            read_u32(in);  // byte rate
            read_u16(in);  // block align
            const std::uint16_t bits = read_u16(in);
            if (sz > 16) in.seekg(sz - 16, std::ios::cur);
            if (format != 1) throw std::runtime_error("load_wav: not PCM: " + path);
            if (channels != 1) {
                throw std::runtime_error("load_wav: only mono supported, file has " +
                                         std::to_string(channels) + " channels: " + path);
            }
            if (bits != 16) {
                throw std::runtime_error("load_wav: only 16-bit PCM supported, file has " +
                                         std::to_string(bits) + " bits: " + path);
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            if (!have_fmt) throw std::runtime_error("load_wav: data before fmt: " + path);
            const std::size_t n = sz / 2;
            clip.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                clip.samples[i] = static_cast<std::int16_t>(read_u16(in));
            }
            if (sz % 2) in.seekg(1, std::ios::cur);
            have_data = true;
        } else {
            in.seekg(sz + (sz % 2), std::ios::cur);  // chunks are word-aligned
        }
    }
    if (!have_fmt || !have_data) {
        throw std::runtime_error("load_wav: missing fmt or data chunk: " + path);
    }
    return clip;
}

void write_wav(const WavClip& clip, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_wav: cannot open " + path);
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1);  // PCM
    write_u16(out, 1);  // mono
    write_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    write_u32(out, static_cast<std::uint32_t>(clip.sample_rate * 2));
    write_u16(out, 2);   // block align
    write_u16(out, 16);  // bits
    out.write("data", 4);
    write_u32(out, data_bytes);
    for (std::int16_t s : clip.samples) {
        write_u16(out, static_cast<std::uint16_t>(s));
    }
    if (!out) throw std::runtime_error("write_wav: write failed: " + path);
}

std::vector<double> wav_to_float(const WavClip& clip) {
    std::vector<double> x(clip.samples.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = clip.samples[i] / 32768.0;
    return x;
}

WavClip float_to_wav(const std::vector<double>& x, int sample_rate,
                     std::int64_t* clip_count) {
    WavClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(x.size());
    std::int64_t clipped = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x[i];
        if (v < -1.0 || v > 1.0) {
            ++clipped;
            v = std::min(1.0, std::max(-1.0, v));
        }
        const double scaled = std::min(32767.0, std::round(v * 32768.0));
        clip.samples[i] = static_cast<std::int16_t>(scaled);
    }
    if (clip_count) *clip_count = clipped;
    return clip;
}

Tensor mel_filterbank(const MelConfig& cfg) {
    if (cfg.n_mels < 1) throw std::invalid_argument("mel_filterbank: bands must be >= 1");
    const int n_bins = cfg.fft_size / 2 + 1;
    const double fmax = cfg.fmax > 0.0 ? cfg.fmax : cfg.sample_rate / 2.0;
    const double mlo = hz_to_mel(cfg.fmin);
    const double mhi = hz_to_mel(fmax);
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i) {
        edges[static_cast<std::size_t>(i)] =
            mel_to_hz(mlo + (mhi - mlo) * i / (cfg.n_mels + 1));
    }
    Tensor fb({1, cfg.n_mels, n_bins});
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double f0 = edges[static_cast<std::size_t>(m)];
        const double f1 = edges[static_cast<std::size_t>(m) + 1];
        const double f2 = edges[static_cast<std::size_t>(m) + 2];
        for (int j = 0; j < n_bins; ++j) {
            const double f = static_cast<double>(j) * cfg.sample_rate / cfg.fft_size;
            double w = 0.0;
            if (f > f0 && f < f2) {
                w = f <= f1 ? (f - f0) / (f1 - f0) : (f2 - f) / (f2 - f1);
            }
            fb.at(0, m, j) = w;
        }
    }
    return fb;
}

int mel_band_of_frequency(const MelConfig& cfg, double f_hz) {
    const Tensor fb = mel_filterbank(cfg);
    const int n_bins = cfg.fft_size / 2 + 1;
    // Evaluate each triangle at f_hz directly via linear interpolation on bins.
    const double bin = f_hz * cfg.fft_size / cfg.sample_rate;
    const int j0 = std::min(n_bins - 2, std::max(0, static_cast<int>(bin)));
    const double frac = bin - j0;
    int best = 0;
    double best_w = -1.0;
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double w = (1.0 - frac) * fb.at(0, m, j0) + frac * fb.at(0, m, j0 + 1);
        if (w > best_w) {
            best_w = w;
            best = m;
        }
    }
    return best;
}

Tensor mel_spectrogram(const std::vector<double>& signal, const MelConfig& cfg) {
    const int T = static_cast<int>(signal.size());
    if (T < cfg.fft_size) {
        throw std::invalid_argument("mel_spectrogram: signal shorter than FFT size");
    }
    if (cfg.floor <= 0.0) throw std::invalid_argument("mel_spectrogram: floor must be > 0");
    const int n_frames = (T + cfg.hop - 1) / cfg.hop;
    const int n_bins = cfg.fft_size / 2 + 1;
    const Tensor fb = mel_filterbank(cfg);

    std::vector<double> window(static_cast<std::size_t>(cfg.fft_size));
    for (int n = 0; n < cfg.fft_size; ++n) {
        window[static_cast<std::size_t>(n)] =
            0.5 - 0.5 * std::cos(2.0 * M_PI * n / (cfg.fft_size - 1));
    }

    Tensor out({1, cfg.n_mels, n_frames});
    std::vector<double> buf(static_cast<std::size_t>(cfg.fft_size));
    std::vector<double> power(static_cast<std::size_t>(n_bins));
    for (int fi = 0; fi < n_frames; ++fi) {
        for (int n = 0; n < cfg.fft_size; ++n) {
            const int s = reflect_index(fi * cfg.hop + n - cfg.fft_size / 2, T);
            buf[static_cast<std::size_t>(n)] =
                window[static_cast<std::size_t>(n)] * signal[static_cast<std::size_t>(s)];
        }
        for (int j = 0; j < n_bins; ++j) {
            double re = 0.0, im = 0.0;
            for (int n = 0; n < cfg.fft_size; ++n) {
                const double ang = 2.0 * M_PI * j * n / cfg.fft_size;
                re += buf[static_cast<std::size_t>(n)] * std::cos(ang);
                im -= buf[static_cast<std::size_t>(n)] * std::sin(ang);
            }
            power[static_cast<std::size_t>(j)] = re * re + im * im;
        }
        for (int m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            for (int j = 0; j < n_bins; ++j) acc += fb.at(0, m, j) * power[static_cast<std::size_t>(j)];
            out.at(0, m, fi) = std::log(std::max(acc, cfg.floor));
        }
    }
    return out;
}

Tensor upsample_condition(const Tensor& mel, int hop, int target_t) {
    if (mel.rank() != 3) throw std::invalid_argument("upsample_condition: mel must be rank 3");
    const int B = mel.dim(0), C = mel.dim(1), F = mel.dim(2);
    if (target_t != F * hop) {
        throw std::invalid_argument("upsample_condition: target length " +
                                    std::to_string(target_t) + " != frames*hop = " +
                                    std::to_string(F * hop));
    }
    Tensor out({B, C, target_t});
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            for (int t = 0; t < target_t; ++t) out.at(b, c, t) = mel.at(b, c, t / hop);
        }
    }
    return out;
}

Corpus synth_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
    Corpus corpus;
    corpus.sample_rate = cfg.sample_rate;
    for (int i = 0; i < cfg.n_clips; ++i) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i) + 1));
        const int n_sines = 2 + static_cast<int>(rng.uniform() * 3.0);  // 2..4
        SynthClip clip;
        clip.samples.assign(static_cast<std::size_t>(cfg.clip_len), 0.0);
        std::vector<double> amp(static_cast<std::size_t>(n_sines));
        std::vector<double> mod_depth(static_cast<std::size_t>(n_sines));
        std::vector<double> mod_freq(static_cast<std::size_t>(n_sines));
        std::vector<double> phase(static_cast<std::size_t>(n_sines));
        double peak_bound = 0.0;
        for (int s = 0; s < n_sines; ++s) {
            const double nyq = cfg.sample_rate / 2.0;
            clip.freqs.push_back(100.0 + rng.uniform() * (0.8 * nyq - 100.0));
            amp[static_cast<std::size_t>(s)] = 0.3 + 0.7 * rng.uniform();
            mod_depth[static_cast<std::size_t>(s)] = 0.5 * rng.uniform();
            mod_freq[static_cast<std::size_t>(s)] = 0.5 + 4.0 * rng.uniform();
            phase[static_cast<std::size_t>(s)] = 2.0 * M_PI * rng.uniform();
            peak_bound += amp[static_cast<std::size_t>(s)] *
                          (1.0 + mod_depth[static_cast<std::size_t>(s)]);
        }
        const double gain = cfg.max_amp * (0.6 + 0.4 * rng.uniform()) / peak_bound;
        for (int t = 0; t < cfg.clip_len; ++t) {
            const double tt = static_cast<double>(t) / cfg.sample_rate;
            double v = 0.0;
            for (int s = 0; s < n_sines; ++s) {
                const std::size_t k = static_cast<std::size_t>(s);
                const double env = 1.0 + mod_depth[k] * std::sin(2.0 * M_PI * mod_freq[k] * tt);
                v += amp[k] * env * std::sin(2.0 * M_PI * clip.freqs[k] * tt + phase[k]);
            }
            clip.samples[static_cast<std::size_t>(t)] = gain * v;
        }
        if (cfg.test_every > 0 && (i % cfg.test_every) == cfg.test_every - 1) {
            corpus.test.push_back(std::move(clip));
        } else {
            corpus.train.push_back(std::move(clip));
        }
    }
    return corpus;
}

std::vector<SynthClip> load_wav_dir(const std::string& dir, int expected_sample_rate) {
    std::vector<std::string> paths;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".wav") paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
    std::vector<SynthClip> clips;
    for (const auto& p : paths) {
        const WavClip w = load_wav(p);
        if (expected_sample_rate > 0 && w.sample_rate != expected_sample_rate) {
            throw std::runtime_error("load_wav_dir: " + p + " has sample rate " +
                                     std::to_string(w.sample_rate) + ", expected " +
                                     std::to_string(expected_sample_rate));
        }
        SynthClip c;
        c.samples = wav_to_float(w);
        clips.push_back(std::move(c));
    }
    return clips;
}

Tensor sample_chunk_batch(const std::vector<SynthClip>& clips, int batch, int chunk_len,
                          Rng& rng) {
    if (clips.empty()) throw std::invalid_argument("sample_chunk_batch: empty clip list");
    Tensor x({batch, 1, chunk_len});
    for (int b = 0; b < batch; ++b) {
        const auto& clip =
            clips[static_cast<std::size_t>(rng.uniform() * static_cast<double>(clips.size()))];
        const int T = static_cast<int>(clip.samples.size());
        if (T < chunk_len) {
            throw std::invalid_argument("sample_chunk_batch: clip shorter than chunk");
        }
        const int max_start = T - chunk_len;
        const int start = static_cast<int>(rng.uniform() * static_cast<double>(max_start + 1));
        for (int t = 0; t < chunk_len; ++t) {
            x.at(b, 0, t) = clip.samples[static_cast<std::size_t>(start + t)];
        }
    }
    return x;
}

Tensor batch_condition(const Tensor& x, const MelConfig& cfg) {
    if (x.rank() != 3 || x.dim(1) != 1) {
        throw std::invalid_argument("batch_condition: x must be (B,1,T), got " + x.shape_str());
    }
    const int B = x.dim(0), T = x.dim(2);
    if (T % cfg.hop != 0) {
        throw std::invalid_argument("batch_condition: T must be divisible by hop");
    }
    Tensor cond({B, cfg.n_mels, T});
    std::vector<double> sig(static_cast<std::size_t>(T));
    for (int b = 0; b < B; ++b) {
        for (int t = 0; t < T; ++t) sig[static_cast<std::size_t>(t)] = x.at(b, 0, t);
        const Tensor mel = mel_spectrogram(sig, cfg);
        const Tensor up = upsample_condition(mel, cfg.hop, T);
        for (int c = 0; c < cfg.n_mels; ++c) {
            for (int t = 0; t < T; ++t) cond.at(b, c, t) = up.at(0, c, t);
        }
    }
    return cond;
}

void write_mel_cache(const std::string& path, const Tensor& mel) {
    if (mel.rank() != 3) throw std::invalid_argument("write_mel_cache: mel must be rank 3");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_mel_cache: cannot open " + path);
    out.write(kMelCacheMagic, 8);
    write_u32(out, static_cast<std::uint32_t>(mel.dim(0)));
    write_u32(out, static_cast<std::uint32_t>(mel.dim(1)));
    write_u32(out, static_cast<std::uint32_t>(mel.dim(2)));
    for (double v : mel.vec()) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(out, bits);
    }
    if (!out) throw std::runtime_error("write_mel_cache: write failed: " + path);
}

Tensor read_mel_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_mel_cache: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMelCacheMagic, 8) != 0) {
        throw std::runtime_error("read_mel_cache: bad magic in " + path);
    }
    const int d0 = static_cast<int>(read_u32(in));
    const int d1 = static_cast<int>(read_u32(in));
    const int d2 = static_cast<int>(read_u32(in));
    Tensor mel({d0, d1, d2});
    for (auto& v : mel.vec()) {
        const std::uint32_t bits = read_u32(in);
        float f;
        std::memcpy(&f, &bits, 4);
        v = static_cast<double>(f);
    }
    if (!in) throw std::runtime_error("read_mel_cache: truncated file: " + path);
    return mel;
}

void write_manifest(const std::string& path, const std::vector<std::string>& rel_paths) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
    for (const auto& p : rel_paths) out << p << '\n';
}

std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

}  // namespace flowave
