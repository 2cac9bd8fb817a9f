#include "flowave/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowave {

namespace {

constexpr char kMagic[4] = {'F', 'W', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(buf, bits);
}

void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.append(s);
}

class Reader {
public:
    Reader(const std::string& buf, std::size_t pos) : buf_(buf), pos_(pos) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }

    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    const std::string& buf_;
    std::size_t pos_;
};

}  // namespace

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t n) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xffffffffu;
    for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

void Checkpoint::set(const std::string& key, const std::string& value) {
    for (auto& kv : config) {
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    }
    config.emplace_back(key, value);
}

const std::string* Checkpoint::get(const std::string& key) const {
    for (const auto& kv : config) {
        if (kv.first == key) return &kv.second;
    }
    return nullptr;
}

std::string Checkpoint::get_or(const std::string& key, const std::string& fallback) const {
    const std::string* v = get(key);
    return v ? *v : fallback;
}

void Checkpoint::add_tensor(const std::string& name, Tensor t) {
    for (const auto& nt : tensors) {
        if (nt.first == name) {
            throw std::invalid_argument("checkpoint: duplicate tensor name " + name);
        }
    }
    tensors.emplace_back(name, std::move(t));
}

const Tensor* Checkpoint::find_tensor(const std::string& name) const {
    for (const auto& nt : tensors) {
        if (nt.first == name) return &nt.second;
    }
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_str(buf, ckpt.kind);
    put_u64(buf, static_cast<std::uint64_t>(ckpt.step));
    put_u32(buf, static_cast<std::uint32_t>(ckpt.config.size()));
    for (const auto& kv : ckpt.config) {
        put_str(buf, kv.first);
        put_str(buf, kv.second);
    }
    put_u32(buf, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& nt : ckpt.tensors) {
        put_str(buf, nt.first);
        const Tensor& t = nt.second;
        put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) put_u32(buf, static_cast<std::uint32_t>(t.dim(d)));
        for (double v : t.vec()) put_f64(buf, v);
    }
    const std::uint32_t crc =
        crc32_ieee(reinterpret_cast<const unsigned char*>(buf.data()), buf.size());
    put_u32(buf, crc);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    }
    const std::uint32_t stored_crc =
        static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 4])) |
        (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 3])) << 8) |
        (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 2])) << 16) |
        (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[buf.size() - 1])) << 24);
    const std::uint32_t crc =
        crc32_ieee(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4);
    if (crc != stored_crc) {
        throw std::runtime_error("load_checkpoint: CRC mismatch (corrupt file): " + path);
    }

    Reader r(buf, 4);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version) + " in " + path);
    }
    Checkpoint ckpt;
    ckpt.kind = r.str();
    ckpt.step = static_cast<std::int64_t>(r.u64());
    const std::uint32_t n_cfg = r.u32();
    for (std::uint32_t i = 0; i < n_cfg; ++i) {
        std::string k = r.str();
        std::string v = r.str();
        ckpt.config.emplace_back(std::move(k), std::move(v));
    }
    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
        Tensor t(shape);
        for (auto& v : t.vec()) v = r.f64();
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void pack_params(Checkpoint& ckpt, const std::vector<Param*>& params) {
    for (const Param* p : params) ckpt.add_tensor(p->name, p->value);
}

void unpack_params(const Checkpoint& ckpt, const std::vector<Param*>& params) {
    for (Param* p : params) {
        const Tensor* t = ckpt.find_tensor(p->name);
        if (!t) throw std::runtime_error("checkpoint: missing parameter " + p->name);
        if (t->shape() != p->value.shape()) {
            throw std::runtime_error("checkpoint: shape mismatch for " + p->name + ": file has " +
                                     t->shape_str() + ", model expects " + p->value.shape_str());
        }
        p->value = *t;
    }
}

void pack_adam(Checkpoint& ckpt, const AdamState& state) {
    ckpt.set("adam.step", std::to_string(state.step));
    std::ostringstream lr, decay;
    lr.precision(17);
    lr << state.config.lr;
    decay.precision(17);
    decay << state.config.decay;
    ckpt.set("adam.lr", lr.str());
    ckpt.set("adam.decay", decay.str());
    ckpt.set("adam.decay_interval", std::to_string(state.config.decay_interval));
    for (const auto& kv : state.m) ckpt.add_tensor("adam.m:" + kv.first, kv.second);
    for (const auto& kv : state.v) ckpt.add_tensor("adam.v:" + kv.first, kv.second);
}

void unpack_adam(const Checkpoint& ckpt, AdamState& state) {
    state.step = std::stoll(ckpt.get_or("adam.step", "0"));
    state.config.lr = std::stod(ckpt.get_or("adam.lr", "0.001"));
    state.config.decay = std::stod(ckpt.get_or("adam.decay", "0.5"));
    state.config.decay_interval = std::stoi(ckpt.get_or("adam.decay_interval", "2000"));
    state.m.clear();
    state.v.clear();
    for (const auto& nt : ckpt.tensors) {
        if (nt.first.rfind("adam.m:", 0) == 0) {
            state.m.emplace(nt.first.substr(7), nt.second);
        } else if (nt.first.rfind("adam.v:", 0) == 0) {
            state.v.emplace(nt.first.substr(7), nt.second);
        }
    }
}

}  // namespace flowave
