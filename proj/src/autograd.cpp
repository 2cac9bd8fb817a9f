#include "flowave/autograd.hpp"

#include <cmath>
#include <stdexcept>

#include "flowave/conv.hpp"

namespace flowave {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a.shape()) + " vs " +
                                    Tensor::shape_str(b.shape()));
    }
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
    auto n = std::make_unique<Node>();
    n->value = std::move(value);
    n->back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int i) {
    Node& n = node(i);
    if (!n.grad_alloc) {
        n.grad = Tensor(n.value.shape());
        n.grad_alloc = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = *nodes_[static_cast<std::size_t>(v.i)];
    if (!n.grad_alloc) {
        static const Tensor empty;
        return empty;
    }
    return n.grad;
}

Var Tape::constant(Tensor v) { return push(std::move(v)); }

Var Tape::leaf(Param& p) {
    Var v = push(p.value);
    node(v.i).leaf = &p;
    return v;
}

// Each op appends its node first, then installs the backward closure so the
// closure can capture the node's own index.

Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Tensor out = value(a);
    const Tensor& bv = value(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    Var v = push(std::move(out));
    int ai = a.i, bi = b.i, vi = v.i;
    node(vi).back = [ai, bi, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& ga = t.grad_buf(ai);
        Tensor& gb = t.grad_buf(bi);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    };
    return v;
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    Tensor out = value(a);
    const Tensor& bv = value(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    Var v = push(std::move(out));
    int ai = a.i, bi = b.i, vi = v.i;
    node(vi).back = [ai, bi, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& ga = t.grad_buf(ai);
        Tensor& gb = t.grad_buf(bi);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    };
    return v;
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "mul");
    Tensor out = value(a);
    const Tensor& bv = value(b);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    Var v = push(std::move(out));
    int ai = a.i, bi = b.i, vi = v.i;
    node(vi).back = [ai, bi, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& av = t.node(ai).value;
        const Tensor& bval = t.node(bi).value;
        Tensor& ga = t.grad_buf(ai);
        Tensor& gb = t.grad_buf(bi);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bval[i];
            gb[i] += g[i] * av[i];
        }
    };
    return v;
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::exp_(Var a) {
    Tensor out = value(a);
    for (auto& x : out.vec()) x = std::exp(x);
    Var v = push(std::move(out));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& y = t.node(vi).value;
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    };
    return v;
}

Var Tape::log_abs(Var a) {
    Tensor out = value(a);
    for (auto& x : out.vec()) x = std::log(std::abs(x));
    Var v = push(std::move(out));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& x = t.node(ai).value;
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
    };
    return v;
}

Var Tape::tanh_(Var a) {
    Tensor out = value(a);
    for (auto& x : out.vec()) x = std::tanh(x);
    Var v = push(std::move(out));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& y = t.node(vi).value;
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    };
    return v;
}

Var Tape::sigmoid_(Var a) {
    Tensor out = value(a);
    for (auto& x : out.vec()) x = 1.0 / (1.0 + std::exp(-x));
    Var v = push(std::move(out));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& y = t.node(vi).value;
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    };
    return v;
}

Var Tape::relu_(Var a) {
    Tensor out = value(a);
    for (auto& x : out.vec()) x = x > 0.0 ? x : 0.0;
    Var v = push(std::move(out));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& x = t.node(ai).value;
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
    };
    return v;
}

Var Tape::clamp(Var a, double lo, double hi) {
    Tensor out = value(a);
    for (auto& x : out.vec()) x = x < lo ? lo : (x > hi ? hi : x);
    Var v = push(std::move(out));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi, lo, hi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& x = t.node(ai).value;
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            if (x[i] > lo && x[i] < hi) ga[i] += g[i];
        }
    };
    return v;
}

Var Tape::scale(Var a, double k) {
    Tensor out = value(a);
    for (auto& x : out.vec()) x *= k;
    Var v = push(std::move(out));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi, k](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
    };
    return v;
}

Var Tape::offset(Var a, double k) {
    Tensor out = value(a);
    for (auto& x : out.vec()) x += k;
    Var v = push(std::move(out));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return v;
}

Var Tape::sum(Var a) {
    double acc = 0.0;
    for (double x : value(a).vec()) acc += x;
    Var v = push(Tensor::scalar(acc));
    int ai = a.i, vi = v.i;
    node(vi).back = [ai, vi](Tape& t) {
        const double g = t.node(vi).grad[0];
        Tensor& ga = t.grad_buf(ai);
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return v;
}

Var Tape::mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(value(a).size())); }

Var Tape::affine_channels(Var x, Var s, Var b) {
    const Tensor& xv = value(x);
    const Tensor& sv = value(s);
    const Tensor& bv = value(b);
    if (xv.rank() != 3 || sv.rank() != 1 || bv.rank() != 1 || sv.dim(0) != xv.dim(1) ||
        bv.dim(0) != xv.dim(1)) {
        throw std::invalid_argument("affine_channels: expected x(B,C,T), s(C), b(C)");
    }
    const int B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
    Tensor out(xv.shape());
    for (int bb = 0; bb < B; ++bb) {
        for (int c = 0; c < C; ++c) {
            const double sc = sv[c], bc = bv[c];
            const double* xr = xv.data() + xv.idx3(bb, c, 0);
            double* orow = out.data() + out.idx3(bb, c, 0);
            for (int t = 0; t < T; ++t) orow[t] = xr[t] * sc + bc;
        }
    }
    Var v = push(std::move(out));
    int xi = x.i, si = s.i, bi = b.i, vi = v.i;
    node(vi).back = [xi, si, bi, vi, B, C, T](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& xval = t.node(xi).value;
        const Tensor& sval = t.node(si).value;
        Tensor& gx = t.grad_buf(xi);
        Tensor& gs = t.grad_buf(si);
        Tensor& gb = t.grad_buf(bi);
        for (int bb = 0; bb < B; ++bb) {
            for (int c = 0; c < C; ++c) {
                const double sc = sval[c];
                const double* gr = g.data() + g.idx3(bb, c, 0);
                const double* xr = xval.data() + xval.idx3(bb, c, 0);
                double* gxr = gx.data() + gx.idx3(bb, c, 0);
                double accS = 0.0, accB = 0.0;
                for (int tt = 0; tt < T; ++tt) {
                    gxr[tt] += gr[tt] * sc;
                    accS += gr[tt] * xr[tt];
                    accB += gr[tt];
                }
                gs[c] += accS;
                gb[c] += accB;
            }
        }
    };
    return v;
}

Var Tape::conv1d(Var x, Var w, Var bias, int dilation, bool causal) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const double* bptr = bias.valid() ? value(bias).data() : nullptr;
    Tensor out;
    conv1d_forward(xv, wv, bptr, dilation, causal, out);
    Var v = push(std::move(out));
    int xi = x.i, wi = w.i, bi = bias.valid() ? bias.i : -1, vi = v.i;
    node(vi).back = [xi, wi, bi, vi, dilation, causal](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& xval = t.node(xi).value;
        const Tensor& wval = t.node(wi).value;
        conv1d_backward_input(g, wval, dilation, causal, t.grad_buf(xi));
        double* dbias = bi >= 0 ? t.grad_buf(bi).data() : nullptr;
        conv1d_backward_weights(xval, g, dilation, causal, t.grad_buf(wi), dbias);
    };
    return v;
}

Var Tape::slice_channels(Var x, int c0, int c1) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3 || c0 < 0 || c1 > xv.dim(1) || c0 >= c1) {
        throw std::invalid_argument("slice_channels: bad range");
    }
    const int B = xv.dim(0), T = xv.dim(2), C = c1 - c0;
    Tensor out({B, C, T});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t) out.at(b, c, t) = xv.at(b, c0 + c, t);
    Var v = push(std::move(out));
    int xi = x.i, vi = v.i;
    node(vi).back = [xi, vi, c0, B, C, T](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& gx = t.grad_buf(xi);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int tt = 0; tt < T; ++tt) gx.at(b, c0 + c, tt) += g.at(b, c, tt);
    };
    return v;
}

Var Tape::concat_channels(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2)) {
        throw std::invalid_argument("concat_channels: incompatible shapes");
    }
    const int B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), T = av.dim(2);
    Tensor out({B, Ca + Cb, T});
    for (int bb = 0; bb < B; ++bb) {
        for (int c = 0; c < Ca; ++c)
            for (int t = 0; t < T; ++t) out.at(bb, c, t) = av.at(bb, c, t);
        for (int c = 0; c < Cb; ++c)
            for (int t = 0; t < T; ++t) out.at(bb, Ca + c, t) = bv.at(bb, c, t);
    }
    Var v = push(std::move(out));
    int ai = a.i, bi = b.i, vi = v.i;
    node(vi).back = [ai, bi, vi, B, Ca, Cb, T](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& ga = t.grad_buf(ai);
        Tensor& gb = t.grad_buf(bi);
        for (int bb = 0; bb < B; ++bb) {
            for (int c = 0; c < Ca; ++c)
                for (int tt = 0; tt < T; ++tt) ga.at(bb, c, tt) += g.at(bb, c, tt);
            for (int c = 0; c < Cb; ++c)
                for (int tt = 0; tt < T; ++tt) gb.at(bb, c, tt) += g.at(bb, Ca + c, tt);
        }
    };
    return v;
}

namespace {

// squeeze: (B,C,T) -> (B,2C,T/2); even time indices land in channels [0,C),
// odd indices in channels [C,2C).
void squeeze_values(const Tensor& in, Tensor& out) {
    const int B = in.dim(0), C = in.dim(1), T = in.dim(2);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int t2 = 0; t2 < T / 2; ++t2) {
                out.at(b, c, t2) = in.at(b, c, 2 * t2);
                out.at(b, C + c, t2) = in.at(b, c, 2 * t2 + 1);
            }
}

void unsqueeze_values(const Tensor& in, Tensor& out) {
    const int B = in.dim(0), C2 = in.dim(1), Th = in.dim(2);
    const int C = C2 / 2;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int t2 = 0; t2 < Th; ++t2) {
                out.at(b, c, 2 * t2) = in.at(b, c, t2);
                out.at(b, c, 2 * t2 + 1) = in.at(b, C + c, t2);
            }
}

}  // namespace

Var Tape::squeeze2(Var x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) throw std::invalid_argument("squeeze2: rank-3 input required");
    if (xv.dim(2) % 2 != 0) {
        throw std::invalid_argument("squeeze2: time length " + std::to_string(xv.dim(2)) +
                                    " is odd");
    }
    Tensor out({xv.dim(0), 2 * xv.dim(1), xv.dim(2) / 2});
    squeeze_values(xv, out);
    Var v = push(std::move(out));
    int xi = x.i, vi = v.i;
    node(vi).back = [xi, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& gx = t.grad_buf(xi);
        Tensor tmp(gx.shape());
        unsqueeze_values(g, tmp);
        for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += tmp[i];
    };
    return v;
}

Var Tape::unsqueeze2(Var x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3 || xv.dim(1) % 2 != 0) {
        throw std::invalid_argument("unsqueeze2: rank-3 input with even channel count required");
    }
    Tensor out({xv.dim(0), xv.dim(1) / 2, xv.dim(2) * 2});
    unsqueeze_values(xv, out);
    Var v = push(std::move(out));
    int xi = x.i, vi = v.i;
    node(vi).back = [xi, vi](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& gx = t.grad_buf(xi);
        Tensor tmp(gx.shape());
        squeeze_values(g, tmp);
        for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] += tmp[i];
    };
    return v;
}

Var Tape::change_order(Var x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3 || xv.dim(1) % 2 != 0) {
        throw std::invalid_argument("change_order: even channel count required, got C=" +
                                    std::to_string(xv.rank() == 3 ? xv.dim(1) : -1));
    }
    const int B = xv.dim(0), C = xv.dim(1), T = xv.dim(2), H = C / 2;
    Tensor out(xv.shape());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t) out.at(b, c, t) = xv.at(b, (c + H) % C, t);
    Var v = push(std::move(out));
    int xi = x.i, vi = v.i;
    node(vi).back = [xi, vi, B, C, T, H](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& gx = t.grad_buf(xi);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int tt = 0; tt < T; ++tt) gx.at(b, (c + H) % C, tt) += g.at(b, c, tt);
    };
    return v;
}

Var Tape::shift_time_right(Var x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) throw std::invalid_argument("shift_time_right: rank-3 input required");
    const int B = xv.dim(0), C = xv.dim(1), T = xv.dim(2);
    Tensor out(xv.shape());
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int t = 1; t < T; ++t) out.at(b, c, t) = xv.at(b, c, t - 1);
    Var v = push(std::move(out));
    int xi = x.i, vi = v.i;
    node(vi).back = [xi, vi, B, C, T](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        Tensor& gx = t.grad_buf(xi);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int tt = 1; tt < T; ++tt) gx.at(b, c, tt - 1) += g.at(b, c, tt);
    };
    return v;
}

namespace {

inline int reflect_index(int s, int T) {
    // mirror without repeating the edge sample
    while (s < 0 || s >= T) {
        if (s < 0) s = -s;
        if (s >= T) s = 2 * T - 2 - s;
    }
    return s;
}

}  // namespace

Var Tape::stft_power(Var x, int fft_size, int hop) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3 || xv.dim(1) != 1) {
        throw std::invalid_argument("stft_power: input must be (B,1,T)");
    }
    const int B = xv.dim(0), T = xv.dim(2);
    if (T < fft_size) throw std::invalid_argument("stft_power: signal shorter than FFT size");
    const int n_frames = (T + hop - 1) / hop;
    const int n_bins = fft_size / 2 + 1;

    std::vector<double> window(static_cast<std::size_t>(fft_size));
    for (int n = 0; n < fft_size; ++n) {
        window[static_cast<std::size_t>(n)] =
            0.5 - 0.5 * std::cos(2.0 * M_PI * n / (fft_size - 1));
    }
    std::vector<double> cos_tab(static_cast<std::size_t>(n_bins * fft_size));
    std::vector<double> sin_tab(static_cast<std::size_t>(n_bins * fft_size));
    for (int j = 0; j < n_bins; ++j) {
        for (int n = 0; n < fft_size; ++n) {
            const double ang = 2.0 * M_PI * j * n / fft_size;
            cos_tab[static_cast<std::size_t>(j * fft_size + n)] = std::cos(ang);
            sin_tab[static_cast<std::size_t>(j * fft_size + n)] = std::sin(ang);
        }
    }

    auto frame_windowed = [&](const double* sig, int fi, std::vector<double>& buf) {
        for (int n = 0; n < fft_size; ++n) {
            const int s = reflect_index(fi * hop + n - fft_size / 2, T);
            buf[static_cast<std::size_t>(n)] = window[static_cast<std::size_t>(n)] * sig[s];
        }
    };

    Tensor out({B, n_frames, n_bins});
    std::vector<double> buf(static_cast<std::size_t>(fft_size));
    for (int b = 0; b < B; ++b) {
        const double* sig = xv.data() + xv.idx3(b, 0, 0);
        for (int fi = 0; fi < n_frames; ++fi) {
            frame_windowed(sig, fi, buf);
            for (int j = 0; j < n_bins; ++j) {
                double re = 0.0, im = 0.0;
                const double* ct = cos_tab.data() + j * fft_size;
                const double* st = sin_tab.data() + j * fft_size;
                for (int n = 0; n < fft_size; ++n) {
                    re += buf[static_cast<std::size_t>(n)] * ct[n];
                    im -= buf[static_cast<std::size_t>(n)] * st[n];
                }
                out[(static_cast<std::int64_t>(b) * n_frames + fi) * n_bins + j] =
                    re * re + im * im;
            }
        }
    }

    Var v = push(std::move(out));
    int xi = x.i, vi = v.i;
    node(vi).back = [xi, vi, B, T, n_frames, n_bins, fft_size, hop, window, cos_tab,
                     sin_tab](Tape& t) {
        const Tensor& g = t.node(vi).grad;
        const Tensor& xval = t.node(xi).value;
        Tensor& gx = t.grad_buf(xi);
        std::vector<double> buf(static_cast<std::size_t>(fft_size));
        for (int b = 0; b < B; ++b) {
            const double* sig = xval.data() + xval.idx3(b, 0, 0);
            double* gsig = gx.data() + gx.idx3(b, 0, 0);
            for (int fi = 0; fi < n_frames; ++fi) {
                for (int n = 0; n < fft_size; ++n) {
                    const int s = reflect_index(fi * hop + n - fft_size / 2, T);
                    buf[static_cast<std::size_t>(n)] =
                        window[static_cast<std::size_t>(n)] * sig[s];
                }
                for (int j = 0; j < n_bins; ++j) {
                    const double gj = g[(static_cast<std::int64_t>(b) * n_frames + fi) * n_bins + j];
                    if (gj == 0.0) continue;
                    double re = 0.0, im = 0.0;
                    const double* ct = cos_tab.data() + j * fft_size;
                    const double* st = sin_tab.data() + j * fft_size;
                    for (int n = 0; n < fft_size; ++n) {
                        re += buf[static_cast<std::size_t>(n)] * ct[n];
                        im -= buf[static_cast<std::size_t>(n)] * st[n];
                    }
                    for (int n = 0; n < fft_size; ++n) {
                        const int s = reflect_index(fi * hop + n - fft_size / 2, T);
                        gsig[s] += gj * 2.0 * (re * ct[n] - im * st[n]) *
                                   window[static_cast<std::size_t>(n)];
                    }
                }
            }
        }
    };
    return v;
}

void Tape::backward(Var loss) {
    if (!loss.valid()) throw std::invalid_argument("backward: invalid loss node");
    if (!value(loss).is_scalar()) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    Tensor::shape_str(value(loss).shape()));
    }
    grad_buf(loss.i)[0] = 1.0;
    for (int i = loss.i; i >= 0; --i) {
        Node& n = node(i);
        if (!n.grad_alloc) continue;  // not reachable from the loss
        if (n.back) n.back(*this);
        if (n.leaf) {
            Tensor& pg = n.leaf->grad;
            for (std::int64_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
        }
    }
}

Var gaussian_logpdf_sum(Tape& t, Var x, Var mu, Var log_sigma) {
    Var diff = t.sub(x, mu);
    Var z = t.mul(diff, t.exp_(t.neg(log_sigma)));
    Var quad = t.scale(t.mul(z, z), -0.5);
    Var term = t.sub(quad, log_sigma);
    return t.sum(t.offset(term, -0.5 * std::log(2.0 * M_PI)));
}

Var std_gaussian_logpdf_sum(Tape& t, Var x) {
    Var quad = t.scale(t.mul(x, x), -0.5);
    return t.sum(t.offset(quad, -0.5 * std::log(2.0 * M_PI)));
}

Var mse(Tape& t, Var a, Var b) {
    Var d = t.sub(a, b);
    return t.mean(t.mul(d, d));
}

}  // namespace flowave
