#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "flowave/tensor.hpp"

namespace flowave {

// 1-D dilated convolution with same-length (zero padded) output.
//
// Tap offsets relative to the output position t:
//   causal:      (k - (K-1)) * dilation, k = 0..K-1   (window [t-(K-1)d, t])
//   non-causal:  (k - (K-1)/2) * dilation, K odd      (window centered at t)
inline int conv_tap_offset(int k, int K, int dilation, bool causal) {
    return causal ? (k - (K - 1)) * dilation : (k - (K - 1) / 2) * dilation;
}

inline void conv_check_args(const std::vector<int>& in_shape, const std::vector<int>& w_shape,
                            int dilation, bool causal) {
    if (in_shape.size() != 3) throw std::invalid_argument("conv1d: input must be rank-3 (B,C,T)");
    if (w_shape.size() != 3) throw std::invalid_argument("conv1d: weights must be rank-3 (Cout,Cin,K)");
    if (dilation < 1) throw std::invalid_argument("conv1d: dilation must be >= 1");
    if (in_shape[1] != w_shape[1]) {
        throw std::invalid_argument("conv1d: input channels " + std::to_string(in_shape[1]) +
                                    " do not match weight Cin " + std::to_string(w_shape[1]));
    }
    if (!causal && w_shape[2] % 2 == 0) {
        throw std::invalid_argument("conv1d: non-causal mode requires odd kernel size, got K=" +
                                    std::to_string(w_shape[2]));
    }
}

/// out[b,co,t] = bias[co] + sum_{ci,k} w[co,ci,k] * in[b,ci,t+off(k)], zero outside [0,T).
template <typename S>
void conv1d_forward(const TensorT<S>& in, const TensorT<S>& w, const std::type_identity_t<S>* bias, int dilation,
                    bool causal, TensorT<S>& out) {
    conv_check_args(in.shape(), w.shape(), dilation, causal);
    const int B = in.dim(0), Cin = in.dim(1), T = in.dim(2);
    const int Cout = w.dim(0), K = w.dim(2);
    if (out.shape() != std::vector<int>{B, Cout, T}) out = TensorT<S>({B, Cout, T});

    const int off_lo = conv_tap_offset(0, K, dilation, causal);
    const int off_hi = conv_tap_offset(K - 1, K, dilation, causal);
    const int lo = std::max(0, -off_lo);
    const int hi = std::min(T, T - off_hi);

    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Cout; ++co) {
            S* orow = out.data() + out.idx3(b, co, 0);
            const S bv = bias ? bias[co] : S(0);
            std::fill(orow, orow + T, bv);
            for (int ci = 0; ci < Cin; ++ci) {
                const S* irow = in.data() + in.idx3(b, ci, 0);
                const S* wp = w.data() + (static_cast<std::int64_t>(co) * Cin + ci) * K;
                // boundary region: per-tap with range clipping
                auto edge = [&](int t0, int t1) {
                    for (int k = 0; k < K; ++k) {
                        const int off = conv_tap_offset(k, K, dilation, causal);
                        const int a = std::max(t0, -off);
                        const int z = std::min(t1, T - off);
                        const S* src = irow + off;
                        for (int t = a; t < z; ++t) orow[t] += wp[k] * src[t];
                    }
                };
                if (lo >= hi) {
                    edge(0, T);
                    continue;
                }
                edge(0, lo);
                edge(hi, T);
                // interior: all taps valid, fused over k
                if (K == 1) {
                    const S w0 = wp[0];
                    const S* s0 = irow + conv_tap_offset(0, K, dilation, causal);
                    for (int t = lo; t < hi; ++t) orow[t] += w0 * s0[t];
                } else if (K == 2) {
                    const S w0 = wp[0], w1 = wp[1];
                    const S* s0 = irow + conv_tap_offset(0, K, dilation, causal);
                    const S* s1 = irow + conv_tap_offset(1, K, dilation, causal);
                    for (int t = lo; t < hi; ++t) orow[t] += w0 * s0[t] + w1 * s1[t];
                } else if (K == 3) {
                    const S w0 = wp[0], w1 = wp[1], w2 = wp[2];
                    const S* s0 = irow + conv_tap_offset(0, K, dilation, causal);
                    const S* s1 = irow + conv_tap_offset(1, K, dilation, causal);
                    const S* s2 = irow + conv_tap_offset(2, K, dilation, causal);
                    for (int t = lo; t < hi; ++t) {
                        orow[t] += w0 * s0[t] + w1 * s1[t] + w2 * s2[t];
                    }
                } else {
                    for (int k = 0; k < K; ++k) {
                        const S wv = wp[k];
                        const S* src = irow + conv_tap_offset(k, K, dilation, causal);
                        for (int t = lo; t < hi; ++t) orow[t] += wv * src[t];
                    }
                }
            }
        }
    }
}

/// din[b,ci,tau] += sum_{co,k} w[co,ci,k] * dout[b,co,tau-off(k)]
template <typename S>
void conv1d_backward_input(const TensorT<S>& dout, const TensorT<S>& w, int dilation, bool causal,
                           TensorT<S>& din_accum) {
    const int B = dout.dim(0), Cout = dout.dim(1), T = dout.dim(2);
    const int Cin = w.dim(1), K = w.dim(2);
    for (int b = 0; b < B; ++b) {
        for (int ci = 0; ci < Cin; ++ci) {
            S* drow = din_accum.data() + din_accum.idx3(b, ci, 0);
            for (int co = 0; co < Cout; ++co) {
                const S* grow = dout.data() + dout.idx3(b, co, 0);
                for (int k = 0; k < K; ++k) {
                    const S wv = w.data()[(static_cast<std::int64_t>(co) * Cin + ci) * K + k];
                    if (wv == S(0)) continue;
                    const int off = conv_tap_offset(k, K, dilation, causal);
                    // din[tau] += wv * dout[tau + (-off)] pattern
                    const int t0 = std::max(0, off);
                    const int t1 = std::min(T, T + off);
                    const S* src = grow - off;
                    for (int t = t0; t < t1; ++t) drow[t] += wv * src[t];
                }
            }
        }
    }
}

/// dw[co,ci,k] += sum_{b,t} dout[b,co,t] * in[b,ci,t+off(k)]; dbias[co] += sum dout.
template <typename S>
void conv1d_backward_weights(const TensorT<S>& in, const TensorT<S>& dout, int dilation,
                             bool causal, TensorT<S>& dw_accum, std::type_identity_t<S>* dbias_accum) {
    const int B = in.dim(0), Cin = in.dim(1), T = in.dim(2);
    const int Cout = dout.dim(1), K = dw_accum.dim(2);
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Cout; ++co) {
            const S* grow = dout.data() + dout.idx3(b, co, 0);
            if (dbias_accum) {
                S acc = S(0);
                for (int t = 0; t < T; ++t) acc += grow[t];
                dbias_accum[co] += acc;
            }
            for (int ci = 0; ci < Cin; ++ci) {
                const S* irow = in.data() + in.idx3(b, ci, 0);
                for (int k = 0; k < K; ++k) {
                    const int off = conv_tap_offset(k, K, dilation, causal);
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(T, T - off);
                    const S* src = irow + off;
                    // four independent accumulators so the reduction vectorizes
                    S a0 = S(0), a1 = S(0), a2 = S(0), a3 = S(0);
                    int t = t0;
                    for (; t + 4 <= t1; t += 4) {
                        a0 += grow[t] * src[t];
                        a1 += grow[t + 1] * src[t + 1];
                        a2 += grow[t + 2] * src[t + 2];
                        a3 += grow[t + 3] * src[t + 3];
                    }
                    for (; t < t1; ++t) a0 += grow[t] * src[t];
                    dw_accum.data()[(static_cast<std::int64_t>(co) * Cin + ci) * K + k] +=
                        (a0 + a1) + (a2 + a3);
                }
            }
        }
    }
}

}  // namespace flowave
