#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowave/tensor.hpp"

namespace flowave {

/// Named trainable tensor with an accumulated gradient buffer.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), 0.0); }
};

/// Handle to a node on a Tape.
struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

/// Reverse-mode tape. Operations append nodes in evaluation order, which is
/// a topological order of the graph; backward() walks it once in reverse.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor v);
    Var leaf(Param& p);

    const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.i)]->value; }
    const Tensor& grad(Var v) const;

    // elementwise, same shape
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var neg(Var a);
    Var exp_(Var a);
    Var log_abs(Var a);
    Var tanh_(Var a);
    Var sigmoid_(Var a);
    Var relu_(Var a);
    Var clamp(Var a, double lo, double hi);
    Var scale(Var a, double k);      // k * a
    Var offset(Var a, double k);     // a + k

    // reductions
    Var sum(Var a);
    Var mean(Var a);

    // rank-3 (B,C,T) structure ops
    Var affine_channels(Var x, Var s, Var b);  // y[b,c,t] = x[b,c,t]*s[c] + b[c]
    Var conv1d(Var x, Var w, Var bias, int dilation, bool causal);  // bias may be Var{}
    Var slice_channels(Var x, int c0, int c1);
    Var concat_channels(Var a, Var b);
    Var squeeze2(Var x);    // (B,C,T) -> (B,2C,T/2), even time indices first
    Var unsqueeze2(Var x);  // exact inverse of squeeze2
    Var change_order(Var x);  // swap first/second channel halves
    Var shift_time_right(Var x);  // out[t] = in[t-1], zero at t=0

    /// Power spectrogram of (B,1,T) input: (B, n_frames, fft/2+1), Hann
    /// window, reflect padding, n_frames = ceil(T/hop).
    Var stft_power(Var x, int fft_size, int hop);

    /// d(loss)/d(node) for every node reachable from loss; leaf gradients are
    /// accumulated into their Param::grad.
    void backward(Var loss);

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool grad_alloc = false;
        Param* leaf = nullptr;
        std::function<void(Tape&)> back;  // may be empty (constants/leaves)
    };

    Var push(Tensor value, std::function<void(Tape&)> back = {});
    Tensor& grad_buf(int i);
    Node& node(int i) { return *nodes_[static_cast<std::size_t>(i)]; }

    std::vector<std::unique_ptr<Node>> nodes_;
};

/// sum over all elements of log N(x; mu, exp(log_sigma)^2), built from tape ops
Var gaussian_logpdf_sum(Tape& t, Var x, Var mu, Var log_sigma);

/// sum over all elements of log N(x; 0, 1)
Var std_gaussian_logpdf_sum(Tape& t, Var x);

/// mean((a-b)^2)
Var mse(Tape& t, Var a, Var b);

}  // namespace flowave
