#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowave {

/// Dense row-major tensor. Training uses the 64-bit instantiation;
/// the 32-bit one exists for inference speed benchmarks.
template <typename S>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), S(0)) {}

    TensorT(std::vector<int> shape, std::vector<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != static_cast<std::int64_t>(data_.size())) {
            throw std::invalid_argument("tensor: shape/data size mismatch");
        }
    }

    static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

    static TensorT full(std::vector<int> shape, S v) {
        TensorT t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static TensorT scalar(S v) { return TensorT({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }

    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& vec() { return data_; }
    const std::vector<S>& vec() const { return data_; }

    S& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    S operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // rank-3 (batch, channel, time) access
    S& at(int b, int c, int t) { return data_[static_cast<std::size_t>(idx3(b, c, t))]; }
    S at(int b, int c, int t) const { return data_[static_cast<std::size_t>(idx3(b, c, t))]; }

    std::int64_t idx3(int b, int c, int t) const {
        return (static_cast<std::int64_t>(b) * shape_[1] + c) * shape_[2] + t;
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (S v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    bool is_scalar() const { return size() == 1; }

    S item() const {
        if (!is_scalar()) throw std::invalid_argument("tensor: item() on non-scalar");
        return data_[0];
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(out));
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }

    std::string shape_str() const { return shape_str(shape_); }

private:
    static std::int64_t checked_size(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw std::invalid_argument("tensor: nonpositive extent in shape " + shape_str(shape));
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<S> data_;
};

using Tensor = TensorT<double>;
using Tensor32 = TensorT<float>;

}  // namespace flowave
