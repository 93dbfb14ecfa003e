#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "tapnet/errors.hpp"

namespace tapnet {

/// Dense multi-dimensional array of 64-bit floats with an optional gradient
/// slot. The gradient, when enabled, always matches the value shape.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count_(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count_(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(count_(shape_)));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool has_grad() const { return !grad_.empty(); }

    /// Allocate (zeroed) gradient storage; marks this tensor as a trainable leaf.
    void enable_grad() { grad_.assign(data_.size(), 0.0); }

    void zero_grad() {
        if (has_grad()) grad_.assign(data_.size(), 0.0);
    }

    std::vector<double>& grad() {
        if (!has_grad()) throw StateError("tensor has no gradient slot");
        return grad_;
    }
    const std::vector<double>& grad() const {
        if (!has_grad()) throw StateError("tensor has no gradient slot");
        return grad_;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    static std::string shape_string(const std::vector<std::size_t>& s) {
        std::string out = "[";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ", ";
            out += std::to_string(s[i]);
        }
        return out + "]";
    }

private:
    static std::size_t count_(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::vector<double> grad_; // empty = no gradient slot
};

} // namespace tapnet
