#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dcedseg/error.hpp"

namespace dcedseg {

// Dense N-dimensional float64 array (canonical layout N x C x H x W for
// activations) with an optional same-shape gradient buffer.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until ensure_grad()

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (std::int64_t d : s) {
            if (d < 0) throw ShapeError("tensor dimension must be non-negative");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    bool has_grad() const { return !grad.empty(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() {
        if (has_grad()) std::fill(grad.begin(), grad.end(), 0.0);
    }

    // 4-D accessors for the N x C x H x W layout
    std::int64_t dim(std::size_t i) const { return shape.at(i); }

    std::size_t index4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w);
    }

    double& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data[index4(n, c, h, w)];
    }
    double at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data[index4(n, c, h, w)];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    std::string shape_string() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

}  // namespace dcedseg
