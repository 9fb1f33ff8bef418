#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>

#include "dcedseg/image.hpp"
#include "dcedseg/tensor.hpp"

namespace dcedseg {

// 2-D convolution parameters. weights: outC x inC x kH x kW, bias: outC.
struct ConvParams {
    Tensor weights;
    Tensor bias;
    int stride = 1;
    int padding = 0;
};

// Argmax bookkeeping from 2x2 max pooling: for every output element the
// flat h*W+w position of its source inside the input plane, plus the input
// spatial dims so unpooling can rebuild the exact original shape.
struct PoolIndices {
    std::int64_t n = 0, c = 0;
    std::int64_t out_h = 0, out_w = 0;
    std::int64_t in_h = 0, in_w = 0;
    std::vector<std::int64_t> argmax;  // n*c*out_h*out_w entries
};

// Cross-correlation plus bias. Output spatial dims (H + 2*pad - kH)/stride + 1
// must be positive integers.
Tensor conv2d_forward(const Tensor& x, const ConvParams& p);

struct ConvGrads {
    Tensor grad_x;
    Tensor grad_w;
    Tensor grad_b;
};

ConvGrads conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& grad_out);

Tensor relu(const Tensor& x);

// Pass-through where the forward input was > 0, zero elsewhere (subgradient
// 0 at exactly 0).
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

// 2x2 stride-2 max pooling, floor semantics: output dims are H/2 x W/2 and a
// trailing odd row/column is left out of every window (unpooling restores it
// as zeros). Ties resolve to the first occurrence in row-major window order.
std::pair<Tensor, PoolIndices> maxpool2x2(const Tensor& x);

// Places x's values at the recorded argmax positions of a zero tensor with
// the recorded input dims.
Tensor maxunpool2x2(const Tensor& x, const PoolIndices& idx);

// Gradient of maxpool2x2 (scatter to argmax positions, identical to unpooling
// the incoming gradient).
Tensor maxpool2x2_backward(const PoolIndices& idx, const Tensor& grad_out);

// Gradient of maxunpool2x2 (gather from the recorded positions).
Tensor maxunpool2x2_backward(const PoolIndices& idx, const Tensor& grad_out);

struct CrossEntropyResult {
    double loss = 0.0;
    Tensor grad_logits;
};

// Per-pixel softmax negative log-likelihood averaged over counted pixels.
// labels holds one mask per batch item. Pixels whose label equals ignore_id
// contribute neither loss nor gradient; class_weights (size K) rescale the
// per-class terms. Label ids must be < K unless ignored.
CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const LabelMask> labels,
                                         std::span<const double> class_weights = {},
                                         std::optional<int> ignore_id = std::nullopt);

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, const LabelMask& labels,
                                         std::span<const double> class_weights = {},
                                         std::optional<int> ignore_id = std::nullopt);

// Per-pixel softmax of N x K x H x W logits (diagnostic helper).
Tensor softmax_probs(const Tensor& logits);

// param <- param - lr * grad for every tensor, then grads are zeroed.
// Throws StateError if any tensor lacks a grad buffer.
void sgd_step(std::span<Tensor* const> params, double learning_rate);

// Scalar objective: returns f(x); when grad is non-null it must also store
// df/dx there (same shape as x).
using ScalarFn = std::function<double(const Tensor& x, Tensor* grad)>;

// Central-difference verification of the analytic gradient of f at x.
// Returns max over elements of |analytic - numeric| / max(1, |analytic|, |numeric|).
double gradient_check(const ScalarFn& f, const Tensor& x, double step);

}  // namespace dcedseg
