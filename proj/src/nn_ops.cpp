#include "dcedseg/nn_ops.hpp"

#include <algorithm>
#include <cmath>

namespace dcedseg {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
    return a >= 0 ? (a + b - 1) / b : -(-a / b);
}

void check_conv_args(const Tensor& x, const ConvParams& p) {
    if (x.shape.size() != 4) throw ShapeError("conv2d: input must be N x C x H x W, got " + x.shape_string());
    if (p.weights.shape.size() != 4)
        throw ShapeError("conv2d: weights must be outC x inC x kH x kW, got " + p.weights.shape_string());
    if (p.bias.shape.size() != 1 || p.bias.shape[0] != p.weights.shape[0])
        throw ShapeError("conv2d: bias length must equal output channel count");
    if (x.shape[1] != p.weights.shape[1])
        throw ShapeError("conv2d: input has " + std::to_string(x.shape[1]) + " channels, weights expect " +
                         std::to_string(p.weights.shape[1]));
    if (p.stride < 1 || p.padding < 0) throw ValueError("conv2d: stride must be >= 1 and padding >= 0");
    for (std::int64_t d : p.weights.shape)
        if (d < 1) throw ShapeError("conv2d: kernel dimensions must be positive");
    const std::int64_t span_h = x.shape[2] + 2 * p.padding - p.weights.shape[2];
    const std::int64_t span_w = x.shape[3] + 2 * p.padding - p.weights.shape[3];
    if (span_h < 0 || span_w < 0 || span_h % p.stride != 0 || span_w % p.stride != 0)
        throw ShapeError("conv2d: input " + x.shape_string() + " does not tile with kernel " +
                         p.weights.shape_string() + ", stride " + std::to_string(p.stride) +
                         ", padding " + std::to_string(p.padding));
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const ConvParams& p) {
    check_conv_args(x, p);
    const std::int64_t N = x.shape[0], IC = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t OC = p.weights.shape[0], KH = p.weights.shape[2], KW = p.weights.shape[3];
    const std::int64_t S = p.stride, P = p.padding;
    const std::int64_t OH = (H + 2 * P - KH) / S + 1;
    const std::int64_t OW = (W + 2 * P - KW) / S + 1;

    Tensor out({N, OC, OH, OW});
    const double* xd = x.data.data();
    const double* wd = p.weights.data.data();
    double* od = out.data.data();

    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t oc = 0; oc < OC; ++oc) {
            double* oplane = od + (n * OC + oc) * OH * OW;
            std::fill(oplane, oplane + OH * OW, p.bias.data[static_cast<std::size_t>(oc)]);
            for (std::int64_t ic = 0; ic < IC; ++ic) {
                const double* xplane = xd + (n * IC + ic) * H * W;
                const double* wplane = wd + (oc * IC + ic) * KH * KW;
                for (std::int64_t kh = 0; kh < KH; ++kh) {
                    for (std::int64_t kw = 0; kw < KW; ++kw) {
                        const double wv = wplane[kh * KW + kw];
                        const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(P - kh, S));
                        const std::int64_t oh_hi = std::min(OH - 1, floor_div(H - 1 + P - kh, S));
                        const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(P - kw, S));
                        const std::int64_t ow_hi = std::min(OW - 1, floor_div(W - 1 + P - kw, S));
                        const std::int64_t off = kw - P;
                        for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                            const std::int64_t ih = oh * S - P + kh;
                            const double* xrow = xplane + ih * W;
                            double* orow = oplane + oh * OW;
                            if (S == 1) {
                                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                    orow[ow] += wv * xrow[ow + off];
                            } else {
                                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                    orow[ow] += wv * xrow[ow * S + off];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& x, const ConvParams& p, const Tensor& grad_out) {
    check_conv_args(x, p);
    const std::int64_t N = x.shape[0], IC = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t OC = p.weights.shape[0], KH = p.weights.shape[2], KW = p.weights.shape[3];
    const std::int64_t S = p.stride, P = p.padding;
    const std::int64_t OH = (H + 2 * P - KH) / S + 1;
    const std::int64_t OW = (W + 2 * P - KW) / S + 1;
    if (grad_out.shape != std::vector<std::int64_t>{N, OC, OH, OW})
        throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape_string() +
                         " does not match forward output");

    ConvGrads g{Tensor(x.shape), Tensor(p.weights.shape), Tensor(p.bias.shape)};
    const double* xd = x.data.data();
    const double* wd = p.weights.data.data();
    const double* god = grad_out.data.data();

    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t oc = 0; oc < OC; ++oc) {
            const double* goplane = god + (n * OC + oc) * OH * OW;
            double acc_b = 0.0;
            for (std::int64_t i = 0; i < OH * OW; ++i) acc_b += goplane[i];
            g.grad_b.data[static_cast<std::size_t>(oc)] += acc_b;

            for (std::int64_t ic = 0; ic < IC; ++ic) {
                const double* xplane = xd + (n * IC + ic) * H * W;
                double* gxplane = g.grad_x.data.data() + (n * IC + ic) * H * W;
                const double* wplane = wd + (oc * IC + ic) * KH * KW;
                double* gwplane = g.grad_w.data.data() + (oc * IC + ic) * KH * KW;
                for (std::int64_t kh = 0; kh < KH; ++kh) {
                    for (std::int64_t kw = 0; kw < KW; ++kw) {
                        const double wv = wplane[kh * KW + kw];
                        double acc_w = 0.0;
                        const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(P - kh, S));
                        const std::int64_t oh_hi = std::min(OH - 1, floor_div(H - 1 + P - kh, S));
                        const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(P - kw, S));
                        const std::int64_t ow_hi = std::min(OW - 1, floor_div(W - 1 + P - kw, S));
                        const std::int64_t off = kw - P;
                        for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                            const std::int64_t ih = oh * S - P + kh;
                            const double* gorow = goplane + oh * OW;
                            const double* xrow = xplane + ih * W;
                            double* gxrow = gxplane + ih * W;
                            if (S == 1) {
                                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) {
                                    const double gv = gorow[ow];
                                    acc_w += gv * xrow[ow + off];
                                    gxrow[ow + off] += wv * gv;
                                }
                            } else {
                                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) {
                                    const double gv = gorow[ow];
                                    acc_w += gv * xrow[ow * S + off];
                                    gxrow[ow * S + off] += wv * gv;
                                }
                            }
                        }
                        gwplane[kh * KW + kw] += acc_w;
                    }
                }
            }
        }
    }
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    if (!x.same_shape(grad_out))
        throw ShapeError("relu_backward: grad shape " + grad_out.shape_string() +
                         " does not match input " + x.shape_string());
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    return out;
}

std::pair<Tensor, PoolIndices> maxpool2x2(const Tensor& x) {
    if (x.shape.size() != 4) throw ShapeError("maxpool2x2: input must be N x C x H x W");
    const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const std::int64_t OH = H / 2, OW = W / 2;

    Tensor out({N, C, OH, OW});
    PoolIndices idx{N, C, OH, OW, H, W, {}};
    idx.argmax.resize(static_cast<std::size_t>(N * C * OH * OW));

    std::size_t o = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const double* plane = x.data.data() + (n * C + c) * H * W;
            for (std::int64_t oh = 0; oh < OH; ++oh) {
                for (std::int64_t ow = 0; ow < OW; ++ow, ++o) {
                    const std::int64_t h0 = 2 * oh, w0 = 2 * ow;
                    std::int64_t best = h0 * W + w0;
                    double best_v = plane[best];
                    // row-major scan keeps the first occurrence on ties
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::int64_t pos = (h0 + dy) * W + (w0 + dx);
                            if (plane[pos] > best_v) {
                                best_v = plane[pos];
                                best = pos;
                            }
                        }
                    }
                    out.data[o] = best_v;
                    idx.argmax[o] = best;
                }
            }
        }
    }
    return {std::move(out), std::move(idx)};
}

Tensor maxunpool2x2(const Tensor& x, const PoolIndices& idx) {
    if (x.shape != std::vector<std::int64_t>{idx.n, idx.c, idx.out_h, idx.out_w})
        throw ShapeError("maxunpool2x2: input shape " + x.shape_string() +
                         " does not match recorded pool output");
    Tensor out({idx.n, idx.c, idx.in_h, idx.in_w});
    const std::int64_t plane = idx.in_h * idx.in_w;
    const std::int64_t per_plane = idx.out_h * idx.out_w;
    std::size_t o = 0;
    for (std::int64_t nc = 0; nc < idx.n * idx.c; ++nc) {
        double* oplane = out.data.data() + nc * plane;
        for (std::int64_t i = 0; i < per_plane; ++i, ++o) {
            const std::int64_t pos = idx.argmax[o];
            if (pos < 0 || pos >= plane)
                throw ValueError("maxunpool2x2: corrupted indices, position " + std::to_string(pos) +
                                 " outside input plane");
            oplane[pos] = x.data[o];
        }
    }
    return out;
}

Tensor maxpool2x2_backward(const PoolIndices& idx, const Tensor& grad_out) {
    if (grad_out.shape != std::vector<std::int64_t>{idx.n, idx.c, idx.out_h, idx.out_w})
        throw ShapeError("maxpool2x2_backward: grad shape mismatch");
    Tensor out({idx.n, idx.c, idx.in_h, idx.in_w});
    const std::int64_t plane = idx.in_h * idx.in_w;
    const std::int64_t per_plane = idx.out_h * idx.out_w;
    std::size_t o = 0;
    for (std::int64_t nc = 0; nc < idx.n * idx.c; ++nc) {
        double* oplane = out.data.data() + nc * plane;
        for (std::int64_t i = 0; i < per_plane; ++i, ++o) {
            const std::int64_t pos = idx.argmax[o];
            if (pos < 0 || pos >= plane)
                throw ValueError("maxpool2x2_backward: corrupted indices");
            oplane[pos] += grad_out.data[o];
        }
    }
    return out;
}

Tensor maxunpool2x2_backward(const PoolIndices& idx, const Tensor& grad_out) {
    if (grad_out.shape != std::vector<std::int64_t>{idx.n, idx.c, idx.in_h, idx.in_w})
        throw ShapeError("maxunpool2x2_backward: grad shape mismatch");
    Tensor out({idx.n, idx.c, idx.out_h, idx.out_w});
    const std::int64_t plane = idx.in_h * idx.in_w;
    const std::int64_t per_plane = idx.out_h * idx.out_w;
    std::size_t o = 0;
    for (std::int64_t nc = 0; nc < idx.n * idx.c; ++nc) {
        const double* gplane = grad_out.data.data() + nc * plane;
        for (std::int64_t i = 0; i < per_plane; ++i, ++o) {
            const std::int64_t pos = idx.argmax[o];
            if (pos < 0 || pos >= plane)
                throw ValueError("maxunpool2x2_backward: corrupted indices");
            out.data[o] = gplane[pos];
        }
    }
    return out;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const LabelMask> labels,
                                         std::span<const double> class_weights,
                                         std::optional<int> ignore_id) {
    if (logits.shape.size() != 4) throw ShapeError("softmax_cross_entropy: logits must be N x K x H x W");
    const std::int64_t N = logits.shape[0], K = logits.shape[1], H = logits.shape[2], W = logits.shape[3];
    if (static_cast<std::int64_t>(labels.size()) != N)
        throw ShapeError("softmax_cross_entropy: expected " + std::to_string(N) + " label masks, got " +
                         std::to_string(labels.size()));
    if (!class_weights.empty() && static_cast<std::int64_t>(class_weights.size()) != K)
        throw ShapeError("softmax_cross_entropy: class_weights size must equal K");

    CrossEntropyResult res;
    res.grad_logits = Tensor(logits.shape);

    const std::int64_t hw = H * W;
    double loss_sum = 0.0;
    std::int64_t counted = 0;
    std::vector<double> probs(static_cast<std::size_t>(K));

    for (std::int64_t n = 0; n < N; ++n) {
        const LabelMask& mask = labels[static_cast<std::size_t>(n)];
        if (mask.width != W || mask.height != H)
            throw ShapeError("softmax_cross_entropy: label mask dims do not match logits");
        for (std::int64_t pix = 0; pix < hw; ++pix) {
            const int y = mask.ids[static_cast<std::size_t>(pix)];
            if (ignore_id && y == *ignore_id) continue;
            if (y >= K)
                throw ValueError("softmax_cross_entropy: label id " + std::to_string(y) +
                                 " >= class count " + std::to_string(K));
            const std::size_t base = static_cast<std::size_t>(n * K * hw + pix);
            double m = logits.data[base];
            for (std::int64_t k = 1; k < K; ++k)
                m = std::max(m, logits.data[base + static_cast<std::size_t>(k * hw)]);
            double z = 0.0;
            for (std::int64_t k = 0; k < K; ++k) {
                const double e = std::exp(logits.data[base + static_cast<std::size_t>(k * hw)] - m);
                probs[static_cast<std::size_t>(k)] = e;
                z += e;
            }
            const double wgt = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
            const double log_py = logits.data[base + static_cast<std::size_t>(y) * hw] - m - std::log(z);
            loss_sum += -wgt * log_py;
            for (std::int64_t k = 0; k < K; ++k) {
                const double p = probs[static_cast<std::size_t>(k)] / z;
                res.grad_logits.data[base + static_cast<std::size_t>(k * hw)] =
                    wgt * (p - (k == y ? 1.0 : 0.0));
            }
            ++counted;
        }
    }

    if (counted > 0) {
        res.loss = loss_sum / static_cast<double>(counted);
        const double inv = 1.0 / static_cast<double>(counted);
        for (double& g : res.grad_logits.data) g *= inv;
    }
    return res;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, const LabelMask& labels,
                                         std::span<const double> class_weights,
                                         std::optional<int> ignore_id) {
    return softmax_cross_entropy(logits, std::span<const LabelMask>{&labels, 1}, class_weights, ignore_id);
}

Tensor softmax_probs(const Tensor& logits) {
    if (logits.shape.size() != 4) throw ShapeError("softmax_probs: logits must be N x K x H x W");
    const std::int64_t N = logits.shape[0], K = logits.shape[1], hw = logits.shape[2] * logits.shape[3];
    Tensor out(logits.shape);
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t pix = 0; pix < hw; ++pix) {
            const std::size_t base = static_cast<std::size_t>(n * K * hw + pix);
            double m = logits.data[base];
            for (std::int64_t k = 1; k < K; ++k)
                m = std::max(m, logits.data[base + static_cast<std::size_t>(k * hw)]);
            double z = 0.0;
            for (std::int64_t k = 0; k < K; ++k) {
                const double e = std::exp(logits.data[base + static_cast<std::size_t>(k * hw)] - m);
                out.data[base + static_cast<std::size_t>(k * hw)] = e;
                z += e;
            }
            for (std::int64_t k = 0; k < K; ++k)
                out.data[base + static_cast<std::size_t>(k * hw)] /= z;
        }
    }
    return out;
}

void sgd_step(std::span<Tensor* const> params, double learning_rate) {
    for (Tensor* t : params)
        if (!t->has_grad())
            throw StateError("sgd_step: parameter tensor " + t->shape_string() + " has no grad buffer");
    for (Tensor* t : params) {
        for (std::size_t i = 0; i < t->data.size(); ++i) t->data[i] -= learning_rate * t->grad[i];
        t->zero_grad();
    }
}

double gradient_check(const ScalarFn& f, const Tensor& x, double step) {
    Tensor analytic(x.shape);
    f(x, &analytic);

    Tensor probe = x;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < probe.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + step;
        const double fp = f(probe, nullptr);
        probe.data[i] = orig - step;
        const double fm = f(probe, nullptr);
        probe.data[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic.data[i];
        const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace dcedseg
