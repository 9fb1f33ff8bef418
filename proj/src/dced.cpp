#include "dcedseg/dced.hpp"

#include <cmath>

#include "dcedseg/checkpoint.hpp"
#include "dcedseg/json_util.hpp"
#include "dcedseg/rng.hpp"

namespace dcedseg {

NetworkConfig NetworkConfig::vgg16(int input_width, int input_height, int num_classes,
                                   std::uint64_t seed) {
    NetworkConfig c;
    c.stages = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
    c.input_width = input_width;
    c.input_height = input_height;
    c.num_classes = num_classes;
    c.seed = seed;
    return c;
}

NetworkConfig NetworkConfig::tiny(int input_width, int input_height, int num_classes,
                                  std::uint64_t seed) {
    NetworkConfig c;
    c.stages = {{1, 8}, {1, 16}};
    c.input_width = input_width;
    c.input_height = input_height;
    c.num_classes = num_classes;
    c.seed = seed;
    return c;
}

NetworkConfig parse_network_config(const nlohmann::json& j) {
    require_keys(j, {"stages", "preset", "input_size", "num_classes", "seed"}, "network config");
    NetworkConfig c;
    if (j.contains("preset") == j.contains("stages"))
        throw ConfigError("network config: exactly one of \"preset\" or \"stages\" is required");
    if (j.contains("preset")) {
        const std::string preset = j.at("preset").get<std::string>();
        if (preset == "vgg16")
            c = NetworkConfig::vgg16();
        else if (preset == "tiny")
            c = NetworkConfig::tiny();
        else
            throw ConfigError("network config: unknown preset \"" + preset + "\"");
    } else {
        c.stages.clear();
        for (const auto& s : j.at("stages")) {
            if (!s.is_array() || s.size() != 2)
                throw ConfigError("network config: each stage must be [conv_count, channels]");
            c.stages.push_back({s[0].get<int>(), s[1].get<int>()});
        }
    }
    if (j.contains("input_size")) {
        const auto& sz = j.at("input_size");
        if (!sz.is_array() || sz.size() != 2)
            throw ConfigError("network config: input_size must be [width, height]");
        c.input_width = sz[0].get<int>();
        c.input_height = sz[1].get<int>();
    }
    if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

nlohmann::json network_config_to_json(const NetworkConfig& config) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageSpec& s : config.stages) stages.push_back({s.conv_count, s.channels});
    return {{"stages", stages},
            {"input_size", {config.input_width, config.input_height}},
            {"num_classes", config.num_classes},
            {"seed", config.seed}};
}

namespace {

void validate_config(const NetworkConfig& c) {
    if (c.stages.empty()) throw ConfigError("network config: at least one stage required");
    for (const StageSpec& s : c.stages)
        if (s.conv_count < 1 || s.channels < 1)
            throw ConfigError("network config: stage conv counts and widths must be positive");
    if (c.num_classes < 2) throw ConfigError("network config: num_classes must be >= 2");
    if (c.num_classes > 255) throw ConfigError("network config: num_classes must fit 8-bit labels");
    if (c.input_width < 1 || c.input_height < 1)
        throw ConfigError("network config: input size must be positive");
    if (c.input_channels < 1) throw ConfigError("network config: input channels must be positive");
}

ConvParams make_conv(int in_c, int out_c, int k, int pad, Rng& rng) {
    ConvParams p;
    p.weights = Tensor({out_c, in_c, k, k});
    p.bias = Tensor({out_c});
    p.stride = 1;
    p.padding = pad;
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
    for (double& w : p.weights.data) w = rng.normal(0.0, stddev);
    return p;
}

}  // namespace

DcedModel build(const NetworkConfig& config) {
    validate_config(config);
    DcedModel model;
    model.config = config;
    Rng rng(config.seed);

    const int num_stages = static_cast<int>(config.stages.size());
    model.pool_slots = num_stages;

    auto stage_width = [&](int i) { return config.stages[static_cast<std::size_t>(i)].channels; };

    // encoder: (conv -> relu) x count, then pool
    for (int s = 0; s < num_stages; ++s) {
        const int count = config.stages[static_cast<std::size_t>(s)].conv_count;
        for (int j = 0; j < count; ++j) {
            const int in_c = j == 0 ? (s == 0 ? config.input_channels : stage_width(s - 1))
                                    : stage_width(s);
            model.convs.push_back(make_conv(in_c, stage_width(s), 3, 1, rng));
            model.plan.push_back({PlanStep::kConv, static_cast<int>(model.convs.size()) - 1, -1});
            model.plan.push_back({PlanStep::kRelu, -1, -1});
        }
        model.plan.push_back({PlanStep::kPool, -1, s});
    }

    // decoder: unpool with the matching stage's indices, then (conv -> relu) x count;
    // the last conv of each stage steps down to the previous stage's width
    for (int s = num_stages - 1; s >= 0; --s) {
        model.plan.push_back({PlanStep::kUnpool, -1, s});
        const int count = config.stages[static_cast<std::size_t>(s)].conv_count;
        for (int j = 0; j < count; ++j) {
            const int out_c = j == count - 1 ? stage_width(s == 0 ? 0 : s - 1) : stage_width(s);
            model.convs.push_back(make_conv(stage_width(s), out_c, 3, 1, rng));
            model.plan.push_back({PlanStep::kConv, static_cast<int>(model.convs.size()) - 1, -1});
            model.plan.push_back({PlanStep::kRelu, -1, -1});
        }
    }

    // 1x1 per-pixel classifier
    model.convs.push_back(make_conv(stage_width(0), config.num_classes, 1, 0, rng));
    model.plan.push_back({PlanStep::kConv, static_cast<int>(model.convs.size()) - 1, -1});
    return model;
}

std::vector<Tensor*> DcedModel::parameters() {
    std::vector<Tensor*> out;
    out.reserve(convs.size() * 2);
    for (ConvParams& p : convs) {
        out.push_back(&p.weights);
        out.push_back(&p.bias);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor*>> DcedModel::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    const int num_stages = static_cast<int>(config.stages.size());
    std::size_t idx = 0;
    auto emit = [&](const std::string& prefix) {
        out.emplace_back(prefix + ".weight", &convs[idx].weights);
        out.emplace_back(prefix + ".bias", &convs[idx].bias);
        ++idx;
    };
    for (int s = 0; s < num_stages; ++s)
        for (int j = 0; j < config.stages[static_cast<std::size_t>(s)].conv_count; ++j)
            emit("encoder.s" + std::to_string(s) + ".conv" + std::to_string(j));
    for (int s = num_stages - 1; s >= 0; --s)
        for (int j = 0; j < config.stages[static_cast<std::size_t>(s)].conv_count; ++j)
            emit("decoder.s" + std::to_string(s) + ".conv" + std::to_string(j));
    emit("classifier");
    return out;
}

std::int64_t DcedModel::parameter_count() const {
    std::int64_t n = 0;
    for (const ConvParams& p : convs) n += p.weights.numel() + p.bias.numel();
    return n;
}

Tensor forward(const DcedModel& model, const Tensor& image, ForwardTrace* trace) {
    if (image.shape.size() != 4) throw ShapeError("forward: input must be N x C x H x W");
    if (image.shape[1] != model.config.input_channels)
        throw ShapeError("forward: input has " + std::to_string(image.shape[1]) +
                         " channels, model expects " + std::to_string(model.config.input_channels));

    std::vector<PoolIndices> local_pools;
    std::vector<PoolIndices>& pools = trace ? trace->pools : local_pools;
    pools.assign(static_cast<std::size_t>(model.pool_slots), PoolIndices{});
    if (trace) {
        trace->inputs.clear();
        trace->inputs.reserve(model.plan.size());
    }

    Tensor cur = image;
    for (const PlanStep& step : model.plan) {
        if (trace) trace->inputs.push_back(cur);
        switch (step.kind) {
            case PlanStep::kConv:
                cur = conv2d_forward(cur, model.convs[static_cast<std::size_t>(step.conv)]);
                break;
            case PlanStep::kRelu:
                cur = relu(cur);
                break;
            case PlanStep::kPool: {
                if (cur.shape[2] < 2 || cur.shape[3] < 2)
                    throw ShapeError("forward: input too small, spatial dims collapse at pooling stage " +
                                     std::to_string(step.pool_slot));
                auto [pooled, idx] = maxpool2x2(cur);
                pools[static_cast<std::size_t>(step.pool_slot)] = std::move(idx);
                cur = std::move(pooled);
                break;
            }
            case PlanStep::kUnpool:
                cur = maxunpool2x2(cur, pools[static_cast<std::size_t>(step.pool_slot)]);
                break;
        }
    }
    return cur;
}

void backward(DcedModel& model, const ForwardTrace& trace, const Tensor& grad_logits) {
    if (trace.inputs.size() != model.plan.size())
        throw StateError("backward: trace does not match the model plan");

    Tensor g = grad_logits;
    for (std::size_t i = model.plan.size(); i-- > 0;) {
        const PlanStep& step = model.plan[i];
        const Tensor& input = trace.inputs[i];
        switch (step.kind) {
            case PlanStep::kConv: {
                ConvParams& p = model.convs[static_cast<std::size_t>(step.conv)];
                ConvGrads grads = conv2d_backward(input, p, g);
                p.weights.ensure_grad();
                p.bias.ensure_grad();
                for (std::size_t k = 0; k < p.weights.grad.size(); ++k)
                    p.weights.grad[k] += grads.grad_w.data[k];
                for (std::size_t k = 0; k < p.bias.grad.size(); ++k)
                    p.bias.grad[k] += grads.grad_b.data[k];
                g = std::move(grads.grad_x);
                break;
            }
            case PlanStep::kRelu:
                g = relu_backward(input, g);
                break;
            case PlanStep::kPool:
                g = maxpool2x2_backward(trace.pools[static_cast<std::size_t>(step.pool_slot)], g);
                break;
            case PlanStep::kUnpool:
                g = maxunpool2x2_backward(trace.pools[static_cast<std::size_t>(step.pool_slot)], g);
                break;
        }
    }
}

LabelMask predict_from_logits(const Tensor& logits) {
    if (logits.shape.size() != 4 || logits.shape[0] != 1)
        throw ShapeError("predict_from_logits: expected 1 x K x H x W logits");
    const std::int64_t K = logits.shape[1], H = logits.shape[2], W = logits.shape[3];
    const std::int64_t hw = H * W;
    LabelMask out{static_cast<int>(W), static_cast<int>(H), {}};
    out.ids.resize(static_cast<std::size_t>(hw));
    for (std::int64_t pix = 0; pix < hw; ++pix) {
        int best = 0;
        double best_v = logits.data[static_cast<std::size_t>(pix)];
        for (std::int64_t k = 1; k < K; ++k) {
            const double v = logits.data[static_cast<std::size_t>(k * hw + pix)];
            if (v > best_v) {  // strict: ties stay with the smaller id
                best_v = v;
                best = static_cast<int>(k);
            }
        }
        out.ids[static_cast<std::size_t>(pix)] = static_cast<std::uint8_t>(best);
    }
    return out;
}

LabelMask predict(const DcedModel& model, const Tensor& image) {
    return predict_from_logits(forward(model, image));
}

LabelMask predict(const DcedModel& model, const RgbImage& image) {
    return predict(model, to_tensor(image));
}

Tensor to_tensor(const RgbImage& image) {
    const RgbImage* p = &image;
    return to_tensor(std::span<const RgbImage* const>{&p, 1});
}

Tensor to_tensor(std::span<const RgbImage* const> images) {
    if (images.empty()) throw ValueError("to_tensor: empty batch");
    const int W = images[0]->width, H = images[0]->height;
    Tensor out({static_cast<std::int64_t>(images.size()), 3, H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (std::size_t n = 0; n < images.size(); ++n) {
        const RgbImage& img = *images[n];
        if (img.width != W || img.height != H)
            throw ShapeError("to_tensor: batch images must share dimensions");
        for (std::int64_t pix = 0; pix < hw; ++pix)
            for (int c = 0; c < 3; ++c)
                out.data[static_cast<std::size_t>((static_cast<std::int64_t>(n) * 3 + c) * hw + pix)] =
                    img.rgb[static_cast<std::size_t>(pix * 3 + c)] / 255.0 - 0.5;
    }
    return out;
}

double pixel_accuracy(const Tensor& logits, std::span<const LabelMask> labels,
                      std::optional<int> ignore_id) {
    if (logits.shape.size() != 4) throw ShapeError("pixel_accuracy: logits must be N x K x H x W");
    const std::int64_t N = logits.shape[0], K = logits.shape[1], H = logits.shape[2], W = logits.shape[3];
    if (static_cast<std::int64_t>(labels.size()) != N)
        throw ShapeError("pixel_accuracy: label count does not match batch");
    const std::int64_t hw = H * W;
    std::int64_t correct = 0, counted = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        const LabelMask& mask = labels[static_cast<std::size_t>(n)];
        if (mask.width != W || mask.height != H)
            throw ShapeError("pixel_accuracy: label dims do not match logits");
        for (std::int64_t pix = 0; pix < hw; ++pix) {
            const int y = mask.ids[static_cast<std::size_t>(pix)];
            if (ignore_id && y == *ignore_id) continue;
            const std::size_t base = static_cast<std::size_t>(n * K * hw + pix);
            int best = 0;
            double best_v = logits.data[base];
            for (std::int64_t k = 1; k < K; ++k) {
                const double v = logits.data[base + static_cast<std::size_t>(k * hw)];
                if (v > best_v) {
                    best_v = v;
                    best = static_cast<int>(k);
                }
            }
            correct += best == y ? 1 : 0;
            ++counted;
        }
    }
    return counted > 0 ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
}

void save_model(const DcedModel& model, const std::filesystem::path& path) {
    auto named = const_cast<DcedModel&>(model).named_parameters();
    std::vector<NamedTensor> tensors;
    tensors.reserve(named.size());
    for (auto& [name, t] : named) tensors.push_back({name, t});
    save_checkpoint(path, tensors, network_config_to_json(model.config).dump());
}

DcedModel load_model(const std::filesystem::path& path) {
    LoadedCheckpoint ckpt = load_checkpoint(path);
    if (ckpt.metadata.empty())
        throw IoError("checkpoint has no network config metadata", path.string());
    NetworkConfig config;
    try {
        config = parse_network_config(nlohmann::json::parse(ckpt.metadata));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad checkpoint metadata: ") + e.what(), path.string());
    }
    DcedModel model = build(config);
    for (auto& [name, t] : model.named_parameters()) {
        const Tensor* loaded = ckpt.find(name);
        if (!loaded) throw IoError("checkpoint is missing tensor " + name, path.string());
        if (loaded->shape != t->shape)
            throw IoError("checkpoint tensor " + name + " has shape " + loaded->shape_string() +
                          ", model expects " + t->shape_string(), path.string());
        t->data = loaded->data;
    }
    return model;
}

}  // namespace dcedseg
