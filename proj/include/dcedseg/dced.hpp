#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcedseg/image.hpp"
#include "dcedseg/nn_ops.hpp"

namespace dcedseg {

struct StageSpec {
    int conv_count = 0;
    int channels = 0;
};

struct NetworkConfig {
    std::vector<StageSpec> stages;
    int input_width = 300;
    int input_height = 300;
    int num_classes = 4;
    std::uint64_t seed = 0;
    int input_channels = 3;

    // VGG16 convolutional layout: 13 encoder conv layers in 5 stages.
    static NetworkConfig vgg16(int input_width = 300, int input_height = 300,
                               int num_classes = 4, std::uint64_t seed = 0);
    // Two thin stages; small enough for finite-difference sweeps.
    static NetworkConfig tiny(int input_width = 32, int input_height = 32,
                              int num_classes = 4, std::uint64_t seed = 0);
};

// Accepts {"stages": [[count, width], ...] | "preset": "vgg16"|"tiny",
// "input_size": [w, h], "num_classes": K, "seed": n}; unknown keys rejected.
NetworkConfig parse_network_config(const nlohmann::json& j);
nlohmann::json network_config_to_json(const NetworkConfig& config);

// Execution plan step; the conv index points into DcedModel::convs and the
// pool slot pairs each decoder unpool with its encoder pool.
struct PlanStep {
    enum Kind { kConv, kRelu, kPool, kUnpool } kind;
    int conv = -1;
    int pool_slot = -1;
};

// Encoder/decoder conv parameters plus the flat execution plan. Encoder
// stage widths are mirrored by the decoder; a 1x1 conv classifier maps the
// first stage's width to num_classes.
struct DcedModel {
    NetworkConfig config;
    std::vector<ConvParams> convs;  // encoder stages, decoder stages, classifier last
    std::vector<PlanStep> plan;
    int pool_slots = 0;

    std::vector<Tensor*> parameters();
    std::vector<std::pair<std::string, Tensor*>> named_parameters();
    std::int64_t parameter_count() const;
};

// He-initialized model (normal, std = sqrt(2 / fan_in)) with zero biases,
// drawn from the config seed.
DcedModel build(const NetworkConfig& config);

// Everything backward needs: each plan step's input plus the recorded pool
// indices. Pass nullptr to forward() for inference to skip the saving.
struct ForwardTrace {
    std::vector<Tensor> inputs;           // one per plan step
    std::vector<PoolIndices> pools;       // one per pool slot
};

// Runs image (N x C x H x W) through encoder, mirrored decoder, classifier;
// logits have the input's spatial dims. Throws ShapeError when a pooling
// step would collapse a spatial dim to zero.
Tensor forward(const DcedModel& model, const Tensor& image, ForwardTrace* trace = nullptr);

// Accumulates parameter gradients from grad wrt logits; call ensure_grad on
// parameters (or rely on this to allocate) and sgd_step to consume them.
void backward(DcedModel& model, const ForwardTrace& trace, const Tensor& grad_logits);

// Per-pixel argmax over class logits, ties toward the smaller id. N must be 1.
LabelMask predict_from_logits(const Tensor& logits);
LabelMask predict(const DcedModel& model, const Tensor& image);
LabelMask predict(const DcedModel& model, const RgbImage& image);

// 1 x 3 x H x W tensor with intensities mapped to [-0.5, 0.5].
Tensor to_tensor(const RgbImage& image);
Tensor to_tensor(std::span<const RgbImage* const> images);

// Fraction of pixels whose argmax matches the label; ignore_id pixels are
// left out of the count.
double pixel_accuracy(const Tensor& logits, std::span<const LabelMask> labels,
                      std::optional<int> ignore_id = std::nullopt);

void save_model(const DcedModel& model, const std::filesystem::path& path);
DcedModel load_model(const std::filesystem::path& path);

}  // namespace dcedseg
