#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "dcedseg/dced.hpp"
#include "dcedseg/label_codec.hpp"
#include "dcedseg/seg_metrics.hpp"

namespace dcedseg {

struct TrainConfig {
    int epochs = 500;
    double learning_rate = 1e-3;
    int batch_size = 1;
    int train_count = 103;
    int test_count = 5;
    std::uint64_t seed = 0;
    std::vector<double> class_weights;  // empty = unweighted
    bool ignore_background = false;
    int checkpoint_every = 50;
};

// Strict parse: unknown keys rejected, invariants checked.
TrainConfig parse_train_config(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Seeded uniform shuffle of the manifest rows; the first train_count entries
// train, the next test_count test. Disjoint by construction.
SplitIndices split_dataset(const Manifest& manifest, const TrainConfig& config);

struct TrainLogRow {
    int epoch = 0;
    int iteration = 0;  // global, 1-based
    double loss = 0.0;
    double pixel_accuracy = 0.0;
    double wall_time_s = 0.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    std::vector<std::filesystem::path> checkpoints;
};

// SGD loop: each epoch visits a fresh seeded shuffle of the train set in
// minibatches, logging one row per iteration. Checkpoints ckpt_epoch<N>.bin
// land in checkpoint_dir (empty path = none) every checkpoint_every epochs
// and after the final epoch. A non-finite loss aborts with StateError.
TrainResult train(DcedModel& model, const std::vector<DatasetEntry>& train_set,
                  const TrainConfig& config, const std::filesystem::path& checkpoint_dir = {});

void write_train_log_csv(const std::filesystem::path& path, const std::vector<TrainLogRow>& log);

struct EvalOptions {
    std::vector<int> evaluated = default_evaluated_classes();
    double bf_tolerance = -1.0;  // < 0: ceil(0.75% of image diagonal) per image
    bool eight_connected_boundaries = false;
};

// Predicts every test entry, accumulates one global confusion matrix plus
// per-class boundary statistics, and builds the metric report. Empty test
// sets are rejected.
EvalReport evaluate_on(const DcedModel& model, const std::vector<DatasetEntry>& test_set,
                       const EvalOptions& options = {});

// Same accumulation with an arbitrary predictor (oracle hooks, stub models).
EvalReport evaluate_with(const std::function<LabelMask(const DatasetEntry&)>& predictor,
                         const std::vector<DatasetEntry>& test_set, const EvalOptions& options = {});

// Median-frequency balancing: weight_c = median(freq) / freq_c over classes
// present in the labels; absent classes get weight 0.
std::vector<double> median_frequency_weights(const std::vector<DatasetEntry>& entries,
                                             int num_classes = kNumClasses);

}  // namespace dcedseg
