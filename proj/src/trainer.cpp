#include "dcedseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dcedseg/json_util.hpp"
#include "dcedseg/rng.hpp"

namespace dcedseg {

TrainConfig parse_train_config(const nlohmann::json& j) {
    require_keys(j,
                 {"epochs", "learning_rate", "batch_size", "train_count", "test_count", "seed",
                  "class_weights", "ignore_background", "checkpoint_every"},
                 "train config");
    TrainConfig c;
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("train_count")) c.train_count = j.at("train_count").get<int>();
    if (j.contains("test_count")) c.test_count = j.at("test_count").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("class_weights")) c.class_weights = j.at("class_weights").get<std::vector<double>>();
    if (j.contains("ignore_background")) c.ignore_background = j.at("ignore_background").get<bool>();
    if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<int>();

    if (c.epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (!(c.learning_rate > 0)) throw ConfigError("train config: learning_rate must be > 0");
    if (c.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (c.train_count < 1 || c.test_count < 0)
        throw ConfigError("train config: train_count must be >= 1 and test_count >= 0");
    if (c.checkpoint_every < 1) throw ConfigError("train config: checkpoint_every must be >= 1");
    return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j{{"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"train_count", c.train_count},
                     {"test_count", c.test_count},
                     {"seed", c.seed},
                     {"ignore_background", c.ignore_background},
                     {"checkpoint_every", c.checkpoint_every}};
    if (!c.class_weights.empty()) j["class_weights"] = c.class_weights;
    return j;
}

SplitIndices split_dataset(const Manifest& manifest, const TrainConfig& config) {
    const std::size_t n = manifest.size();
    if (static_cast<std::size_t>(config.train_count) + config.test_count > n)
        throw ValueError("split_dataset: train_count + test_count = " +
                         std::to_string(config.train_count + config.test_count) +
                         " exceeds dataset size " + std::to_string(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.seed);
    rng.shuffle(order);

    SplitIndices split;
    split.train.assign(order.begin(), order.begin() + config.train_count);
    split.test.assign(order.begin() + config.train_count,
                      order.begin() + config.train_count + config.test_count);
    return split;
}

TrainResult train(DcedModel& model, const std::vector<DatasetEntry>& train_set,
                  const TrainConfig& config, const std::filesystem::path& checkpoint_dir) {
    if (train_set.empty()) throw ValueError("train: empty training set");
    if (!config.class_weights.empty() &&
        static_cast<int>(config.class_weights.size()) != model.config.num_classes)
        throw ConfigError("train: class_weights size must equal num_classes");
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        const DatasetEntry& e = train_set[i];
        if (e.image.width != model.config.input_width || e.image.height != model.config.input_height)
            throw ShapeError("train: entry \"" + e.source_id + "\" is " +
                             std::to_string(e.image.width) + "x" + std::to_string(e.image.height) +
                             ", model expects " + std::to_string(model.config.input_width) + "x" +
                             std::to_string(model.config.input_height));
    }
    if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

    const std::optional<int> ignore_id =
        config.ignore_background ? std::optional<int>(kBackgroundId) : std::nullopt;
    const auto params = model.parameters();
    for (Tensor* t : params) t->ensure_grad();

    Rng shuffle_rng(config.seed);
    TrainResult result;
    const auto t0 = std::chrono::steady_clock::now();
    int iteration = 0;

    auto save_ckpt = [&](int epoch) {
        if (checkpoint_dir.empty()) return;
        const auto path = checkpoint_dir / ("ckpt_epoch" + std::to_string(epoch) + ".bin");
        save_model(model, path);
        result.checkpoints.push_back(path);
    };

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        for (std::size_t pos = 0; pos < order.size(); pos += config.batch_size) {
            const std::size_t batch = std::min<std::size_t>(config.batch_size, order.size() - pos);
            std::vector<const RgbImage*> images(batch);
            std::vector<LabelMask> labels(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                const DatasetEntry& e = train_set[order[pos + b]];
                images[b] = &e.image;
                labels[b] = e.label;
            }
            const Tensor x = to_tensor(std::span<const RgbImage* const>(images.data(), batch));

            ForwardTrace trace;
            const Tensor logits = forward(model, x, &trace);
            const auto ce = softmax_cross_entropy(logits, labels, config.class_weights, ignore_id);
            if (!std::isfinite(ce.loss))
                throw StateError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", iteration " + std::to_string(iteration + 1));
            backward(model, trace, ce.grad_logits);
            sgd_step(params, config.learning_rate);

            ++iteration;
            TrainLogRow row;
            row.epoch = epoch;
            row.iteration = iteration;
            row.loss = ce.loss;
            row.pixel_accuracy = pixel_accuracy(logits, labels, ignore_id);
            row.wall_time_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            result.log.push_back(row);
        }

        if (epoch % config.checkpoint_every == 0 && epoch != config.epochs) save_ckpt(epoch);
    }
    save_ckpt(config.epochs);
    return result;
}

void write_train_log_csv(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open training log for writing", path.string());
    out << "epoch,iteration,loss,pixel_accuracy,wall_time_s\n";
    char buf[160];
    for (const TrainLogRow& row : log) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.6f\n", row.epoch, row.iteration,
                      row.loss, row.pixel_accuracy, row.wall_time_s);
        out << buf;
    }
    out.close();
    if (!out) throw IoError("failed writing training log", path.string());
}

EvalReport evaluate_with(const std::function<LabelMask(const DatasetEntry&)>& predictor,
                         const std::vector<DatasetEntry>& test_set, const EvalOptions& options) {
    if (test_set.empty()) throw ValueError("evaluate: empty test set");

    ConfusionMatrix cm(kNumClasses, options.evaluated);
    std::vector<BoundaryCounts> boundary(options.evaluated.size());
    for (const DatasetEntry& entry : test_set) {
        const LabelMask pred = predictor(entry);
        if (pred.width != entry.label.width || pred.height != entry.label.height)
            throw ShapeError("evaluate: prediction dims do not match label for entry \"" +
                             entry.source_id + "\"");
        cm += confusion(pred, entry.label, options.evaluated, kNumClasses);
        const double tol = options.bf_tolerance >= 0
                               ? options.bf_tolerance
                               : default_bf_tolerance(entry.label.width, entry.label.height);
        for (std::size_t i = 0; i < cm.evaluated.size(); ++i)
            boundary[i] += boundary_match(pred, entry.label, cm.evaluated[i], tol,
                                          options.eight_connected_boundaries);
    }
    EvalReport report = build_report(cm, boundary);
    report.image_count = static_cast<int>(test_set.size());
    return report;
}

EvalReport evaluate_on(const DcedModel& model, const std::vector<DatasetEntry>& test_set,
                       const EvalOptions& options) {
    return evaluate_with([&model](const DatasetEntry& e) { return predict(model, e.image); },
                         test_set, options);
}

std::vector<double> median_frequency_weights(const std::vector<DatasetEntry>& entries,
                                             int num_classes) {
    if (entries.empty()) throw ValueError("median_frequency_weights: no entries");
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
    std::int64_t total = 0;
    for (const DatasetEntry& e : entries) {
        for (std::uint8_t id : e.label.ids) {
            if (id >= num_classes)
                throw ValueError("median_frequency_weights: label id outside class range");
            ++counts[id];
            ++total;
        }
    }
    std::vector<double> freqs;
    for (std::int64_t c : counts)
        if (c > 0) freqs.push_back(static_cast<double>(c) / static_cast<double>(total));
    if (freqs.empty()) throw ValueError("median_frequency_weights: no labeled pixels");
    std::sort(freqs.begin(), freqs.end());
    const std::size_t mid = freqs.size() / 2;
    const double median = freqs.size() % 2 ? freqs[mid] : 0.5 * (freqs[mid - 1] + freqs[mid]);

    std::vector<double> weights(static_cast<std::size_t>(num_classes), 0.0);
    for (int c = 0; c < num_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
            weights[static_cast<std::size_t>(c)] =
                median / (static_cast<double>(counts[static_cast<std::size_t>(c)]) /
                          static_cast<double>(total));
    return weights;
}

}  // namespace dcedseg
