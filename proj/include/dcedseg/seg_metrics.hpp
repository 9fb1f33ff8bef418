#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcedseg/image.hpp"

namespace dcedseg {

// K x K pixel-count table: cell (truth, predicted). Only pixels whose truth
// id is in the evaluated set are tallied; background (id 0) is excluded by
// default.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<int> evaluated;  // ascending class ids
    std::vector<std::int64_t> counts;  // row-major, truth * num_classes + predicted

    ConfusionMatrix() = default;
    ConfusionMatrix(int k, std::vector<int> evaluated_classes);

    std::int64_t& at(int truth, int predicted) {
        return counts[static_cast<std::size_t>(truth) * num_classes + predicted];
    }
    std::int64_t at(int truth, int predicted) const {
        return counts[static_cast<std::size_t>(truth) * num_classes + predicted];
    }

    std::int64_t total() const;
    std::int64_t row_sum(int truth) const;     // truth pixels of a class
    std::int64_t col_sum(int predicted) const; // predicted pixels of a class
    std::int64_t trace() const;
    bool is_evaluated(int c) const;

    // Elementwise sum; confusion matrices of disjoint images add exactly.
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

inline const std::vector<int>& default_evaluated_classes() {
    static const std::vector<int> classes{1, 2, 3};
    return classes;
}

ConfusionMatrix confusion(const LabelMask& pred, const LabelMask& truth,
                          const std::vector<int>& evaluated = default_evaluated_classes(),
                          int num_classes = kNumClasses);

// Recall TP/(TP+FN). Throws UndefinedMetricError when the class has no truth
// pixels.
double class_accuracy(const ConfusionMatrix& cm, int c);

// One-vs-rest (TP+TN)/total. Throws UndefinedMetricError on an empty matrix.
double binary_accuracy(const ConfusionMatrix& cm, int c);

// TP/(TP+FP+FN). Throws UndefinedMetricError when the union is empty.
double iou(const ConfusionMatrix& cm, int c);

// Boundary match tallies for one class of one pred/truth pair. Boundary
// pixels are class-c pixels with at least one neighbor of a different class
// (the image border alone does not create boundary). Counts accumulate
// across images for corpus-level scores.
struct BoundaryCounts {
    std::int64_t pred_total = 0;
    std::int64_t pred_matched = 0;   // pred boundary pixels within tolerance of truth boundary
    std::int64_t truth_total = 0;
    std::int64_t truth_matched = 0;

    BoundaryCounts& operator+=(const BoundaryCounts& other);
};

BoundaryCounts boundary_match(const LabelMask& pred, const LabelMask& truth, int c,
                              double tolerance, bool eight_connected = false);

struct BfScore {
    double value = 0.0;
    bool defined = false;  // false when the class is absent from both masks
};

BfScore bf_from_counts(const BoundaryCounts& counts);

// Boundary F1: harmonic mean of boundary precision and recall under a
// Euclidean pixel-distance tolerance; 0 when precision + recall is 0,
// undefined when the class has no boundary in either mask.
BfScore bf_score(const LabelMask& pred, const LabelMask& truth, int c, double tolerance,
                 bool eight_connected = false);

// ceil(0.75% of the image diagonal), the customary boundary-match slack.
double default_bf_tolerance(int width, int height);

struct ClassMetrics {
    int class_id = 0;
    std::optional<double> accuracy;
    std::optional<double> iou;
    std::optional<double> bf;
};

struct AggregateMetrics {
    double global_accuracy = 0.0;
    double mean_accuracy = 0.0;
    double mean_iou = 0.0;
    double weighted_iou = 0.0;
    std::optional<double> mean_bf;
};

// Aggregates classwise values: means are unweighted over defined entries,
// weighted_iou and global_accuracy are frequency-weighted sums. Frequencies
// are used as given. Throws UndefinedMetricError when nothing is defined.
AggregateMetrics aggregate(const std::vector<ClassMetrics>& classes,
                           const std::vector<double>& truth_frequencies);

struct EvalReport {
    std::vector<ClassMetrics> classes;
    AggregateMetrics aggregates;
    std::vector<std::int64_t> truth_pixels;  // parallel to classes
    std::vector<double> frequencies;         // parallel to classes, sums to 1
    bool any_undefined = false;
    std::int64_t total_pixels = 0;
    int image_count = 0;
};

EvalReport build_report(const ConfusionMatrix& cm,
                        const std::vector<BoundaryCounts>& boundary_per_class);

std::string class_name(int id);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace dcedseg
