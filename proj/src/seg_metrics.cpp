#include "dcedseg/seg_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dcedseg {

ConfusionMatrix::ConfusionMatrix(int k, std::vector<int> evaluated_classes)
    : num_classes(k), evaluated(std::move(evaluated_classes)) {
    if (k < 1) throw ValueError("confusion matrix: class count must be positive");
    std::sort(evaluated.begin(), evaluated.end());
    for (int c : evaluated)
        if (c < 0 || c >= k)
            throw ValueError("confusion matrix: evaluated class " + std::to_string(c) +
                             " outside [0, " + std::to_string(k) + ")");
    counts.assign(static_cast<std::size_t>(k) * k, 0);
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (std::int64_t v : counts) t += v;
    return t;
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
    std::int64_t t = 0;
    for (int p = 0; p < num_classes; ++p) t += at(truth, p);
    return t;
}

std::int64_t ConfusionMatrix::col_sum(int predicted) const {
    std::int64_t t = 0;
    for (int r = 0; r < num_classes; ++r) t += at(r, predicted);
    return t;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t t = 0;
    for (int i = 0; i < num_classes; ++i) t += at(i, i);
    return t;
}

bool ConfusionMatrix::is_evaluated(int c) const {
    return std::binary_search(evaluated.begin(), evaluated.end(), c);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (num_classes != other.num_classes || evaluated != other.evaluated)
        throw ValueError("confusion matrix: cannot add matrices with different class sets");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    return *this;
}

ConfusionMatrix confusion(const LabelMask& pred, const LabelMask& truth,
                          const std::vector<int>& evaluated, int num_classes) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw ShapeError("confusion: pred and truth dimensions differ");
    ConfusionMatrix cm(num_classes, evaluated);
    for (std::size_t i = 0; i < truth.ids.size(); ++i) {
        const int t = truth.ids[i];
        if (!cm.is_evaluated(t)) continue;
        const int p = pred.ids[i];
        if (p < 0 || p >= num_classes)
            throw ValueError("confusion: predicted id " + std::to_string(p) + " outside class range");
        ++cm.at(t, p);
    }
    return cm;
}

double class_accuracy(const ConfusionMatrix& cm, int c) {
    const std::int64_t truth_pixels = cm.row_sum(c);
    if (truth_pixels == 0)
        throw UndefinedMetricError("class_accuracy: class " + std::to_string(c) + " has no truth pixels");
    return static_cast<double>(cm.at(c, c)) / static_cast<double>(truth_pixels);
}

double binary_accuracy(const ConfusionMatrix& cm, int c) {
    const std::int64_t total = cm.total();
    if (total == 0) throw UndefinedMetricError("binary_accuracy: empty confusion matrix");
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t tn = total - cm.row_sum(c) - cm.col_sum(c) + tp;
    return static_cast<double>(tp + tn) / static_cast<double>(total);
}

double iou(const ConfusionMatrix& cm, int c) {
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t uni = cm.row_sum(c) + cm.col_sum(c) - tp;
    if (uni == 0)
        throw UndefinedMetricError("iou: class " + std::to_string(c) + " has empty union");
    return static_cast<double>(tp) / static_cast<double>(uni);
}

namespace {

std::vector<std::uint8_t> boundary_grid(const LabelMask& m, int c, bool eight_connected) {
    const int w = m.width, h = m.height;
    std::vector<std::uint8_t> grid(m.pixel_count(), 0);
    auto differs = [&](int x, int y) { return m.at(x, y) != c; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (m.at(x, y) != c) continue;
            bool boundary = (x > 0 && differs(x - 1, y)) || (x + 1 < w && differs(x + 1, y)) ||
                            (y > 0 && differs(x, y - 1)) || (y + 1 < h && differs(x, y + 1));
            if (!boundary && eight_connected)
                boundary = (x > 0 && y > 0 && differs(x - 1, y - 1)) ||
                           (x + 1 < w && y > 0 && differs(x + 1, y - 1)) ||
                           (x > 0 && y + 1 < h && differs(x - 1, y + 1)) ||
                           (x + 1 < w && y + 1 < h && differs(x + 1, y + 1));
            if (boundary) grid[static_cast<std::size_t>(y) * w + x] = 1;
        }
    }
    return grid;
}

std::pair<std::int64_t, std::int64_t> match_counts(const std::vector<std::uint8_t>& from,
                                                   const std::vector<std::uint8_t>& to,
                                                   int w, int h, double tolerance) {
    const int r = static_cast<int>(std::floor(tolerance));
    const double tol2 = tolerance * tolerance;
    std::int64_t total = 0, matched = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!from[static_cast<std::size_t>(y) * w + x]) continue;
            ++total;
            bool hit = false;
            for (int dy = -r; dy <= r && !hit; ++dy) {
                const int ty = y + dy;
                if (ty < 0 || ty >= h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    const int tx = x + dx;
                    if (tx < 0 || tx >= w) continue;
                    if (static_cast<double>(dx) * dx + static_cast<double>(dy) * dy > tol2) continue;
                    if (to[static_cast<std::size_t>(ty) * w + tx]) {
                        hit = true;
                        break;
                    }
                }
            }
            if (hit) ++matched;
        }
    }
    return {total, matched};
}

}  // namespace

BoundaryCounts& BoundaryCounts::operator+=(const BoundaryCounts& other) {
    pred_total += other.pred_total;
    pred_matched += other.pred_matched;
    truth_total += other.truth_total;
    truth_matched += other.truth_matched;
    return *this;
}

BoundaryCounts boundary_match(const LabelMask& pred, const LabelMask& truth, int c,
                              double tolerance, bool eight_connected) {
    if (pred.width != truth.width || pred.height != truth.height)
        throw ShapeError("boundary_match: pred and truth dimensions differ");
    if (tolerance < 0) throw ValueError("boundary_match: tolerance must be non-negative");
    const auto pred_b = boundary_grid(pred, c, eight_connected);
    const auto truth_b = boundary_grid(truth, c, eight_connected);
    BoundaryCounts counts;
    auto [pt, pm] = match_counts(pred_b, truth_b, pred.width, pred.height, tolerance);
    auto [tt, tm] = match_counts(truth_b, pred_b, pred.width, pred.height, tolerance);
    counts.pred_total = pt;
    counts.pred_matched = pm;
    counts.truth_total = tt;
    counts.truth_matched = tm;
    return counts;
}

BfScore bf_from_counts(const BoundaryCounts& counts) {
    if (counts.pred_total == 0 && counts.truth_total == 0) return {0.0, false};
    const double precision = counts.pred_total
        ? static_cast<double>(counts.pred_matched) / static_cast<double>(counts.pred_total) : 0.0;
    const double recall = counts.truth_total
        ? static_cast<double>(counts.truth_matched) / static_cast<double>(counts.truth_total) : 0.0;
    if (precision + recall == 0.0) return {0.0, true};
    return {2.0 * precision * recall / (precision + recall), true};
}

BfScore bf_score(const LabelMask& pred, const LabelMask& truth, int c, double tolerance,
                 bool eight_connected) {
    return bf_from_counts(boundary_match(pred, truth, c, tolerance, eight_connected));
}

double default_bf_tolerance(int width, int height) {
    const double diagonal = std::sqrt(static_cast<double>(width) * width +
                                      static_cast<double>(height) * height);
    return std::ceil(0.0075 * diagonal);
}

AggregateMetrics aggregate(const std::vector<ClassMetrics>& classes,
                           const std::vector<double>& truth_frequencies) {
    if (classes.size() != truth_frequencies.size())
        throw ValueError("aggregate: frequency count does not match class count");

    AggregateMetrics agg;
    double acc_sum = 0.0, iou_sum = 0.0, bf_sum = 0.0;
    double weighted_iou = 0.0, global = 0.0;
    int acc_n = 0, iou_n = 0, bf_n = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const ClassMetrics& m = classes[i];
        if (m.accuracy) {
            acc_sum += *m.accuracy;
            global += truth_frequencies[i] * *m.accuracy;
            ++acc_n;
        }
        if (m.iou) {
            iou_sum += *m.iou;
            weighted_iou += truth_frequencies[i] * *m.iou;
            ++iou_n;
        }
        if (m.bf) {
            bf_sum += *m.bf;
            ++bf_n;
        }
    }
    if (acc_n == 0 || iou_n == 0)
        throw UndefinedMetricError("aggregate: no class has defined metrics");
    agg.mean_accuracy = acc_sum / acc_n;
    agg.mean_iou = iou_sum / iou_n;
    agg.weighted_iou = weighted_iou;
    agg.global_accuracy = global;
    if (bf_n > 0) agg.mean_bf = bf_sum / bf_n;
    return agg;
}

EvalReport build_report(const ConfusionMatrix& cm,
                        const std::vector<BoundaryCounts>& boundary_per_class) {
    if (!boundary_per_class.empty() && boundary_per_class.size() != cm.evaluated.size())
        throw ValueError("build_report: boundary counts do not match evaluated classes");
    const std::int64_t total = cm.total();
    if (total == 0)
        throw UndefinedMetricError("build_report: no evaluated pixels in the confusion matrix");

    EvalReport report;
    report.total_pixels = total;
    for (std::size_t i = 0; i < cm.evaluated.size(); ++i) {
        const int c = cm.evaluated[i];
        ClassMetrics m;
        m.class_id = c;
        const std::int64_t truth_pixels = cm.row_sum(c);
        if (truth_pixels > 0) m.accuracy = class_accuracy(cm, c);
        if (truth_pixels + cm.col_sum(c) > 0) m.iou = iou(cm, c);
        if (!boundary_per_class.empty()) {
            const BfScore bf = bf_from_counts(boundary_per_class[i]);
            if (bf.defined) m.bf = bf.value;
        }
        if (!m.accuracy || !m.iou || (!boundary_per_class.empty() && !m.bf))
            report.any_undefined = true;
        report.classes.push_back(m);
        report.truth_pixels.push_back(truth_pixels);
        report.frequencies.push_back(static_cast<double>(truth_pixels) / static_cast<double>(total));
    }
    report.aggregates = aggregate(report.classes, report.frequencies);
    return report;
}

std::string class_name(int id) {
    switch (id) {
        case kBackgroundId: return "background";
        case kRbcId: return "rbc";
        case kWbcId: return "wbc";
        case kPlateletId: return "platelet";
        default: return "class" + std::to_string(id);
    }
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t i = 0; i < report.classes.size(); ++i) {
        const ClassMetrics& m = report.classes[i];
        nlohmann::json row{{"class_id", m.class_id},
                           {"name", class_name(m.class_id)},
                           {"truth_pixels", report.truth_pixels[i]},
                           {"frequency", report.frequencies[i]}};
        row["accuracy"] = m.accuracy ? nlohmann::json(*m.accuracy) : nlohmann::json(nullptr);
        row["iou"] = m.iou ? nlohmann::json(*m.iou) : nlohmann::json(nullptr);
        row["bf_score"] = m.bf ? nlohmann::json(*m.bf) : nlohmann::json(nullptr);
        classes.push_back(row);
    }
    nlohmann::json aggregates{{"global_accuracy", report.aggregates.global_accuracy},
                              {"mean_accuracy", report.aggregates.mean_accuracy},
                              {"mean_iou", report.aggregates.mean_iou},
                              {"weighted_iou", report.aggregates.weighted_iou}};
    aggregates["mean_bf_score"] =
        report.aggregates.mean_bf ? nlohmann::json(*report.aggregates.mean_bf) : nlohmann::json(nullptr);
    return {{"classes", classes},
            {"aggregates", aggregates},
            {"any_undefined", report.any_undefined},
            {"total_pixels", report.total_pixels},
            {"image_count", report.image_count}};
}

namespace {

std::string fmt_metric(const std::optional<double>& v) {
    if (!v) return "       --";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%9.5f", *v);
    return buf;
}

}  // namespace

std::string report_to_table(const EvalReport& report) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-12s %9s %9s %9s %12s %9s\n", "class", "accuracy", "iou",
                  "bf_score", "pixels", "freq");
    out += buf;
    for (std::size_t i = 0; i < report.classes.size(); ++i) {
        const ClassMetrics& m = report.classes[i];
        std::snprintf(buf, sizeof(buf), "%-12s %s %s %s %12lld %9.5f\n",
                      class_name(m.class_id).c_str(), fmt_metric(m.accuracy).c_str(),
                      fmt_metric(m.iou).c_str(), fmt_metric(m.bf).c_str(),
                      static_cast<long long>(report.truth_pixels[i]), report.frequencies[i]);
        out += buf;
    }
    out += "\n";
    const AggregateMetrics& a = report.aggregates;
    std::snprintf(buf, sizeof(buf), "%-16s %9.5f\n", "global_accuracy", a.global_accuracy);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %9.5f\n", "mean_accuracy", a.mean_accuracy);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %9.5f\n", "mean_iou", a.mean_iou);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %9.5f\n", "weighted_iou", a.weighted_iou);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %s\n", "mean_bf_score", fmt_metric(a.mean_bf).c_str());
    out += buf;
    return out;
}

}  // namespace dcedseg
