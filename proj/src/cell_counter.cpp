#include "dcedseg/cell_counter.hpp"

#include <cstdio>

#include "dcedseg/seg_metrics.hpp"

namespace dcedseg {

std::int64_t PixelCountReport::counted_total() const {
    std::int64_t t = 0;
    for (int c = include_background ? 0 : 1; c < static_cast<int>(counts.size()); ++c)
        t += counts[static_cast<std::size_t>(c)];
    return t;
}

namespace {

void finish_frequencies(PixelCountReport& report) {
    report.frequencies.assign(report.counts.size(), 0.0);
    const std::int64_t total = report.counted_total();
    report.frequencies_defined = total > 0;
    if (!report.frequencies_defined) return;
    for (int c = report.include_background ? 0 : 1; c < static_cast<int>(report.counts.size()); ++c)
        report.frequencies[static_cast<std::size_t>(c)] =
            static_cast<double>(report.counts[static_cast<std::size_t>(c)]) / static_cast<double>(total);
}

}  // namespace

PixelCountReport count_pixels(const LabelMask& label, bool include_background) {
    validate_label_mask(label, "count_pixels");
    PixelCountReport report;
    report.include_background = include_background;
    report.image_count = 1;
    report.counts.assign(kNumClasses, 0);
    for (std::uint8_t id : label.ids) ++report.counts[id];
    finish_frequencies(report);
    return report;
}

PixelCountReport count_corpus(std::span<const LabelMask> labels, bool include_background) {
    if (labels.empty()) throw ValueError("count_corpus: empty label list");
    PixelCountReport report;
    report.include_background = include_background;
    report.image_count = static_cast<int>(labels.size());
    report.counts.assign(kNumClasses, 0);
    for (const LabelMask& label : labels) {
        validate_label_mask(label, "count_corpus");
        for (std::uint8_t id : label.ids) ++report.counts[id];
    }
    finish_frequencies(report);
    return report;
}

nlohmann::json count_report_to_json(const PixelCountReport& report) {
    nlohmann::json classes = nlohmann::json::array();
    for (int c = report.include_background ? 0 : 1; c < static_cast<int>(report.counts.size()); ++c) {
        nlohmann::json row{{"class_id", c},
                           {"name", class_name(c)},
                           {"count", report.counts[static_cast<std::size_t>(c)]}};
        row["frequency"] = report.frequencies_defined
            ? nlohmann::json(report.frequencies[static_cast<std::size_t>(c)]) : nlohmann::json(nullptr);
        classes.push_back(row);
    }
    return {{"classes", classes},
            {"counted_pixels", report.counted_total()},
            {"frequencies_defined", report.frequencies_defined},
            {"include_background", report.include_background},
            {"image_count", report.image_count}};
}

std::string count_report_to_csv(const PixelCountReport& report) {
    std::string out = "class,count,frequency\n";
    char buf[96];
    for (int c = report.include_background ? 0 : 1; c < static_cast<int>(report.counts.size()); ++c) {
        if (report.frequencies_defined)
            std::snprintf(buf, sizeof(buf), "%s,%lld,%.17g\n", class_name(c).c_str(),
                          static_cast<long long>(report.counts[static_cast<std::size_t>(c)]),
                          report.frequencies[static_cast<std::size_t>(c)]);
        else
            std::snprintf(buf, sizeof(buf), "%s,%lld,\n", class_name(c).c_str(),
                          static_cast<long long>(report.counts[static_cast<std::size_t>(c)]));
        out += buf;
    }
    return out;
}

}  // namespace dcedseg
