#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcedseg/image.hpp"

namespace dcedseg {

// Exact per-class pixel histogram with frequencies over the counted classes.
// With background excluded (the default) frequencies are shares of cell
// pixels only; they are undefined when no pixel belongs to a counted class.
struct PixelCountReport {
    std::vector<std::int64_t> counts;   // indexed by class id, size kNumClasses
    std::vector<double> frequencies;    // parallel; zeros when undefined
    bool frequencies_defined = false;
    bool include_background = false;
    int image_count = 0;

    std::int64_t counted_total() const;
};

PixelCountReport count_pixels(const LabelMask& label, bool include_background = false);

// Elementwise sum of per-image counts; equal to counting the concatenation.
PixelCountReport count_corpus(std::span<const LabelMask> labels, bool include_background = false);

nlohmann::json count_report_to_json(const PixelCountReport& report);

// `class,count,frequency` rows, one per counted class.
std::string count_report_to_csv(const PixelCountReport& report);

}  // namespace dcedseg
