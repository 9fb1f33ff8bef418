#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "dcedseg/error.hpp"

namespace dcedseg {

// Class ids of the fused label scheme.
inline constexpr std::uint8_t kBackgroundId = 0;
inline constexpr std::uint8_t kRbcId = 1;
inline constexpr std::uint8_t kWbcId = 2;
inline constexpr std::uint8_t kPlateletId = 3;
inline constexpr int kNumClasses = 4;

// Generic 8-bit raster as it comes off a PNG: 1 (gray) or 3 (RGB)
// interleaved channels, row-major.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// 3-channel 8-bit image, interleaved RGB.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    std::uint8_t at(int x, int y, int c) const {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

// Per-pixel {0,1} mask.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const BinaryMask&) const = default;
};

// Per-pixel class-id image; ids are restricted to {0,1,2,3}.
struct LabelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> ids;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    std::uint8_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return ids[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const LabelMask&) const = default;
};

inline void validate_label_mask(const LabelMask& m, const std::string& context = "label mask") {
    if (m.ids.size() != m.pixel_count())
        throw ShapeError(context + ": id buffer does not match dimensions");
    for (std::uint8_t v : m.ids)
        if (v >= kNumClasses)
            throw ValueError(context + ": id " + std::to_string(static_cast<int>(v)) +
                             " outside {0,1,2,3}");
}

inline RgbImage to_rgb(const Image8& img) {
    if (img.channels != 3) throw ShapeError("to_rgb: image does not have 3 channels");
    return RgbImage{img.width, img.height, img.data};
}

}  // namespace dcedseg
