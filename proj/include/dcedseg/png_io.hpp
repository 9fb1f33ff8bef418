#pragma once

#include <filesystem>

#include "dcedseg/image.hpp"

namespace dcedseg {

// Reads an 8-bit PNG. Grayscale files come back with 1 channel, everything
// else (palette, RGB, RGBA) is expanded to 3-channel RGB.
Image8 read_png(const std::filesystem::path& path);

RgbImage read_png_rgb(const std::filesystem::path& path);

void write_png_gray(const std::filesystem::path& path, const std::uint8_t* data, int width, int height);
void write_png_rgb(const std::filesystem::path& path, const std::uint8_t* rgb, int width, int height);

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
    write_png_rgb(path, img.rgb.data(), img.width, img.height);
}

}  // namespace dcedseg
