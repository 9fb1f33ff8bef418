#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "dcedseg/label_codec.hpp"

namespace dcedseg {

// Deterministic synthetic blood-smear generator: filled ellipses on a tinted
// background, exact per-class masks, additive noise on the image only.
struct SynthConfig {
    int width = 256;
    int height = 256;
    std::array<int, 2> rbc_count{55, 75};
    std::array<int, 2> wbc_count{1, 2};
    std::array<int, 2> plt_count{3, 6};
    std::array<double, 2> rbc_radius{10.0, 14.0};
    std::array<double, 2> wbc_radius{16.0, 20.0};
    std::array<double, 2> plt_radius{2.0, 3.0};
    // frequency split the default geometry is tuned toward (rbc, wbc, platelet)
    std::array<double, 3> target_frequencies{0.9355, 0.0609, 0.0034};
    std::array<std::uint8_t, 3> background{235, 228, 232};
    int noise_amplitude = 4;
    std::uint64_t seed = 0;
};

SynthConfig parse_synth_config(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& config);

struct SynthSample {
    RgbImage image;
    BinaryMask rbc;
    BinaryMask wbc;
    BinaryMask plt;
    // exact painted pixels per class, before overlap resolution
    std::array<std::int64_t, 3> painted_area{0, 0, 0};
};

SynthSample generate(const SynthConfig& config);

// n entries written as a datastore; per-class masks land in masks_rbc/,
// masks_wbc/, masks_plt/ and the painted areas in synth_meta.json. Entry i
// draws from the (seed, i) substream, so generation order does not matter.
Manifest generate_corpus(const SynthConfig& config, int n, const std::filesystem::path& root,
                         const DatastoreOptions& options = {});

inline constexpr const char* kSynthMetaName = "synth_meta.json";

}  // namespace dcedseg
