#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcedseg/tensor.hpp"

namespace dcedseg {

struct NamedTensor {
    std::string name;
    const Tensor* tensor;
};

// Self-describing binary container: per tensor its name, shape and row-major
// float64 values, little-endian throughout. Byte-stable for identical inputs.
// An optional metadata string (JSON by convention) rides along in the header.
void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors,
                     const std::string& metadata = {});

struct LoadedCheckpoint {
    std::string metadata;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dcedseg
