#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dcedseg/image.hpp"

namespace dcedseg {

// One image/label pair ready for the datastore.
struct DatasetEntry {
    RgbImage image;
    LabelMask label;
    std::string source_id;
};

// Thresholds a 1- or 3-channel raster: a pixel is set when any channel is
// nonzero. Throws ValueError for other channel counts.
BinaryMask binarize_mask(const Image8& raw);

// Fuses per-class masks into one id image by sequential assignment:
// RBC pixels first (id 1), then WBC (id 2), then platelets (id 3), so a
// later class overwrites an earlier one where masks overlap. Untouched
// pixels stay background (id 0).
LabelMask fuse_masks(const BinaryMask& rbc, const BinaryMask& wbc, const BinaryMask& plt);

struct SplitMasks {
    BinaryMask rbc;
    BinaryMask wbc;
    BinaryMask plt;
};

// Inverse of fuse_masks: bit c set exactly where the label id equals c.
SplitMasks split_label(const LabelMask& label);

// Bilinear resample, half-pixel centers; resizing to the same dimensions is
// a bitwise copy.
RgbImage resize_bilinear(const RgbImage& img, int target_width, int target_height);

// Nearest-neighbor resample; never introduces an id absent from the input.
LabelMask resize_nearest(const LabelMask& label, int target_width, int target_height);

// Resizes an image (bilinear) with its label (nearest-neighbor) to a common
// target size.
DatasetEntry resize_pair(const RgbImage& image, const LabelMask& label,
                         int target_width, int target_height, std::string source_id = {});

// Color-coded view of a label mask: 1 -> red, 2 -> blue, 3 -> green, 0 -> black.
RgbImage label_preview(const LabelMask& label);

struct ManifestRow {
    std::string image_path;  // relative to the manifest directory
    std::string label_path;
};

struct Manifest {
    std::filesystem::path root;
    std::vector<ManifestRow> rows;

    std::size_t size() const { return rows.size(); }
};

struct DatastoreOptions {
    bool write_preview = false;
};

inline constexpr const char* kManifestName = "manifest.tsv";

// Persists entries under root/images/<id>.png and root/labels/<id>.png
// (labels as 8-bit grayscale raw ids) and writes root/manifest.tsv with one
// image_path<TAB>label_path row per entry.
Manifest write_datastore(const std::vector<DatasetEntry>& entries,
                         const std::filesystem::path& root,
                         const DatastoreOptions& options = {});

// Accepts either a datastore root (expects manifest.tsv inside) or a direct
// path to a manifest file.
Manifest read_manifest(const std::filesystem::path& root_or_manifest);

DatasetEntry load_entry(const Manifest& manifest, std::size_t index);
std::vector<DatasetEntry> load_all(const Manifest& manifest);

// Filename stems (sorted) present in every given directory, considering
// only .png files. Used for the per-class mask folder convention
// (masks_rbc/, masks_wbc/, masks_plt/ keyed by stem).
std::vector<std::string> common_png_stems(const std::vector<std::filesystem::path>& dirs);

}  // namespace dcedseg
