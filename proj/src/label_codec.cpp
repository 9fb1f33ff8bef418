#include "dcedseg/label_codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "dcedseg/png_io.hpp"

namespace dcedseg {

BinaryMask binarize_mask(const Image8& raw) {
    if (raw.channels != 1 && raw.channels != 3)
        throw ValueError("binarize_mask: malformed mask, expected 1 or 3 channels, got " +
                         std::to_string(raw.channels));
    BinaryMask out{raw.width, raw.height, {}};
    out.bits.resize(raw.pixel_count());
    const int ch = raw.channels;
    for (std::size_t i = 0; i < out.bits.size(); ++i) {
        std::uint8_t any = 0;
        for (int c = 0; c < ch; ++c) any |= raw.data[i * ch + c];
        out.bits[i] = any > 0 ? 1 : 0;
    }
    return out;
}

static void check_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError(std::string(what) + ": mask dimensions differ");
}

LabelMask fuse_masks(const BinaryMask& rbc, const BinaryMask& wbc, const BinaryMask& plt) {
    check_same_dims(rbc, wbc, "fuse_masks");
    check_same_dims(rbc, plt, "fuse_masks");
    LabelMask out{rbc.width, rbc.height, {}};
    out.ids.assign(rbc.pixel_count(), kBackgroundId);
    for (std::size_t i = 0; i < out.ids.size(); ++i)
        if (rbc.bits[i]) out.ids[i] = kRbcId;
    for (std::size_t i = 0; i < out.ids.size(); ++i)
        if (wbc.bits[i]) out.ids[i] = kWbcId;
    for (std::size_t i = 0; i < out.ids.size(); ++i)
        if (plt.bits[i]) out.ids[i] = kPlateletId;
    return out;
}

SplitMasks split_label(const LabelMask& label) {
    SplitMasks out;
    for (BinaryMask* m : {&out.rbc, &out.wbc, &out.plt}) {
        m->width = label.width;
        m->height = label.height;
        m->bits.assign(label.pixel_count(), 0);
    }
    for (std::size_t i = 0; i < label.ids.size(); ++i) {
        switch (label.ids[i]) {
            case kRbcId: out.rbc.bits[i] = 1; break;
            case kWbcId: out.wbc.bits[i] = 1; break;
            case kPlateletId: out.plt.bits[i] = 1; break;
            default: break;
        }
    }
    return out;
}

RgbImage resize_bilinear(const RgbImage& img, int target_width, int target_height) {
    if (target_width < 1 || target_height < 1)
        throw ValueError("resize_bilinear: target dimensions must be >= 1");
    RgbImage out{target_width, target_height, {}};
    out.rgb.resize(out.pixel_count() * 3);
    const double sx = static_cast<double>(img.width) / target_width;
    const double sy = static_cast<double>(img.height) / target_height;
    for (int y = 0; y < target_height; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        if (y0 < 0) { y0 = 0; wy = 0.0; }
        int y1 = y0 + 1 < img.height ? y0 + 1 : img.height - 1;
        if (y0 >= img.height) { y0 = y1 = img.height - 1; wy = 0.0; }
        for (int x = 0; x < target_width; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            if (x0 < 0) { x0 = 0; wx = 0.0; }
            int x1 = x0 + 1 < img.width ? x0 + 1 : img.width - 1;
            if (x0 >= img.width) { x0 = x1 = img.width - 1; wx = 0.0; }
            for (int c = 0; c < 3; ++c) {
                const double v00 = img.at(x0, y0, c);
                const double v10 = img.at(x1, y0, c);
                const double v01 = img.at(x0, y1, c);
                const double v11 = img.at(x1, y1, c);
                const double v = (1 - wy) * ((1 - wx) * v00 + wx * v10) +
                                 wy * ((1 - wx) * v01 + wx * v11);
                out.rgb[(static_cast<std::size_t>(y) * target_width + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

LabelMask resize_nearest(const LabelMask& label, int target_width, int target_height) {
    if (target_width < 1 || target_height < 1)
        throw ValueError("resize_nearest: target dimensions must be >= 1");
    LabelMask out{target_width, target_height, {}};
    out.ids.resize(out.pixel_count());
    const double sx = static_cast<double>(label.width) / target_width;
    const double sy = static_cast<double>(label.height) / target_height;
    for (int y = 0; y < target_height; ++y) {
        int sy_i = static_cast<int>((y + 0.5) * sy);
        sy_i = std::clamp(sy_i, 0, label.height - 1);
        for (int x = 0; x < target_width; ++x) {
            int sx_i = static_cast<int>((x + 0.5) * sx);
            sx_i = std::clamp(sx_i, 0, label.width - 1);
            out.at(x, y) = label.at(sx_i, sy_i);
        }
    }
    return out;
}

DatasetEntry resize_pair(const RgbImage& image, const LabelMask& label,
                         int target_width, int target_height, std::string source_id) {
    DatasetEntry entry;
    entry.image = resize_bilinear(image, target_width, target_height);
    entry.label = resize_nearest(label, target_width, target_height);
    entry.source_id = std::move(source_id);
    return entry;
}

RgbImage label_preview(const LabelMask& label) {
    static constexpr std::uint8_t palette[kNumClasses][3] = {
        {0, 0, 0},      // background
        {255, 0, 0},    // rbc -> red
        {0, 0, 255},    // wbc -> blue
        {0, 255, 0},    // platelet -> green
    };
    RgbImage out{label.width, label.height, {}};
    out.rgb.resize(label.pixel_count() * 3);
    for (std::size_t i = 0; i < label.ids.size(); ++i) {
        const std::uint8_t id = label.ids[i] < kNumClasses ? label.ids[i] : 0;
        out.rgb[3 * i] = palette[id][0];
        out.rgb[3 * i + 1] = palette[id][1];
        out.rgb[3 * i + 2] = palette[id][2];
    }
    return out;
}

Manifest write_datastore(const std::vector<DatasetEntry>& entries,
                         const std::filesystem::path& root,
                         const DatastoreOptions& options) {
    std::error_code ec;
    std::filesystem::create_directories(root / "images", ec);
    std::filesystem::create_directories(root / "labels", ec);
    if (options.write_preview) std::filesystem::create_directories(root / "previews", ec);

    Manifest manifest;
    manifest.root = root;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const DatasetEntry& e = entries[i];
        if (e.image.width != e.label.width || e.image.height != e.label.height)
            throw ShapeError("write_datastore: image and label dimensions differ for entry " +
                             std::to_string(i));
        validate_label_mask(e.label, "write_datastore entry " + std::to_string(i));
        std::string id = e.source_id;
        if (id.empty()) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%06zu", i);
            id = buf;
        }
        const std::string image_rel = "images/" + id + ".png";
        const std::string label_rel = "labels/" + id + ".png";
        write_png(root / image_rel, e.image);
        write_png_gray(root / label_rel, e.label.ids.data(), e.label.width, e.label.height);
        if (options.write_preview)
            write_png(root / ("previews/" + id + ".png"), label_preview(e.label));
        manifest.rows.push_back({image_rel, label_rel});
    }

    const auto manifest_path = root / kManifestName;
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot open manifest for writing", manifest_path.string());
    for (const ManifestRow& row : manifest.rows)
        out << row.image_path << '\t' << row.label_path << '\n';
    out.close();
    if (!out) throw IoError("failed writing manifest", manifest_path.string());
    return manifest;
}

Manifest read_manifest(const std::filesystem::path& root_or_manifest) {
    std::filesystem::path manifest_path = root_or_manifest;
    if (std::filesystem::is_directory(manifest_path)) manifest_path /= kManifestName;
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest", manifest_path.string());

    Manifest manifest;
    manifest.root = manifest_path.parent_path();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw IoError("manifest row missing tab separator", manifest_path.string());
        manifest.rows.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return manifest;
}

DatasetEntry load_entry(const Manifest& manifest, std::size_t index) {
    const ManifestRow& row = manifest.rows.at(index);
    DatasetEntry entry;
    entry.image = read_png_rgb(manifest.root / row.image_path);
    Image8 label_img = read_png(manifest.root / row.label_path);
    if (label_img.channels != 1)
        throw ValueError("load_entry: label PNG is not grayscale: " + row.label_path);
    entry.label = LabelMask{label_img.width, label_img.height, std::move(label_img.data)};
    validate_label_mask(entry.label, row.label_path);
    entry.source_id = std::filesystem::path(row.image_path).stem().string();
    return entry;
}

std::vector<DatasetEntry> load_all(const Manifest& manifest) {
    std::vector<DatasetEntry> entries;
    entries.reserve(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) entries.push_back(load_entry(manifest, i));
    return entries;
}

std::vector<std::string> common_png_stems(const std::vector<std::filesystem::path>& dirs) {
    std::set<std::string> common;
    bool first = true;
    for (const auto& dir : dirs) {
        std::set<std::string> stems;
        if (std::filesystem::is_directory(dir)) {
            for (const auto& e : std::filesystem::directory_iterator(dir)) {
                if (e.is_regular_file() && e.path().extension() == ".png")
                    stems.insert(e.path().stem().string());
            }
        }
        if (first) {
            common = std::move(stems);
            first = false;
        } else {
            std::set<std::string> inter;
            std::set_intersection(common.begin(), common.end(), stems.begin(), stems.end(),
                                  std::inserter(inter, inter.begin()));
            common = std::move(inter);
        }
    }
    return {common.begin(), common.end()};
}

}  // namespace dcedseg
