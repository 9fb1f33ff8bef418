#include "dcedseg/smear_synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dcedseg/json_util.hpp"
#include "dcedseg/png_io.hpp"
#include "dcedseg/rng.hpp"

namespace dcedseg {

namespace {

void validate_synth_config(const SynthConfig& c) {
    if (c.width < 1 || c.height < 1) throw ConfigError("synth config: image size must be positive");
    auto check_count = [](const std::array<int, 2>& r, const char* what) {
        if (r[0] < 0 || r[1] < r[0])
            throw ConfigError(std::string("synth config: bad count range for ") + what);
    };
    auto check_radius = [](const std::array<double, 2>& r, const char* what) {
        if (r[0] <= 0 || r[1] < r[0])
            throw ConfigError(std::string("synth config: bad radius range for ") + what);
    };
    check_count(c.rbc_count, "rbc");
    check_count(c.wbc_count, "wbc");
    check_count(c.plt_count, "plt");
    check_radius(c.rbc_radius, "rbc");
    check_radius(c.wbc_radius, "wbc");
    check_radius(c.plt_radius, "plt");
    for (double f : c.target_frequencies)
        if (f <= 0) throw ConfigError("synth config: target frequencies must be positive");
    if (c.noise_amplitude < 0) throw ConfigError("synth config: noise amplitude must be >= 0");
}

template <std::size_t N, class T>
std::array<T, N> parse_array(const nlohmann::json& j, const char* key) {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != N)
        throw ConfigError(std::string("synth config: ") + key + " must be an array of " +
                          std::to_string(N));
    std::array<T, N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = a[i].get<T>();
    return out;
}

struct Ellipse {
    double cx, cy, rx, ry;
};

Ellipse random_ellipse(Rng& rng, const std::array<double, 2>& radius_range, int w, int h) {
    Ellipse e;
    e.rx = rng.uniform(radius_range[0], radius_range[1]);
    e.ry = rng.uniform(radius_range[0], radius_range[1]);
    auto center = [&](double r, int dim) {
        double lo = r, hi = dim - 1 - r;
        if (hi < lo) lo = hi = (dim - 1) / 2.0;
        return rng.uniform(lo, hi);
    };
    e.cx = center(e.rx, w);
    e.cy = center(e.ry, h);
    return e;
}

// Paints an ellipse into the image with a radial color ramp and records its
// exact pixel set in the class mask.
void paint(const Ellipse& e, RgbImage& img, BinaryMask& mask,
           const std::array<std::uint8_t, 3>& center_color,
           const std::array<std::uint8_t, 3>& rim_color) {
    const int x0 = std::max(0, static_cast<int>(std::floor(e.cx - e.rx)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(e.cx + e.rx)));
    const int y0 = std::max(0, static_cast<int>(std::floor(e.cy - e.ry)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(e.cy + e.ry)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double nx = (x - e.cx) / e.rx;
            const double ny = (y - e.cy) / e.ry;
            const double t2 = nx * nx + ny * ny;
            if (t2 > 1.0) continue;
            const double t = std::sqrt(t2);
            mask.bits[static_cast<std::size_t>(y) * img.width + x] = 1;
            for (int c = 0; c < 3; ++c) {
                const double v = center_color[static_cast<std::size_t>(c)] +
                                 (rim_color[static_cast<std::size_t>(c)] -
                                  static_cast<double>(center_color[static_cast<std::size_t>(c)])) * t;
                img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
}

std::int64_t area_of(const BinaryMask& m) {
    std::int64_t n = 0;
    for (std::uint8_t b : m.bits) n += b;
    return n;
}

}  // namespace

SynthConfig parse_synth_config(const nlohmann::json& j) {
    require_keys(j,
                 {"width", "height", "rbc_count", "wbc_count", "plt_count", "rbc_radius",
                  "wbc_radius", "plt_radius", "target_frequencies", "background",
                  "noise_amplitude", "seed"},
                 "synth config");
    SynthConfig c;
    if (j.contains("width")) c.width = j.at("width").get<int>();
    if (j.contains("height")) c.height = j.at("height").get<int>();
    if (j.contains("rbc_count")) c.rbc_count = parse_array<2, int>(j, "rbc_count");
    if (j.contains("wbc_count")) c.wbc_count = parse_array<2, int>(j, "wbc_count");
    if (j.contains("plt_count")) c.plt_count = parse_array<2, int>(j, "plt_count");
    if (j.contains("rbc_radius")) c.rbc_radius = parse_array<2, double>(j, "rbc_radius");
    if (j.contains("wbc_radius")) c.wbc_radius = parse_array<2, double>(j, "wbc_radius");
    if (j.contains("plt_radius")) c.plt_radius = parse_array<2, double>(j, "plt_radius");
    if (j.contains("target_frequencies"))
        c.target_frequencies = parse_array<3, double>(j, "target_frequencies");
    if (j.contains("background")) c.background = parse_array<3, std::uint8_t>(j, "background");
    if (j.contains("noise_amplitude")) c.noise_amplitude = j.at("noise_amplitude").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    validate_synth_config(c);
    return c;
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
    return {{"width", c.width},
            {"height", c.height},
            {"rbc_count", c.rbc_count},
            {"wbc_count", c.wbc_count},
            {"plt_count", c.plt_count},
            {"rbc_radius", c.rbc_radius},
            {"wbc_radius", c.wbc_radius},
            {"plt_radius", c.plt_radius},
            {"target_frequencies", c.target_frequencies},
            {"background", c.background},
            {"noise_amplitude", c.noise_amplitude},
            {"seed", c.seed}};
}

SynthSample generate(const SynthConfig& config) {
    validate_synth_config(config);
    Rng rng(config.seed);

    SynthSample s;
    s.image.width = config.width;
    s.image.height = config.height;
    s.image.rgb.resize(s.image.pixel_count() * 3);
    for (std::size_t i = 0; i < s.image.pixel_count(); ++i)
        for (int c = 0; c < 3; ++c)
            s.image.rgb[3 * i + c] = config.background[static_cast<std::size_t>(c)];
    for (BinaryMask* m : {&s.rbc, &s.wbc, &s.plt}) {
        m->width = config.width;
        m->height = config.height;
        m->bits.assign(s.image.pixel_count(), 0);
    }

    // pale red annular discs
    const int n_rbc = static_cast<int>(rng.uniform_int(config.rbc_count[0], config.rbc_count[1]));
    for (int i = 0; i < n_rbc; ++i)
        paint(random_ellipse(rng, config.rbc_radius, config.width, config.height), s.image, s.rbc,
              {226, 162, 152}, {190, 100, 100});

    // few large purple discs
    const int n_wbc = static_cast<int>(rng.uniform_int(config.wbc_count[0], config.wbc_count[1]));
    for (int i = 0; i < n_wbc; ++i)
        paint(random_ellipse(rng, config.wbc_radius, config.width, config.height), s.image, s.wbc,
              {104, 66, 150}, {128, 88, 172});

    // tiny magenta specks
    const int n_plt = static_cast<int>(rng.uniform_int(config.plt_count[0], config.plt_count[1]));
    for (int i = 0; i < n_plt; ++i)
        paint(random_ellipse(rng, config.plt_radius, config.width, config.height), s.image, s.plt,
              {206, 70, 172}, {198, 88, 166});

    if (config.noise_amplitude > 0) {
        for (std::uint8_t& v : s.image.rgb) {
            const int d = static_cast<int>(rng.uniform_int(-config.noise_amplitude,
                                                           config.noise_amplitude));
            v = static_cast<std::uint8_t>(std::clamp(static_cast<int>(v) + d, 0, 255));
        }
    }

    s.painted_area = {area_of(s.rbc), area_of(s.wbc), area_of(s.plt)};
    return s;
}

Manifest generate_corpus(const SynthConfig& config, int n, const std::filesystem::path& root,
                         const DatastoreOptions& options) {
    if (n < 1) throw ValueError("generate_corpus: n must be >= 1");
    validate_synth_config(config);

    std::error_code ec;
    for (const char* dir : {"masks_rbc", "masks_wbc", "masks_plt"})
        std::filesystem::create_directories(root / dir, ec);

    std::vector<DatasetEntry> entries;
    nlohmann::json meta_entries = nlohmann::json::array();
    std::vector<std::uint8_t> mask_buf;
    for (int i = 0; i < n; ++i) {
        SynthConfig entry_config = config;
        entry_config.seed = substream_seed(config.seed, static_cast<std::uint64_t>(i));
        SynthSample sample = generate(entry_config);

        char id[32];
        std::snprintf(id, sizeof(id), "synth_%04d", i);
        entries.push_back({sample.image, fuse_masks(sample.rbc, sample.wbc, sample.plt), id});

        const BinaryMask* masks[3] = {&sample.rbc, &sample.wbc, &sample.plt};
        const char* dirs[3] = {"masks_rbc", "masks_wbc", "masks_plt"};
        for (int m = 0; m < 3; ++m) {
            mask_buf.assign(masks[m]->bits.size(), 0);
            for (std::size_t p = 0; p < mask_buf.size(); ++p)
                mask_buf[p] = masks[m]->bits[p] ? 255 : 0;
            write_png_gray(root / dirs[m] / (std::string(id) + ".png"), mask_buf.data(),
                           config.width, config.height);
        }
        meta_entries.push_back({{"id", id},
                                {"painted",
                                 {{"rbc", sample.painted_area[0]},
                                  {"wbc", sample.painted_area[1]},
                                  {"plt", sample.painted_area[2]}}}});
    }

    Manifest manifest = write_datastore(entries, root, options);

    nlohmann::json meta{{"config", synth_config_to_json(config)}, {"entries", meta_entries}};
    const auto meta_path = root / kSynthMetaName;
    std::ofstream out(meta_path);
    if (!out) throw IoError("cannot write synth metadata", meta_path.string());
    out << meta.dump(2) << '\n';
    return manifest;
}

}  // namespace dcedseg
