#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dcedseg/cell_counter.hpp"
#include "dcedseg/dced.hpp"
#include "dcedseg/json_util.hpp"
#include "dcedseg/label_codec.hpp"
#include "dcedseg/png_io.hpp"
#include "dcedseg/seg_metrics.hpp"
#include "dcedseg/smear_synth.hpp"
#include "dcedseg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SynthArgs {
    std::string out;
    std::string config;
    int count = 8;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool preview = false;
};

struct PreprocessArgs {
    std::string images;
    std::string masks_rbc, masks_wbc, masks_plt;
    std::string out;
    std::string size = "300x300";
    bool preview = false;
};

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

struct EvalArgs {
    std::string data;
    std::string checkpoint;
    std::string report;
    double bf_tolerance = -1.0;
    bool include_background = false;
    bool eight_connected = false;
};

struct CountArgs {
    std::string labels;
    std::string checkpoint;
    std::string data;
    std::string out;
    bool include_background = false;
};

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw dcedseg::IoError("cannot open output file", path.string());
    f << text;
    f.close();
    if (!f) throw dcedseg::IoError("failed writing output file", path.string());
}

std::pair<int, int> parse_size(const std::string& size) {
    int w = 0, h = 0;
    if (std::sscanf(size.c_str(), "%dx%d", &w, &h) != 2 || w < 1 || h < 1)
        throw dcedseg::ValueError("bad --size \"" + size + "\", expected WxH like 300x300");
    return {w, h};
}

int run_synth(const SynthArgs& args) {
    dcedseg::SynthConfig config;
    if (!args.config.empty())
        config = dcedseg::parse_synth_config(dcedseg::load_json_file(args.config));
    if (args.seed_given || args.config.empty()) config.seed = args.seed;

    dcedseg::DatastoreOptions opts;
    opts.write_preview = args.preview;
    const auto manifest = dcedseg::generate_corpus(config, args.count, args.out, opts);
    std::cout << (manifest.root / dcedseg::kManifestName).string() << "\n";
    return 0;
}

int run_preprocess(const PreprocessArgs& args) {
    const fs::path images_dir = args.images;
    auto mask_dir = [&](const std::string& given, const char* name) {
        return given.empty() ? images_dir.parent_path() / name : fs::path(given);
    };
    const fs::path rbc_dir = mask_dir(args.masks_rbc, "masks_rbc");
    const fs::path wbc_dir = mask_dir(args.masks_wbc, "masks_wbc");
    const fs::path plt_dir = mask_dir(args.masks_plt, "masks_plt");
    const auto [tw, th] = parse_size(args.size);

    const auto stems = dcedseg::common_png_stems({images_dir, rbc_dir, wbc_dir, plt_dir});
    if (stems.empty())
        std::cerr << "warning: no filename stem is present in all of " << images_dir << ", "
                  << rbc_dir << ", " << wbc_dir << ", " << plt_dir << "\n";

    std::vector<dcedseg::DatasetEntry> entries;
    for (const std::string& stem : stems) {
        const auto image = dcedseg::read_png_rgb(images_dir / (stem + ".png"));
        const auto rbc = dcedseg::binarize_mask(dcedseg::read_png(rbc_dir / (stem + ".png")));
        const auto wbc = dcedseg::binarize_mask(dcedseg::read_png(wbc_dir / (stem + ".png")));
        const auto plt = dcedseg::binarize_mask(dcedseg::read_png(plt_dir / (stem + ".png")));
        const auto label = dcedseg::fuse_masks(rbc, wbc, plt);
        if (label.width != image.width || label.height != image.height)
            throw dcedseg::ShapeError("preprocess: masks and image disagree on size for stem " + stem);
        entries.push_back(dcedseg::resize_pair(image, label, tw, th, stem));
    }

    dcedseg::DatastoreOptions opts;
    opts.write_preview = args.preview;
    const auto manifest = dcedseg::write_datastore(entries, args.out, opts);
    std::cout << (manifest.root / dcedseg::kManifestName).string() << "\n";
    return 0;
}

int run_train(const TrainArgs& args) {
    json train_json = json::object();
    json network_json;
    if (!args.config.empty()) {
        train_json = dcedseg::load_json_file(args.config);
        if (train_json.contains("network")) {
            network_json = train_json.at("network");
            train_json.erase("network");
        }
    }
    dcedseg::TrainConfig config = dcedseg::parse_train_config(train_json);
    if (args.seed_given) config.seed = args.seed;

    const auto manifest = dcedseg::read_manifest(args.data);
    const auto split = dcedseg::split_dataset(manifest, config);

    std::vector<dcedseg::DatasetEntry> train_set;
    for (std::size_t idx : split.train) train_set.push_back(dcedseg::load_entry(manifest, idx));

    dcedseg::NetworkConfig net_config;
    if (!network_json.is_null()) {
        net_config = dcedseg::parse_network_config(network_json);
        if (!network_json.contains("seed")) net_config.seed = config.seed;
    } else {
        net_config = dcedseg::NetworkConfig::tiny(train_set.front().image.width,
                                                  train_set.front().image.height,
                                                  dcedseg::kNumClasses, config.seed);
    }

    const fs::path out_dir = args.out;
    fs::create_directories(out_dir);

    // persist the split so eval/count can target the held-out rows
    auto write_split = [&](const char* name, const std::vector<std::size_t>& rows) {
        std::string text;
        for (std::size_t idx : rows) {
            const auto& row = manifest.rows[idx];
            text += fs::absolute(manifest.root / row.image_path).string() + "\t" +
                    fs::absolute(manifest.root / row.label_path).string() + "\n";
        }
        write_text_file(out_dir / name, text);
    };
    write_split("train_manifest.tsv", split.train);
    write_split("test_manifest.tsv", split.test);

    dcedseg::DcedModel model = dcedseg::build(net_config);
    const auto result = dcedseg::train(model, train_set, config, out_dir);
    dcedseg::write_train_log_csv(out_dir / "train_log.csv", result.log);

    std::cout << (out_dir / "train_log.csv").string() << "\n";
    if (!result.checkpoints.empty()) std::cout << result.checkpoints.back().string() << "\n";
    return 0;
}

int run_eval(const EvalArgs& args) {
    const auto model = dcedseg::load_model(args.checkpoint);
    const auto entries = dcedseg::load_all(dcedseg::read_manifest(args.data));

    dcedseg::EvalOptions options;
    options.bf_tolerance = args.bf_tolerance;
    options.eight_connected_boundaries = args.eight_connected;
    if (args.include_background) options.evaluated = {0, 1, 2, 3};

    const auto report = dcedseg::evaluate_on(model, entries, options);
    write_text_file(fs::path(args.report + ".json"), dcedseg::report_to_json(report).dump(2) + "\n");
    const std::string table = dcedseg::report_to_table(report);
    write_text_file(fs::path(args.report + ".txt"), table);
    std::cout << table;

    if (report.any_undefined) {
        std::cerr << "error: at least one requested metric is undefined on this test set\n";
        return 1;
    }
    return 0;
}

int run_count(const CountArgs& args) {
    std::vector<dcedseg::LabelMask> labels;
    if (!args.labels.empty()) {
        const auto entries = dcedseg::load_all(dcedseg::read_manifest(args.labels));
        for (const auto& e : entries) labels.push_back(e.label);
    } else {
        const auto model = dcedseg::load_model(args.checkpoint);
        const auto entries = dcedseg::load_all(dcedseg::read_manifest(args.data));
        for (const auto& e : entries) labels.push_back(dcedseg::predict(model, e.image));
    }
    if (labels.empty()) throw dcedseg::ValueError("count: no label masks to count");

    const auto report = dcedseg::count_corpus(labels, args.include_background);
    const std::string csv = dcedseg::count_report_to_csv(report);
    write_text_file(fs::path(args.out + ".json"), dcedseg::count_report_to_json(report).dump(2) + "\n");
    write_text_file(fs::path(args.out + ".csv"), csv);
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"whole-slide blood cell semantic segmentation pipeline"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic smear datastore");
    synth->add_option("--out", synth_args.out, "output datastore directory")->required();
    synth->add_option("--count", synth_args.count, "number of images")->check(CLI::PositiveNumber);
    synth->add_option("--config", synth_args.config, "synth config JSON");
    auto* synth_seed = synth->add_option("--seed", synth_args.seed, "RNG seed (default 0)");
    synth->add_flag("--preview", synth_args.preview, "also write color-coded label previews");

    PreprocessArgs pre_args;
    auto* pre = app.add_subcommand("preprocess", "fuse per-class masks and build a datastore");
    pre->add_option("--images", pre_args.images, "directory of original images (PNG)")->required();
    pre->add_option("--masks-rbc", pre_args.masks_rbc, "RBC mask directory (default: sibling masks_rbc/)");
    pre->add_option("--masks-wbc", pre_args.masks_wbc, "WBC mask directory (default: sibling masks_wbc/)");
    pre->add_option("--masks-plt", pre_args.masks_plt, "platelet mask directory (default: sibling masks_plt/)");
    pre->add_option("--out", pre_args.out, "output datastore directory")->required();
    pre->add_option("--size", pre_args.size, "target size WxH (default 300x300)");
    pre->add_flag("--preview", pre_args.preview, "also write color-coded label previews");

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "train the encoder-decoder on a datastore");
    tr->add_option("--data", train_args.data, "datastore root or manifest file")->required();
    tr->add_option("--config", train_args.config, "train config JSON (may embed a \"network\" object)");
    tr->add_option("--out", train_args.out, "output directory for checkpoints and logs")->required();
    auto* train_seed = tr->add_option("--seed", train_args.seed, "RNG seed override");

    EvalArgs eval_args;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a datastore");
    ev->add_option("--data", eval_args.data, "datastore root or manifest file")->required();
    ev->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
    ev->add_option("--report", eval_args.report, "report path prefix (writes .json and .txt)")->required();
    ev->add_option("--bf-tolerance", eval_args.bf_tolerance,
                   "boundary match tolerance in pixels (default: 0.75% of image diagonal)");
    ev->add_flag("--include-background", eval_args.include_background,
                 "evaluate the background class too");
    ev->add_flag("--eight-connected", eval_args.eight_connected,
                 "use 8-connectivity for boundary extraction");

    CountArgs count_args;
    auto* cnt = app.add_subcommand("count", "classwise pixel counting of blood cells");
    auto* labels_opt = cnt->add_option("--labels", count_args.labels,
                                       "count ground-truth labels of this datastore/manifest");
    auto* ckpt_opt = cnt->add_option("--checkpoint", count_args.checkpoint,
                                     "count predictions of this checkpoint (with --data)");
    auto* data_opt =
        cnt->add_option("--data", count_args.data, "datastore to predict on (with --checkpoint)");
    cnt->add_option("--out", count_args.out, "output path prefix (writes .json and .csv)")->required();
    cnt->add_flag("--include-background", count_args.include_background,
                  "include background pixels in counts and frequencies");
    labels_opt->excludes(ckpt_opt);
    labels_opt->excludes(data_opt);
    ckpt_opt->needs(data_opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        synth_args.seed_given = synth_seed->count() > 0;
        train_args.seed_given = train_seed->count() > 0;
        if (app.got_subcommand(synth)) return run_synth(synth_args);
        if (app.got_subcommand(pre)) return run_preprocess(pre_args);
        if (app.got_subcommand(tr)) return run_train(train_args);
        if (app.got_subcommand(ev)) return run_eval(eval_args);
        if (app.got_subcommand(cnt)) {
            if (count_args.labels.empty() && count_args.checkpoint.empty()) {
                std::cerr << "count: one of --labels or --checkpoint is required\n";
                return 2;
            }
            return run_count(count_args);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
