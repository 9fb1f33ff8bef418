// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criteria pin published-table consistency relations,
// oracle equivalence, gradient checks, shape round-trips and training
// dynamics at fixed tolerances.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dcedseg/cell_counter.hpp"
#include "dcedseg/dced.hpp"
#include "dcedseg/label_codec.hpp"
#include "dcedseg/png_io.hpp"
#include "dcedseg/seg_metrics.hpp"
#include "dcedseg/smear_synth.hpp"
#include "dcedseg/trainer.hpp"
#include "test_util.hpp"

using namespace dcedseg;

namespace {

struct Check {
    int failures = 0;
    std::string first_message;

    void expect(bool ok, const std::string& message) {
        if (!ok) {
            ++failures;
            if (first_message.empty()) first_message = message;
        }
    }
};

int run_command(const std::string& args, const std::filesystem::path& capture) {
    const std::string cmd =
        std::string(DCEDSEG_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string strip_wall_time(const std::string& csv) {
    std::string out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

// ---- criterion 1: aggregate consistency with the published tables --------

void criterion_aggregate_consistency(Check& check) {
    std::vector<ClassMetrics> classes(3);
    classes[0] = {1, 0.97451, 0.54431, std::nullopt};
    classes[1] = {2, 0.93342, 0.40626, std::nullopt};
    classes[2] = {3, 0.85112, 0.009304, std::nullopt};
    const std::vector<double> freqs{0.9355, 0.0609, 0.0034};

    const auto agg = aggregate(classes, freqs);
    check.expect(std::abs(agg.mean_accuracy - 0.91969) < 5e-5,
                 "mean accuracy " + std::to_string(agg.mean_accuracy) + " not within 5e-5 of 0.91969");
    check.expect(std::abs(agg.mean_iou - 0.31996) < 5e-5,
                 "mean IoU " + std::to_string(agg.mean_iou) + " not within 5e-5 of 0.31996");
    check.expect(std::abs(agg.weighted_iou - 0.53511) < 2e-3,
                 "weighted IoU " + std::to_string(agg.weighted_iou) + " not within 2e-3 of 0.53511");
    check.expect(std::abs(agg.global_accuracy - 0.97184) < 1e-3,
                 "global accuracy " + std::to_string(agg.global_accuracy) + " not within 1e-3 of 0.97184");
}

// ---- criterion 2: metric-oracle equivalence -------------------------------

void criterion_metric_oracles(Check& check) {
    Rng rng(2001);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto pred = testutil::random_label_mask(8, 8, rng);
        const auto truth = testutil::random_label_mask(8, 8, rng);
        const auto cm = confusion(pred, truth);
        for (int c = 1; c <= 3; ++c) {
            const auto s = testutil::brute_class_stats(pred, truth, c, {1, 2, 3});
            check.expect(cm.at(c, c) == s.tp && cm.row_sum(c) == s.tp + s.fn &&
                             cm.col_sum(c) == s.tp + s.fp,
                         "confusion tally mismatch");
            if (s.tp + s.fn > 0)
                check.expect(class_accuracy(cm, c) ==
                                 static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn),
                             "class_accuracy mismatch");
            check.expect(binary_accuracy(cm, c) ==
                             static_cast<double>(s.tp + s.tn) /
                                 static_cast<double>(s.tp + s.tn + s.fp + s.fn),
                         "binary_accuracy mismatch");
            if (s.tp + s.fp + s.fn > 0)
                check.expect(iou(cm, c) == static_cast<double>(s.tp) /
                                               static_cast<double>(s.tp + s.fp + s.fn),
                             "iou mismatch");
        }
    }

    for (int trial = 0; trial < 200; ++trial) {
        const int w = static_cast<int>(rng.uniform_int(4, 16));
        const int h = static_cast<int>(rng.uniform_int(4, 16));
        const auto pred = testutil::random_label_mask(w, h, rng);
        const auto truth = testutil::random_label_mask(w, h, rng);
        for (double tol : {0.0, 1.0, 2.0}) {
            for (int c = 1; c <= 3; ++c) {
                const auto got = boundary_match(pred, truth, c, tol);
                const auto want = testutil::brute_boundary_match(pred, truth, c, tol);
                check.expect(got.pred_total == want.pred_total &&
                                 got.pred_matched == want.pred_matched &&
                                 got.truth_total == want.truth_total &&
                                 got.truth_matched == want.truth_matched,
                             "boundary counts mismatch at tolerance " + std::to_string(tol));

                // and the F-measure itself, straight from the oracle's counts
                const auto score = bf_score(pred, truth, c, tol);
                if (want.pred_total == 0 && want.truth_total == 0) {
                    check.expect(!score.defined, "bf_score defined on a class absent from both");
                } else {
                    const double precision = want.pred_total
                        ? static_cast<double>(want.pred_matched) / static_cast<double>(want.pred_total) : 0.0;
                    const double recall = want.truth_total
                        ? static_cast<double>(want.truth_matched) / static_cast<double>(want.truth_total) : 0.0;
                    const double expected = precision + recall > 0.0
                        ? 2.0 * precision * recall / (precision + recall) : 0.0;
                    check.expect(score.defined && score.value == expected,
                                 "bf_score value mismatch at tolerance " + std::to_string(tol));
                }
            }
        }
    }
}

// ---- criterion 3: gradient verification ------------------------------------

double tiny_loss_at_param(DcedModel& model, int param_index, const Tensor& value, const Tensor& x,
                          const LabelMask& y, Tensor* grad_out) {
    auto params = model.parameters();
    Tensor* target = params[static_cast<std::size_t>(param_index)];
    const std::vector<double> saved = target->data;
    target->data = value.data;
    double loss;
    if (grad_out) {
        for (Tensor* t : params) {
            t->ensure_grad();
            t->zero_grad();
        }
        ForwardTrace trace;
        const Tensor logits = forward(model, x, &trace);
        const auto ce = softmax_cross_entropy(logits, y);
        backward(model, trace, ce.grad_logits);
        grad_out->data = target->grad;
        loss = ce.loss;
    } else {
        loss = softmax_cross_entropy(forward(model, x), y).loss;
    }
    target->data = saved;
    return loss;
}

void criterion_gradients(Check& check) {
    Rng rng(3001);
    const double step = 1e-5;
    const double tol = 1e-4;

    for (int trial = 0; trial < 20; ++trial) {
        // conv2d_backward wrt input, weights and bias
        const auto ic = rng.uniform_int(1, 3), oc = rng.uniform_int(1, 3);
        const auto k = rng.uniform_int(1, 3);
        const auto h = rng.uniform_int(k, 5), w = rng.uniform_int(k, 5);
        const auto x = testutil::random_tensor({1, ic, h, w}, rng);
        ConvParams p;
        p.weights = testutil::random_tensor({oc, ic, k, k}, rng);
        p.bias = testutil::random_tensor({oc}, rng);
        p.padding = static_cast<int>(rng.uniform_int(0, 1));
        const auto probe = testutil::random_tensor(conv2d_forward(x, p).shape, rng);

        check.expect(gradient_check(
                         [&](const Tensor& v, Tensor* g) {
                             if (g) *g = conv2d_backward(v, p, probe).grad_x;
                             return dot(conv2d_forward(v, p), probe);
                         },
                         x, step) < tol,
                     "conv grad_x check failed");
        check.expect(gradient_check(
                         [&](const Tensor& v, Tensor* g) {
                             ConvParams q = p;
                             q.weights = v;
                             if (g) *g = conv2d_backward(x, q, probe).grad_w;
                             return dot(conv2d_forward(x, q), probe);
                         },
                         p.weights, step) < tol,
                     "conv grad_w check failed");
        check.expect(gradient_check(
                         [&](const Tensor& v, Tensor* g) {
                             ConvParams q = p;
                             q.bias = v;
                             if (g) *g = conv2d_backward(x, q, probe).grad_b;
                             return dot(conv2d_forward(x, q), probe);
                         },
                         p.bias, step) < tol,
                     "conv grad_b check failed");

        // relu
        const auto xr = testutil::random_tensor({1, 2, 4, 4}, rng);
        const auto pr = testutil::random_tensor({1, 2, 4, 4}, rng);
        check.expect(gradient_check(
                         [&](const Tensor& v, Tensor* g) {
                             if (g) *g = relu_backward(v, pr);
                             return dot(relu(v), pr);
                         },
                         xr, step) < tol,
                     "relu backward check failed");

        // maxpool / maxunpool
        const auto hp = rng.uniform_int(2, 7), wp = rng.uniform_int(2, 7);
        const auto xp = testutil::random_tensor({1, 2, hp, wp}, rng);
        auto [pooled, idx] = maxpool2x2(xp);
        const auto probe_pool = testutil::random_tensor(pooled.shape, rng);
        check.expect(gradient_check(
                         [&](const Tensor& v, Tensor* g) {
                             auto [out, vidx] = maxpool2x2(v);
                             if (g) *g = maxpool2x2_backward(vidx, probe_pool);
                             return dot(out, probe_pool);
                         },
                         xp, step) < tol,
                     "maxpool backward check failed");
        const auto probe_unpool = testutil::random_tensor({1, 2, hp, wp}, rng);
        check.expect(gradient_check(
                         [&](const Tensor& v, Tensor* g) {
                             if (g) *g = maxunpool2x2_backward(idx, probe_unpool);
                             return dot(maxunpool2x2(v, idx), probe_unpool);
                         },
                         pooled, step) < tol,
                     "maxunpool backward check failed");

        // pixelwise softmax cross entropy
        const auto logits = testutil::random_tensor({1, 4, 3, 3}, rng);
        const auto labels = testutil::random_label_mask(3, 3, rng);
        check.expect(gradient_check(
                         [&](const Tensor& v, Tensor* g) {
                             const auto res = softmax_cross_entropy(v, labels);
                             if (g) *g = res.grad_logits;
                             return res.loss;
                         },
                         logits, step) < tol,
                     "softmax cross entropy check failed");
    }

    // end-to-end tiny network loss wrt every parameter tensor
    for (int trial = 0; trial < 20; ++trial) {
        auto model = build(NetworkConfig::tiny(4, 4, 4, 3000 + static_cast<std::uint64_t>(trial)));
        const auto x = testutil::random_tensor({1, 3, 4, 4}, rng, -0.5, 0.5);
        const auto y = testutil::random_label_mask(4, 4, rng);
        const int n_params = static_cast<int>(model.parameters().size());
        for (int i = 0; i < n_params; ++i) {
            const Tensor start = *model.parameters()[static_cast<std::size_t>(i)];
            const double err = gradient_check(
                [&](const Tensor& v, Tensor* g) { return tiny_loss_at_param(model, i, v, x, y, g); },
                start, step);
            check.expect(err < tol, "end-to-end gradient check failed at parameter " +
                                        std::to_string(i) + " (rel err " + std::to_string(err) + ")");
        }
    }
}

// ---- criterion 4: 300x300 shape round-trip through the vgg16 preset --------

void criterion_shape_roundtrip(Check& check) {
    auto model = build(NetworkConfig::vgg16(300, 300, 4, 4001));
    Rng rng(4002);
    const auto x = testutil::random_tensor({1, 3, 300, 300}, rng, -0.5, 0.5);
    ForwardTrace trace;
    const auto logits = forward(model, x, &trace);
    check.expect(logits.shape == std::vector<std::int64_t>{1, 4, 300, 300},
                 "logits shape is " + logits.shape_string() + ", expected (1x4x300x300)");

    const std::int64_t expected_in[] = {300, 150, 75, 37, 18};
    const std::int64_t expected_out[] = {150, 75, 37, 18, 9};
    check.expect(trace.pools.size() == 5, "expected 5 pooling stages");
    for (std::size_t i = 0; i < trace.pools.size() && i < 5; ++i) {
        check.expect(trace.pools[i].in_h == expected_in[i] && trace.pools[i].in_w == expected_in[i],
                     "pool stage " + std::to_string(i) + " input dims off the 300-150-75-37-18 chain");
        check.expect(trace.pools[i].out_h == expected_out[i] && trace.pools[i].out_w == expected_out[i],
                     "pool stage " + std::to_string(i) + " output dims off the 150-75-37-18-9 chain");
    }
}

// ---- criterion 5: overfit sanity -------------------------------------------

void criterion_overfit(Check& check) {
    const auto entries = testutil::tiny_smear_entries(2, 5001);
    auto model = build(NetworkConfig::tiny(32, 32, 4, 5001));
    TrainConfig config;
    config.epochs = 300;  // 600 iterations at batch 1 over 2 entries
    config.learning_rate = 1e-3;
    config.batch_size = 1;
    config.seed = 5001;
    const auto result = train(model, entries, config);

    check.expect(result.log.size() == 600, "expected 600 iterations");
    for (const auto& row : result.log)
        if (!std::isfinite(row.loss)) {
            check.expect(false, "non-finite loss logged");
            break;
        }
    check.expect(result.log.back().pixel_accuracy >= 0.95,
                 "final training pixel accuracy " + std::to_string(result.log.back().pixel_accuracy) +
                     " below 0.95");

    // 50-iteration loss averages, monotone nonincreasing after a 100-iteration warmup
    std::vector<double> block_means;
    for (std::size_t start = 100; start + 50 <= result.log.size(); start += 50) {
        double sum = 0.0;
        for (std::size_t i = start; i < start + 50; ++i) sum += result.log[i].loss;
        block_means.push_back(sum / 50.0);
    }
    for (std::size_t i = 1; i < block_means.size(); ++i)
        check.expect(block_means[i] <= block_means[i - 1] + 1e-12,
                     "block mean rose from " + std::to_string(block_means[i - 1]) + " to " +
                         std::to_string(block_means[i]) + " at block " + std::to_string(i));
}

// ---- criteria 6 and 7: pipeline round-trip and frequency realism -----------

void criterion_pipeline_roundtrip(Check& check, const std::filesystem::path& scratch) {
    const auto raw = scratch / "raw";
    const auto store = scratch / "store";
    const SynthConfig config;  // defaults, seed 0

    const int rc_synth =
        run_command("synth --count 20 --out " + raw.string(), scratch / "synth_out.txt");
    check.expect(rc_synth == 0, "synth subcommand failed");
    if (rc_synth != 0) return;

    const int rc_pre = run_command(
        "preprocess --images " + (raw / "images").string() + " --masks-rbc " +
            (raw / "masks_rbc").string() + " --masks-wbc " + (raw / "masks_wbc").string() +
            " --masks-plt " + (raw / "masks_plt").string() + " --out " + store.string() +
            " --size " + std::to_string(config.width) + "x" + std::to_string(config.height),
        scratch / "pre_out.txt");
    check.expect(rc_pre == 0, "preprocess subcommand failed");
    if (rc_pre != 0) return;

    const auto manifest = read_manifest(store);
    check.expect(manifest.size() == 20, "expected 20 preprocessed entries");

    const auto meta = nlohmann::json::parse(slurp(raw / kSynthMetaName));
    const auto& meta_entries = meta.at("entries");

    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto entry = load_entry(manifest, i);
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%04zu", i);

        const auto rbc = binarize_mask(read_png(raw / "masks_rbc" / (std::string(id) + ".png")));
        const auto wbc = binarize_mask(read_png(raw / "masks_wbc" / (std::string(id) + ".png")));
        const auto plt = binarize_mask(read_png(raw / "masks_plt" / (std::string(id) + ".png")));

        // the stored label must split into the overwrite projection of the masks
        const auto split = split_label(entry.label);
        bool masks_ok = true;
        for (std::size_t p = 0; p < split.rbc.bits.size() && masks_ok; ++p) {
            masks_ok = split.plt.bits[p] == plt.bits[p] &&
                       split.wbc.bits[p] == (wbc.bits[p] && !plt.bits[p] ? 1 : 0) &&
                       split.rbc.bits[p] == (rbc.bits[p] && !wbc.bits[p] && !plt.bits[p] ? 1 : 0);
        }
        check.expect(masks_ok, std::string("overwrite-rule round-trip failed for ") + id);

        // counted mask pixels must equal the generator-reported painted areas
        const auto& painted = meta_entries[i].at("painted");
        std::int64_t rbc_area = 0, wbc_area = 0, plt_area = 0;
        for (auto b : rbc.bits) rbc_area += b;
        for (auto b : wbc.bits) wbc_area += b;
        for (auto b : plt.bits) plt_area += b;
        check.expect(rbc_area == painted.at("rbc").get<std::int64_t>() &&
                         wbc_area == painted.at("wbc").get<std::int64_t>() &&
                         plt_area == painted.at("plt").get<std::int64_t>(),
                     std::string("painted areas disagree for ") + id);
    }
}

void criterion_frequencies(Check& check, const std::filesystem::path& scratch) {
    // default config over 20 images, counted on the fused labels
    SynthConfig config;
    std::vector<LabelMask> labels;
    const auto raw = scratch / "raw";
    if (std::filesystem::exists(raw / kManifestName)) {
        for (const auto& e : load_all(read_manifest(raw))) labels.push_back(e.label);
    } else {
        for (int i = 0; i < 20; ++i) {
            SynthConfig entry = config;
            entry.seed = substream_seed(config.seed, static_cast<std::uint64_t>(i));
            const auto s = generate(entry);
            labels.push_back(fuse_masks(s.rbc, s.wbc, s.plt));
        }
    }
    const auto report = count_corpus(labels, false);
    check.expect(report.frequencies_defined, "frequencies undefined on the synthetic corpus");
    const double targets[3] = {0.9355, 0.0609, 0.0034};
    for (int c = 0; c < 3; ++c) {
        const double freq = report.frequencies[static_cast<std::size_t>(c + 1)];
        check.expect(std::abs(freq - targets[c]) < 0.03,
                     class_name(c + 1) + " frequency " + std::to_string(freq) + " more than 3 points from " +
                         std::to_string(targets[c]));
    }
}

// ---- criterion 8: training determinism via the CLI -------------------------

void criterion_determinism(Check& check, const std::filesystem::path& scratch) {
    const auto store = scratch / "det_store";
    {
        const auto config = testutil::tiny_smear_config(8001);
        std::ofstream(scratch / "synth.json") << synth_config_to_json(config).dump();
    }
    check.expect(run_command("synth --count 3 --out " + store.string() + " --config " +
                                 (scratch / "synth.json").string(),
                             scratch / "det_synth.txt") == 0,
                 "synth subcommand failed");

    const nlohmann::json train_config{{"epochs", 3},
                                      {"train_count", 2},
                                      {"test_count", 1},
                                      {"seed", 77},
                                      {"network", {{"preset", "tiny"}, {"input_size", {32, 32}}}}};
    std::ofstream(scratch / "train.json") << train_config.dump();

    for (const char* run : {"det_a", "det_b"}) {
        const int rc = run_command("train --data " + store.string() + " --config " +
                                       (scratch / "train.json").string() + " --out " +
                                       (scratch / run).string(),
                                   scratch / (std::string(run) + ".txt"));
        check.expect(rc == 0, std::string("train subcommand failed for ") + run);
        if (rc != 0) return;
    }

    check.expect(slurp(scratch / "det_a/ckpt_epoch3.bin") == slurp(scratch / "det_b/ckpt_epoch3.bin"),
                 "checkpoints differ between identical runs");
    check.expect(strip_wall_time(slurp(scratch / "det_a/train_log.csv")) ==
                     strip_wall_time(slurp(scratch / "det_b/train_log.csv")),
                 "training logs differ beyond the wall-time column");
}

}  // namespace

int main() {
    testutil::TempDir scratch("acceptance");

    struct Criterion {
        int id;
        const char* name;
        double time_budget_s;  // 0 = unbounded
        std::function<void(Check&)> body;
    };
    const std::vector<Criterion> criteria{
        {1, "aggregate consistency with published tables", 1.0,
         [](Check& c) { criterion_aggregate_consistency(c); }},
        {2, "metric-oracle equivalence", 30.0, [](Check& c) { criterion_metric_oracles(c); }},
        {3, "gradient verification", 120.0, [](Check& c) { criterion_gradients(c); }},
        {4, "vgg16 300x300 shape round-trip", 120.0, [](Check& c) { criterion_shape_roundtrip(c); }},
        {5, "overfit sanity on two synthetic smears", 180.0, [](Check& c) { criterion_overfit(c); }},
        {6, "synth/preprocess/split pipeline round-trip", 60.0,
         [&](Check& c) { criterion_pipeline_roundtrip(c, scratch.path()); }},
        {7, "synthetic corpus frequency realism", 60.0,
         [&](Check& c) { criterion_frequencies(c, scratch.path()); }},
        {8, "training determinism", 0.0, [&](Check& c) { criterion_determinism(c, scratch.path()); }},
    };

    int failed = 0;
    for (const auto& criterion : criteria) {
        Check check;
        const auto t0 = std::chrono::steady_clock::now();
        std::string error;
        try {
            criterion.body(check);
        } catch (const std::exception& e) {
            check.expect(false, std::string("exception: ") + e.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (criterion.time_budget_s > 0)
            check.expect(seconds < criterion.time_budget_s,
                         "runtime " + std::to_string(seconds) + "s exceeds the " +
                             std::to_string(criterion.time_budget_s) + "s budget");
        if (check.failures == 0) {
            std::printf("[PASS] criterion %d: %s (%.1fs)\n", criterion.id, criterion.name, seconds);
        } else {
            ++failed;
            std::printf("[FAIL] criterion %d: %s (%.1fs) - %d check(s) failed; first: %s\n",
                        criterion.id, criterion.name, seconds, check.failures,
                        check.first_message.c_str());
        }
        std::fflush(stdout);
    }

    if (failed == 0)
        std::printf("acceptance: all %zu criteria passed\n", criteria.size());
    else
        std::printf("acceptance: %d of %zu criteria FAILED\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
