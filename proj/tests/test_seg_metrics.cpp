#include <doctest.h>

#include <array>
#include <cmath>

#include "dcedseg/seg_metrics.hpp"
#include "test_util.hpp"

using namespace dcedseg;

namespace {

LabelMask mask_of(int w, int h, std::initializer_list<int> ids) {
    LabelMask m{w, h, {}};
    for (int id : ids) m.ids.push_back(static_cast<std::uint8_t>(id));
    return m;
}

// square of class c with top-left corner (x0, y0)
LabelMask square_mask(int w, int h, int x0, int y0, int side, int c) {
    LabelMask m{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) m.at(x, y) = static_cast<std::uint8_t>(c);
    return m;
}

}  // namespace

TEST_CASE("confusion of a perfect prediction is diagonal") {
    Rng rng(1);
    const auto truth = testutil::random_label_mask(8, 8, rng);
    const auto cm = confusion(truth, truth);
    for (int t = 0; t < 4; ++t)
        for (int p = 0; p < 4; ++p)
            if (t != p) CHECK(cm.at(t, p) == 0);
    CHECK(cm.trace() == cm.total());
}

TEST_CASE("background-only truth yields an empty matrix and downstream errors") {
    LabelMask bg{4, 4, std::vector<std::uint8_t>(16, 0)};
    const auto cm = confusion(bg, bg);
    CHECK(cm.total() == 0);
    CHECK_THROWS_AS(class_accuracy(cm, 1), UndefinedMetricError);
    CHECK_THROWS_AS(binary_accuracy(cm, 1), UndefinedMetricError);
    CHECK_THROWS_AS(iou(cm, 1), UndefinedMetricError);
    CHECK_THROWS_AS(build_report(cm, {}), UndefinedMetricError);
}

TEST_CASE("confusion matches a brute-force per-pixel tally") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pred = testutil::random_label_mask(8, 8, rng);
        const auto truth = testutil::random_label_mask(8, 8, rng);
        const auto cm = confusion(pred, truth);
        for (int c = 1; c <= 3; ++c) {
            const auto s = testutil::brute_class_stats(pred, truth, c, {1, 2, 3});
            CHECK(cm.at(c, c) == s.tp);
            CHECK(cm.row_sum(c) - cm.at(c, c) == s.fn);
            CHECK(cm.col_sum(c) - cm.at(c, c) == s.fp);
        }
    }
}

TEST_CASE("class accuracy and binary accuracy on the 2x2 toy") {
    // truth [1,1,2,2], pred [1,2,2,2]
    const auto truth = mask_of(2, 2, {1, 1, 2, 2});
    const auto pred = mask_of(2, 2, {1, 2, 2, 2});
    const auto cm = confusion(pred, truth, {1, 2});
    CHECK(class_accuracy(cm, 1) == 0.5);
    CHECK(class_accuracy(cm, 2) == 1.0);
    CHECK(binary_accuracy(cm, 1) == 0.75);
}

TEST_CASE("accuracies are 1 on perfect predictions, 0 on total misses") {
    const auto truth = mask_of(2, 1, {1, 2});
    const auto cm_perfect = confusion(truth, truth, {1, 2});
    CHECK(class_accuracy(cm_perfect, 1) == 1.0);
    CHECK(binary_accuracy(cm_perfect, 1) == 1.0);
    CHECK(iou(cm_perfect, 1) == 1.0);

    const auto wrong = mask_of(2, 1, {2, 1});
    const auto cm_wrong = confusion(wrong, truth, {1, 2});
    CHECK(class_accuracy(cm_wrong, 1) == 0.0);
    CHECK(binary_accuracy(cm_wrong, 1) == 0.0);
    CHECK(iou(cm_wrong, 1) == 0.0);
}

TEST_CASE("classwise metrics match brute-force oracles on random masks") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto pred = testutil::random_label_mask(8, 8, rng);
        const auto truth = testutil::random_label_mask(8, 8, rng);
        const auto cm = confusion(pred, truth);
        for (int c = 1; c <= 3; ++c) {
            const auto s = testutil::brute_class_stats(pred, truth, c, {1, 2, 3});
            if (s.tp + s.fn > 0)
                CHECK(class_accuracy(cm, c) ==
                      static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn));
            if (s.tp + s.fp + s.fn > 0)
                CHECK(iou(cm, c) ==
                      static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp + s.fn));
            CHECK(binary_accuracy(cm, c) ==
                  static_cast<double>(s.tp + s.tn) /
                      static_cast<double>(s.tp + s.tn + s.fp + s.fn));
            // the union denominator dominates the recall denominator
            if (s.tp + s.fn > 0) CHECK(iou(cm, c) <= class_accuracy(cm, c));
        }
    }
}

TEST_CASE("consistent label permutations permute metrics and keep global accuracy") {
    Rng rng(4);
    const std::array<int, 4> perm{0, 3, 1, 2};  // permutes only the cell classes
    for (int trial = 0; trial < 20; ++trial) {
        auto pred = testutil::random_label_mask(8, 8, rng);
        auto truth = testutil::random_label_mask(8, 8, rng);
        auto pred_p = pred;
        auto truth_p = truth;
        for (auto& id : pred_p.ids) id = static_cast<std::uint8_t>(perm[id]);
        for (auto& id : truth_p.ids) id = static_cast<std::uint8_t>(perm[id]);

        const auto cm = confusion(pred, truth);
        const auto cm_p = confusion(pred_p, truth_p);
        CHECK(cm.total() == cm_p.total());
        CHECK(cm.trace() == cm_p.trace());
        for (int c = 1; c <= 3; ++c) {
            CHECK(cm.row_sum(c) == cm_p.row_sum(perm[static_cast<std::size_t>(c)]));
            if (cm.row_sum(c) > 0)
                CHECK(class_accuracy(cm, c) ==
                      class_accuracy(cm_p, perm[static_cast<std::size_t>(c)]));
        }
    }
}

TEST_CASE("bf_score is 1 when boundaries coincide") {
    const auto m = square_mask(8, 8, 2, 2, 3, 1);
    const auto bf = bf_score(m, m, 1, 0.0);
    CHECK(bf.defined);
    CHECK(bf.value == 1.0);
}

TEST_CASE("bf_score is undefined when the class is absent from both masks") {
    LabelMask empty{6, 6, std::vector<std::uint8_t>(36, 0)};
    const auto bf = bf_score(empty, empty, 2, 1.0);
    CHECK_FALSE(bf.defined);
    // a fully interior class has no boundary either: border alone is not boundary
    LabelMask full{6, 6, std::vector<std::uint8_t>(36, 2)};
    CHECK_FALSE(bf_score(full, full, 2, 1.0).defined);
}

TEST_CASE("a square shifted by one pixel scores 1 at tolerance 1") {
    const auto truth = square_mask(12, 12, 3, 3, 4, 1);
    const auto pred = square_mask(12, 12, 4, 3, 4, 1);
    const auto bf1 = bf_score(pred, truth, 1, 1.0);
    CHECK(bf1.defined);
    CHECK(bf1.value == 1.0);

    const auto bf0 = bf_score(pred, truth, 1, 0.0);
    const auto oracle = testutil::brute_boundary_match(pred, truth, 1, 0.0);
    CHECK(bf0.value < 1.0);
    const double precision = static_cast<double>(oracle.pred_matched) / oracle.pred_total;
    const double recall = static_cast<double>(oracle.truth_matched) / oracle.truth_total;
    CHECK(bf0.value == 2.0 * precision * recall / (precision + recall));
}

TEST_CASE("boundary matching equals the exhaustive oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const int w = static_cast<int>(rng.uniform_int(4, 16));
        const int h = static_cast<int>(rng.uniform_int(4, 16));
        const auto pred = testutil::random_label_mask(w, h, rng);
        const auto truth = testutil::random_label_mask(w, h, rng);
        for (double tol : {0.0, 1.0, 2.0}) {
            for (int c = 1; c <= 3; ++c) {
                const auto got = boundary_match(pred, truth, c, tol);
                const auto want = testutil::brute_boundary_match(pred, truth, c, tol);
                CHECK(got.pred_total == want.pred_total);
                CHECK(got.pred_matched == want.pred_matched);
                CHECK(got.truth_total == want.truth_total);
                CHECK(got.truth_matched == want.truth_matched);
            }
        }
    }
}

TEST_CASE("eight-connected boundaries match the oracle and see diagonal neighbors") {
    // a diagonal checker pattern: under 4-connectivity the single off-class
    // diagonal neighbor is invisible, under 8-connectivity it is boundary
    LabelMask m{4, 4, std::vector<std::uint8_t>(16, 1)};
    m.at(0, 0) = 2;
    const auto four = boundary_match(m, m, 1, 0.0, false);
    const auto eight = boundary_match(m, m, 1, 0.0, true);
    CHECK(eight.truth_total >= four.truth_total);

    Rng rng(9);
    for (int trial = 0; trial < 15; ++trial) {
        const auto pred = testutil::random_label_mask(10, 10, rng);
        const auto truth = testutil::random_label_mask(10, 10, rng);
        for (int c = 1; c <= 3; ++c) {
            const auto got = boundary_match(pred, truth, c, 1.0, true);
            const auto pb = testutil::brute_boundary_pixels(pred, c, true);
            const auto tb = testutil::brute_boundary_pixels(truth, c, true);
            CHECK(got.pred_total == static_cast<std::int64_t>(pb.size()));
            CHECK(got.truth_total == static_cast<std::int64_t>(tb.size()));
        }
    }
}

TEST_CASE("bf_score is symmetric in pred and truth") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = testutil::random_label_mask(10, 10, rng);
        const auto b = testutil::random_label_mask(10, 10, rng);
        for (int c = 1; c <= 3; ++c) {
            const auto ab = bf_score(a, b, c, 1.0);
            const auto ba = bf_score(b, a, c, 1.0);
            CHECK(ab.defined == ba.defined);
            CHECK(ab.value == ba.value);
        }
    }
}

TEST_CASE("default bf tolerance follows the diagonal rule") {
    CHECK(default_bf_tolerance(300, 300) == std::ceil(0.0075 * std::sqrt(2.0 * 300 * 300)));
    CHECK(default_bf_tolerance(300, 300) == 4.0);
}

TEST_CASE("aggregate reproduces the published table relations") {
    // classwise accuracy and IoU of the rbc/wbc/platelet rows
    std::vector<ClassMetrics> classes(3);
    classes[0] = {1, 0.97451, 0.54431, 0.59489};
    classes[1] = {2, 0.93342, 0.40626, 0.33086};
    classes[2] = {3, 0.85112, 0.009304, 0.15307};
    const std::vector<double> freqs{0.9355, 0.0609, 0.0034};

    const auto agg = aggregate(classes, freqs);
    CHECK(std::abs(agg.mean_accuracy - 0.91969) < 5e-5);
    CHECK(std::abs(agg.mean_iou - 0.31996) < 5e-5);
    CHECK(std::abs(agg.weighted_iou - 0.53511) < 2e-3);
    CHECK(std::abs(agg.global_accuracy - 0.97184) < 1e-3);
}

TEST_CASE("aggregate means are exact arithmetic means of their inputs") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ClassMetrics> classes;
        std::vector<double> freqs;
        double acc_sum = 0, iou_sum = 0;
        const int n = static_cast<int>(rng.uniform_int(1, 5));
        for (int i = 0; i < n; ++i) {
            ClassMetrics m;
            m.class_id = i + 1;
            m.accuracy = rng.uniform();
            m.iou = rng.uniform();
            acc_sum += *m.accuracy;
            iou_sum += *m.iou;
            classes.push_back(m);
            freqs.push_back(rng.uniform());
        }
        const auto agg = aggregate(classes, freqs);
        CHECK(agg.mean_accuracy == acc_sum / n);
        CHECK(agg.mean_iou == iou_sum / n);
        CHECK_FALSE(agg.mean_bf.has_value());
    }
}

TEST_CASE("aggregate skips undefined entries instead of counting them as zero") {
    std::vector<ClassMetrics> classes(2);
    classes[0] = {1, 0.8, 0.5, 0.6};
    classes[1] = {3, std::nullopt, 0.2, std::nullopt};  // platelet absent from truth
    const auto agg = aggregate(classes, {0.9, 0.1});
    CHECK(agg.mean_accuracy == 0.8);
    CHECK(agg.mean_iou == doctest::Approx(0.35).epsilon(1e-15));
    REQUIRE(agg.mean_bf.has_value());
    CHECK(*agg.mean_bf == 0.6);
}

TEST_CASE("build_report assembles frequencies that sum to one") {
    Rng rng(8);
    const auto pred = testutil::random_label_mask(16, 16, rng);
    const auto truth = testutil::random_label_mask(16, 16, rng);
    auto cm = confusion(pred, truth);
    std::vector<BoundaryCounts> boundary;
    for (int c = 1; c <= 3; ++c) boundary.push_back(boundary_match(pred, truth, c, 2.0));
    const auto report = build_report(cm, boundary);
    double freq_sum = 0;
    for (double f : report.frequencies) freq_sum += f;
    CHECK(std::abs(freq_sum - 1.0) <= 1e-12);
    CHECK(report.total_pixels == cm.total());

    const auto j = report_to_json(report);
    for (const char* key :
         {"global_accuracy", "mean_accuracy", "mean_iou", "weighted_iou", "mean_bf_score"})
        CHECK(j.at("aggregates").contains(key));
    const auto table = report_to_table(report);
    CHECK(table.find("rbc") != std::string::npos);
    CHECK(table.find("platelet") != std::string::npos);
}
