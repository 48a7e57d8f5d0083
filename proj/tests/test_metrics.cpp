#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ckd/errors.hpp"
#include "ckd/eval/bench.hpp"
#include "ckd/eval/metrics.hpp"
#include "ckd/model/encoder.hpp"
#include "ckd/rng.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace ckd;
using namespace ckd::eval;

namespace {

PredictionSet random_predictions(std::uint64_t seed, std::size_t samples, std::size_t labels,
                                 double positive_rate = 0.3, bool quantized = false) {
    Rng rng(seed);
    PredictionSet preds;
    preds.scores.assign(samples, std::vector<double>(labels));
    preds.truths.assign(samples, std::vector<int>(labels));
    for (std::size_t i = 0; i < samples; ++i) {
        for (std::size_t j = 0; j < labels; ++j) {
            double s = rng.next_double();
            if (quantized) {
                s = std::round(s * 10.0) / 10.0; // force score ties
            }
            preds.scores[i][j] = s;
            preds.truths[i][j] = rng.next_double() < positive_rate ? 1 : 0;
        }
    }
    return preds;
}

} // namespace

TEST_CASE("accuracy: perfect, inverted, and counted examples") {
    PredictionSet perfect;
    perfect.scores = {{0.9, 0.1}, {0.2, 0.8}};
    perfect.truths = {{1, 0}, {0, 1}};
    CHECK(accuracy(perfect) == 1.0);

    PredictionSet flipped = perfect;
    flipped.truths = {{0, 1}, {1, 0}};
    CHECK(accuracy(flipped) == 0.0);

    // 3 samples x 25 labels with exactly 5 wrong cells -> 70/75.
    PredictionSet counted;
    counted.scores.assign(3, std::vector<double>(25, 0.9));
    counted.truths.assign(3, std::vector<int>(25, 1));
    for (int k = 0; k < 5; ++k) {
        counted.truths[k % 3][k] = 0;
    }
    CHECK(accuracy(counted) == doctest::Approx(70.0 / 75.0));
}

TEST_CASE("macro F1: perfect, zero-convention, and per-label oracle") {
    PredictionSet perfect;
    perfect.scores = {{0.9, 0.8}, {0.1, 0.7}, {0.8, 0.2}};
    perfect.truths = {{1, 1}, {0, 1}, {1, 0}};
    CHECK(macro_f1(perfect) == 1.0);

    // One perfectly predicted label; the other 24 have no positives in either
    // truth or prediction and contribute F1 = 0.
    PredictionSet lonely;
    lonely.scores.assign(4, std::vector<double>(25, 0.0));
    lonely.truths.assign(4, std::vector<int>(25, 0));
    for (std::size_t i = 0; i < 4; ++i) {
        lonely.scores[i][0] = 0.9;
        lonely.truths[i][0] = 1;
    }
    CHECK(macro_f1(lonely) == doctest::Approx(1.0 / 25.0));

    // Independent per-label precision/recall computation.
    const auto preds = random_predictions(42, 60, 5);
    const auto confusion = confusion_per_label(preds);
    double expected = 0.0;
    for (const auto& c : confusion) {
        const double tp = static_cast<double>(c.tp);
        const double precision = (c.tp + c.fp) ? tp / static_cast<double>(c.tp + c.fp) : 0.0;
        const double recall = (c.tp + c.fn) ? tp / static_cast<double>(c.tp + c.fn) : 0.0;
        expected += (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                               : 0.0;
    }
    expected /= static_cast<double>(confusion.size());
    CHECK(macro_f1(preds) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("auroc: perfect separation, tie convention, and the pairwise oracle") {
    PredictionSet perfect;
    perfect.scores = {{1.0}, {0.0}, {1.0}, {0.0}};
    perfect.truths = {{1}, {0}, {1}, {0}};
    CHECK(auroc(perfect) == 1.0);

    PredictionSet ties;
    ties.scores = {{0.4}, {0.4}, {0.4}, {0.4}};
    ties.truths = {{1}, {0}, {1}, {0}};
    CHECK(auroc(ties) == doctest::Approx(0.5));

    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto preds = random_predictions(seed, 40, 6, 0.35, true);
        for (std::size_t label = 0; label < 6; ++label) {
            std::vector<double> scores;
            std::vector<int> truths;
            for (std::size_t i = 0; i < preds.n_samples(); ++i) {
                scores.push_back(preds.scores[i][label]);
                truths.push_back(preds.truths[i][label]);
            }
            const auto mine = auroc_single(scores, truths);
            if (!mine) {
                continue;
            }
            CHECK(std::abs(*mine - testsupport::pairwise_auroc(scores, truths)) < 1e-12);
        }
    }
}

TEST_CASE("aupr: perfect, single positive ranked last, threshold-enumeration oracle") {
    PredictionSet perfect;
    perfect.scores = {{0.9}, {0.8}, {0.2}, {0.1}};
    perfect.truths = {{1}, {1}, {0}, {0}};
    CHECK(aupr(perfect) == doctest::Approx(1.0));

    // Single positive with the lowest score among n samples -> area 1/n.
    const std::size_t n = 8;
    std::vector<double> scores;
    std::vector<int> truths;
    for (std::size_t i = 0; i < n; ++i) {
        scores.push_back(static_cast<double>(n - i) / static_cast<double>(n + 1));
        truths.push_back(0);
    }
    truths.back() = 1; // lowest score
    const auto single = aupr_single(scores, truths);
    REQUIRE(single.has_value());
    CHECK(*single == doctest::Approx(1.0 / static_cast<double>(n)));

    for (std::uint64_t seed : {5ULL, 6ULL, 7ULL}) {
        const auto preds = random_predictions(seed, 50, 4, 0.3, true);
        for (std::size_t label = 0; label < 4; ++label) {
            std::vector<double> s;
            std::vector<int> t;
            for (std::size_t i = 0; i < preds.n_samples(); ++i) {
                s.push_back(preds.scores[i][label]);
                t.push_back(preds.truths[i][label]);
            }
            const auto mine = aupr_single(s, t);
            if (!mine) {
                continue;
            }
            CHECK(std::abs(*mine - testsupport::enumerated_aupr(s, t)) < 1e-12);
        }
    }
}

TEST_CASE("degenerate labels are excluded and named; all-degenerate raises") {
    PredictionSet preds;
    preds.scores = {{0.9, 0.9}, {0.1, 0.8}};
    preds.truths = {{1, 1}, {0, 1}}; // label 1 has no negatives
    const auto report = compute_metrics(preds);
    REQUIRE(report.auroc_excluded_labels.size() == 1);
    CHECK(report.auroc_excluded_labels[0] == 1);
    CHECK(!report.per_label[1].auroc.has_value());

    PredictionSet degenerate;
    degenerate.scores = {{0.9}, {0.8}};
    degenerate.truths = {{1}, {1}};
    CHECK_THROWS_AS(auroc(degenerate), contract_error);
    CHECK_THROWS_AS(aupr(degenerate), contract_error);
}

TEST_CASE("confusion counts partition n for every label") {
    PredictionSet zeros;
    zeros.scores.assign(7, std::vector<double>(3, 0.0));
    zeros.truths.assign(7, std::vector<int>(3, 0));
    for (const auto& c : confusion_per_label(zeros)) {
        CHECK(c.tn == 7);
        CHECK(c.tp + c.fp + c.fn == 0);
    }

    // Hand-tabulated six-sample case on one label:
    // scores  .9 .9 .2 .6 .4 .1  (threshold .5)
    // truths   1  0  1  1  0  0  -> tp=2 fp=1 fn=1 tn=2
    PredictionSet hand;
    hand.scores = {{0.9}, {0.9}, {0.2}, {0.6}, {0.4}, {0.1}};
    hand.truths = {{1}, {0}, {1}, {1}, {0}, {0}};
    const auto counts = confusion_per_label(hand);
    CHECK(counts[0].tp == 2);
    CHECK(counts[0].fp == 1);
    CHECK(counts[0].fn == 1);
    CHECK(counts[0].tn == 2);

    const auto preds = random_predictions(11, 83, 9);
    for (const auto& c : confusion_per_label(preds)) {
        CHECK(c.tp + c.fp + c.fn + c.tn == 83);
    }
}

TEST_CASE("metrics are invariant under sample permutation and pure across calls") {
    auto preds = random_predictions(9, 40, 5);
    const auto r1 = compute_metrics(preds);
    const auto r2 = compute_metrics(preds);
    CHECK(r1.accuracy == r2.accuracy);
    CHECK(r1.macro_f1 == r2.macro_f1);
    CHECK(r1.auroc == r2.auroc);
    CHECK(r1.aupr == r2.aupr);

    PredictionSet shuffled = preds;
    Rng rng(123);
    std::vector<std::size_t> order(preds.n_samples());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
        shuffled.scores[i] = preds.scores[order[i]];
        shuffled.truths[i] = preds.truths[order[i]];
    }
    const auto r3 = compute_metrics(shuffled);
    CHECK(r3.accuracy == r1.accuracy);
    CHECK(r3.macro_f1 == doctest::Approx(r1.macro_f1).epsilon(1e-15));
    CHECK(r3.auroc == doctest::Approx(r1.auroc).epsilon(1e-15));
    CHECK(r3.aupr == doctest::Approx(r1.aupr).epsilon(1e-15));
    for (std::size_t j = 0; j < r1.per_label.size(); ++j) {
        CHECK(r1.per_label[j].confusion.tp == r3.per_label[j].confusion.tp);
        CHECK(r1.per_label[j].confusion.tn == r3.per_label[j].confusion.tn);
    }
}

TEST_CASE("prediction set validation") {
    PredictionSet empty;
    CHECK_THROWS_AS(empty.validate(), contract_error);
    PredictionSet bad_threshold = random_predictions(1, 4, 2);
    bad_threshold.threshold = 1.0;
    CHECK_THROWS_AS(bad_threshold.validate(), config_error);
    PredictionSet bad_score = random_predictions(1, 4, 2);
    bad_score.scores[0][0] = 1.5;
    CHECK_THROWS_AS(bad_score.validate(), contract_error);
    PredictionSet bad_truth = random_predictions(1, 4, 2);
    bad_truth.truths[0][0] = 2;
    CHECK_THROWS_AS(bad_truth.validate(), contract_error);
}

TEST_CASE("report serializations carry the aggregation conventions") {
    const auto preds = random_predictions(3, 30, 3);
    const auto report = compute_metrics(preds);
    const std::vector<std::string> names = {"alpha", "beta", "gamma"};
    const auto json = metric_report_json(report, names);
    CHECK(json.find("micro over all sample x label cells") != std::string::npos);
    CHECK(json.find("\"per_label\"") != std::string::npos);
    const auto table = metric_report_table(report, names);
    CHECK(table.find("accuracy=") != std::string::npos);
    CHECK(table.find("alpha") != std::string::npos);

    testsupport::TempDir dir("confusion");
    const auto path = dir.path() / "confusion.csv";
    write_confusion_csv(path, report, names);
    const auto content = testsupport::read_file(path);
    CHECK(content.rfind("label,tn,fp,fn,tp\n", 0) == 0);
    CHECK(std::count(content.begin(), content.end(), '\n') == 4); // header + 3 labels
}

TEST_CASE("bench: same model as subject and reference lands near speedup 1") {
    model::EncoderConfig c;
    c.layers = 1;
    c.heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.max_seq_len = 16;
    c.vocab_size = 30;
    Rng rng(7);
    const auto enc = model::Encoder::init(c, rng);
    const auto head = model::Mlaph::init(c.d_model, 25, model::Mlaph::Pooling::last_token, rng);
    std::vector<model::TokenizedText> samples;
    for (int i = 0; i < 4; ++i) {
        model::TokenizedText t;
        t.ids.assign(16, 3 + i);
        t.ids[0] = 2;
        t.mask.assign(16, 1);
        samples.push_back(t);
    }
    auto a = bench_inference("subject", enc, head, samples, 200, 20);
    const auto b = bench_inference("reference", enc, head, samples, 200, 20);
    apply_reference(a, b);
    CHECK(a.speedup > 0.8);
    CHECK(a.speedup < 1.25);
    CHECK(a.parameter_count == b.parameter_count);
    CHECK(a.model_bytes == b.model_bytes);
    CHECK(a.mean_latency_s > 0.0);

    CHECK_THROWS_AS(bench_inference("x", enc, head, samples, 10, 0), contract_error);

    const auto json = bench_report_json({a, b}, BenchEnvironment::capture());
    CHECK(json.find("cpu_model") != std::string::npos);
    CHECK(json.find("\"subject\"") != std::string::npos);
}

TEST_CASE("default teacher dwarfs the default student in parameters") {
    auto teacher_cfg = model::EncoderConfig::teacher_defaults();
    auto student_cfg = model::EncoderConfig::student_defaults();
    teacher_cfg.vocab_size = 500;
    student_cfg.vocab_size = 500;
    Rng rng(1);
    const auto teacher = model::Encoder::init(teacher_cfg, rng);
    const auto student = model::Encoder::init(student_cfg, rng);
    CHECK(teacher.parameter_count() > 4 * student.parameter_count());
}
