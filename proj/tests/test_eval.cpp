#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "coref/error.hpp"
#include "coref/eval.hpp"
#include "support.hpp"

using namespace coref;

namespace {

std::vector<Prediction> preds_of(const std::vector<std::pair<double, bool>>& items) {
    std::vector<Prediction> out;
    for (std::size_t i = 0; i < items.size(); ++i) out.push_back({"p" + std::to_string(i), items[i].first, items[i].second});
    return out;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("precision, recall and F1 from the published confusion counts") {
    const Confusion c{531, 424, 559, 20272};
    const auto m = prf1(c);
    CHECK(m.precision == doctest::Approx(0.556).epsilon(0.002));
    CHECK(m.recall == doctest::Approx(0.487).epsilon(0.002));
    CHECK(m.f1 == doctest::Approx(0.519).epsilon(0.002));
    CHECK(c.total() == 21786);
}

TEST_CASE("undefined ratios are zero") {
    CHECK(prf1(Confusion{0, 0, 0, 10}).f1 == 0.0);
    CHECK(prf1(Confusion{0, 0, 5, 10}).precision == 0.0);
    CHECK(prf1(Confusion{0, 3, 0, 10}).recall == 0.0);
    const auto perfect = prf1(Confusion{4, 0, 0, 1});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
}

TEST_CASE("the threshold boundary is inclusive") {
    const auto preds = preds_of({{0.5, true}, {0.49999, false}, {0.5, false}});
    const auto c = confusion(preds, 0.5);
    CHECK(c.tp == 1);
    CHECK(c.fp == 1);
    CHECK(c.tn == 1);
    CHECK(c.fn == 0);
}

TEST_CASE("AUC examples") {
    CHECK(auc_roc(preds_of({{0.9, true}, {0.1, false}})) == 1.0);
    CHECK(auc_roc(preds_of({{0.1, true}, {0.9, false}})) == 0.0);
    CHECK(auc_roc(preds_of({{0.5, true}, {0.5, false}})) == 0.5);
    CHECK(auc_roc(preds_of({{0.8, true}, {0.4, true}, {0.6, false}, {0.2, false}})) == 0.75);
    CHECK_THROWS_AS(auc_roc(preds_of({{0.8, true}, {0.4, true}})), UndefinedMetricError);
    CHECK_THROWS_AS(auc_roc(std::vector<Prediction>{}), UndefinedMetricError);
}

TEST_CASE("AUC matches the pairwise oracle and ignores monotone transforms") {
    std::mt19937_64 gen(5);
    for (int instance = 0; instance < 200; ++instance) {
        const auto preds = support::random_predictions(gen, 2 + gen() % 199, instance % 2 == 0);
        if (!support::has_both_classes(preds)) continue;
        const double auc = auc_roc(preds);
        CHECK(std::abs(auc - support::brute_auc(preds)) < 1e-12);
        auto squashed = preds;
        for (auto& p : squashed) p.probability = std::pow(p.probability, 3.0) * 0.5 + 0.1;
        CHECK(std::abs(auc_roc(squashed) - auc) < 1e-12);
    }
}

TEST_CASE("threshold tuning examples") {
    const auto preds = preds_of({{0.9, true}, {0.8, true}, {0.3, false}, {0.2, false}});
    const auto best = tune_threshold(preds);
    CHECK(best.f1 == 1.0);
    CHECK(best.threshold == doctest::Approx(0.55));

    const auto mixed = preds_of({{0.95, true}, {0.9, false}, {0.8, true}, {0.1, false}});
    const auto choice = tune_threshold(mixed);
    CHECK(choice.threshold == doctest::Approx(0.45));
    CHECK(choice.f1 == doctest::Approx(0.8));

    const auto all_positive = preds_of({{0.2, true}, {0.7, true}});
    CHECK(tune_threshold(all_positive).threshold == 0.0);
    CHECK(tune_threshold(all_positive).f1 == 1.0);

    const auto cands = threshold_candidates(preds);
    CHECK(cands.front() == 0.0);
    CHECK(cands.back() == 1.0);
    CHECK(cands.size() == 5);
}

TEST_CASE("tuner agrees with exhaustive search and beats random thresholds") {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int instance = 0; instance < 300; ++instance) {
        const auto preds = support::random_predictions(gen, 1 + gen() % 12, instance % 3 == 0);
        const auto got = tune_threshold(preds);
        const auto [t, f1] = support::brute_tune(preds);
        CHECK(got.threshold == doctest::Approx(t));
        CHECK(got.f1 == doctest::Approx(f1));
        CHECK(support::direct_f1(preds, got.threshold) == doctest::Approx(got.f1));
        for (int k = 0; k < 10; ++k) CHECK(got.f1 + 1e-12 >= support::direct_f1(preds, u(gen)));
    }
}

TEST_CASE("calibration targets from counts") {
    const auto t = calibration_targets(100, 400, 0.5);
    CHECK(t.downsampled_positive_rate == doctest::Approx(1.0 / 3.0));
    CHECK(t.target_rate == doctest::Approx(0.20));
    CHECK(t.product_rate == doctest::Approx(1.0 / 6.0));

    const auto full = calibration_targets(8010, 7643471, 0.02);
    CHECK(full.target_rate == doctest::Approx(8010.0 / 7651481.0));
    CHECK(full.target_rate == doctest::Approx(0.001047).epsilon(0.001));
    CHECK(full.downsampled_positive_rate == doctest::Approx(0.0498).epsilon(0.04));
}

TEST_CASE("naive calibration report carries the discrepancy note") {
    std::vector<Prediction> preds;
    for (int i = 0; i < 100; ++i) preds.push_back({"p" + std::to_string(i), 0.5 + i / 250.0, true});
    for (int i = 0; i < 200; ++i) preds.push_back({"n" + std::to_string(i), i / 250.0, false});
    const auto naive = calibrate(preds, 0.5, 100, 400, CalibrationMode::naive);
    const auto text = format_calibration(naive);
    CHECK(text.find("0.3333") != std::string::npos);
    CHECK(text.find("0.2000") != std::string::npos);
    CHECK(text.find("17%") != std::string::npos);
    CHECK(naive.achieved_rate <= 0.2);
    CHECK(naive.achieved_rate >= 58.0 / 300.0);

    const auto weighted = calibrate(preds, 0.5, 100, 400, CalibrationMode::weighted);
    CHECK(format_calibration(weighted).find("17%") == std::string::npos);
    CHECK(weighted.achieved_rate <= 0.2);
    CHECK(weighted.achieved_rate >= 97.0 / 500.0);
    CHECK(weighted.effective_sample_size == doctest::Approx(500.0 / 2.0));
}

TEST_CASE("weighted calibration matches a direct weighted emission count") {
    std::mt19937_64 gen(8);
    for (int instance = 0; instance < 50; ++instance) {
        const auto preds = support::random_predictions(gen, 50 + gen() % 100, instance % 2 == 0);
        if (!support::has_both_classes(preds)) continue;
        const double d = 0.1;
        const auto r = calibrate(preds, d, 30, 3000);
        double total = 0, emitted = 0;
        for (const auto& p : preds) {
            const double w = p.label ? 1.0 : 1.0 / d;
            total += w;
            if (p.probability >= r.threshold) emitted += w;
        }
        CHECK(emitted / total == doctest::Approx(r.achieved_rate));
        CHECK(r.achieved_rate <= r.target_rate + 1e-12);
    }
}

TEST_CASE("with no negative sampling the modes coincide") {
    std::mt19937_64 gen(9);
    const auto preds = support::random_predictions(gen, 80, false);
    const auto a = calibrate(preds, 1.0, 10, 90, CalibrationMode::weighted);
    const auto b = calibrate(preds, 1.0, 10, 90, CalibrationMode::naive);
    CHECK(a.threshold == b.threshold);
    CHECK(a.achieved_rate == b.achieved_rate);
}

TEST_CASE("calibration edge cases") {
    const auto preds = preds_of({{0.9, true}, {0.9, false}, {0.1, false}});
    const auto r = calibrate(preds, 1.0, 1, 1000);
    CHECK(r.threshold > 0.9);
    CHECK(r.achieved_rate == 0.0);
    CHECK_THROWS_AS(calibrate(preds, 0.0, 1, 10), ArgumentError);
    CHECK_THROWS_AS(calibrate(preds, 1.5, 1, 10), ArgumentError);
    CHECK_THROWS_AS(calibrate(preds, 0.5, 0, 10), ArgumentError);
    CHECK_THROWS_AS(calibrate(std::vector<Prediction>{}, 0.5, 1, 10), ArgumentError);
    CHECK(parse_calibration_mode("naive") == CalibrationMode::naive);
    CHECK_THROWS_AS(parse_calibration_mode("exact"), ArgumentError);
}

TEST_CASE("ROC and PR curves") {
    const auto two = preds_of({{0.8, true}, {0.3, false}});
    const auto roc = roc_curve(two);
    REQUIRE(roc.size() == 3);
    CHECK(roc[0].fpr == 0.0);
    CHECK(roc[0].tpr == 0.0);
    CHECK(std::isinf(roc[0].threshold));
    CHECK(roc[1].tpr == 1.0);
    CHECK(roc[1].fpr == 0.0);
    CHECK(roc[2].fpr == 1.0);
    CHECK(trapezoid_area(roc) == 1.0);

    std::mt19937_64 gen(10);
    for (int instance = 0; instance < 50; ++instance) {
        const auto preds = support::random_predictions(gen, 2 + gen() % 150, instance % 2 == 0);
        if (!support::has_both_classes(preds)) continue;
        CHECK(trapezoid_area(roc_curve(preds)) == doctest::Approx(auc_roc(preds)).epsilon(1e-12));
        const auto pr = pr_curve(preds);
        for (std::size_t i = 1; i < pr.size(); ++i) {
            CHECK(pr[i].threshold > pr[i - 1].threshold);
            CHECK(pr[i].recall <= pr[i - 1].recall);
        }
    }
}

TEST_CASE("F1 depends on the threshold") {
    const auto preds = preds_of({{0.9, true}, {0.7, false}, {0.6, true}, {0.2, false}, {0.1, true}});
    CHECK(support::direct_f1(preds, 0.5) == doctest::Approx(prf1(confusion(preds, 0.5)).f1));
    CHECK(prf1(confusion(preds, 0.05)).f1 != prf1(confusion(preds, 0.8)).f1);
}

TEST_CASE("evaluate and its outputs") {
    const auto preds = preds_of({{0.9, true}, {0.7, false}, {0.6, true}, {0.2, false}});
    const auto r = evaluate(preds, 0.65);
    CHECK(r.counts.tp == 1);
    CHECK(r.counts.fp == 1);
    REQUIRE(r.auc.has_value());
    CHECK(*r.auc == 0.75);
    CHECK_FALSE(evaluate(preds_of({{0.3, true}}), 0.5).auc.has_value());
    const auto j = nlohmann::json::parse(report_json(r));
    CHECK(j["f1"].get<double>() == doctest::Approx(0.5));
    CHECK(format_report(r).find("f1         0.5000") != std::string::npos);

    const auto dir = support::scratch_dir("eval-curves");
    emit_curves(preds, dir / "m");
    CHECK(std::filesystem::exists(dir / "m.roc.csv"));
    CHECK(std::filesystem::exists(dir / "m.pr.csv"));
}

TEST_CASE("prediction files round trip exactly") {
    std::mt19937_64 gen(11);
    const auto preds = support::random_predictions(gen, 100, false);
    const auto dir = support::scratch_dir("eval-preds");
    write_predictions(preds, dir / "p.tsv");
    const auto back = read_predictions(dir / "p.tsv");
    REQUIRE(back.size() == preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(back[i].pair_id == preds[i].pair_id);
        CHECK(back[i].probability == preds[i].probability);
        CHECK(back[i].label == preds[i].label);
    }
    CHECK(std::stod(format_double(0.1)) == 0.1);
    CHECK(format_double(0.5) == "0.5");
    CHECK_THROWS_AS(read_predictions("/nonexistent/p.tsv"), IoError);
}

}  // TEST_SUITE
