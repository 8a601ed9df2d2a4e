#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "handseg/eval.hpp"
#include "test_util.hpp"

using namespace handseg;
using namespace handseg::test;

TEST_CASE("accuracy trivials") {
    Tensor pred({1, 2, 2}, {0.9, 0.1, 0.6, 0.4});
    Tensor target({1, 2, 2}, {1, 0, 0, 1});
    auto r = accuracy(pred, target);
    CHECK(r.counts.tp == 1);
    CHECK(r.counts.tn == 1);
    CHECK(r.counts.fp == 1);
    CHECK(r.counts.fn == 1);
    CHECK(r.accuracy == doctest::Approx(0.5));
    CHECK(r.counts.total() == 4);

    SUBCASE("threshold boundary counts p >= t as positive") {
        Tensor p({1, 1, 1}, {0.5});
        Tensor t1({1, 1, 1}, {1.0});
        CHECK(accuracy(p, t1, 0.5).accuracy == 1.0);
    }
    SUBCASE("perfect and inverted predictions") {
        CHECK(accuracy(target, target).accuracy == 1.0);
        Tensor inv({1, 2, 2}, {0, 1, 1, 0});
        CHECK(accuracy(inv, target).accuracy == 0.0);
    }
    SUBCASE("shape mismatch rejected") {
        CHECK_THROWS_AS(accuracy(Tensor({1, 2, 3}), Tensor({1, 3, 2})), std::invalid_argument);
    }
}

TEST_CASE("roc curve properties") {
    SUBCASE("endpoints") {
        Rng rng(2);
        Tensor pred = random_tensor(rng, {1, 20, 20}, 0.01, 0.99);
        Tensor target({1, 20, 20});
        for (auto& v : target.data()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        auto roc = roc_curve({pred}, {target}, 64);
        REQUIRE(roc.size() == 64);
        CHECK(roc.front().threshold == 0.0);
        CHECK(roc.front().tpr == 1.0);
        CHECK(roc.front().fpr == 1.0);
        CHECK(roc.back().threshold == 1.0);
        CHECK(roc.back().tpr == 0.0);
        CHECK(roc.back().fpr == 0.0);
        for (std::size_t i = 1; i < roc.size(); ++i) {
            CHECK(roc[i].tpr <= roc[i - 1].tpr);
            CHECK(roc[i].fpr <= roc[i - 1].fpr);
        }
    }
    SUBCASE("perfect separation hugs the corner") {
        Tensor pred({1, 2, 2}, {0.9, 0.95, 0.05, 0.1});
        Tensor target({1, 2, 2}, {1, 1, 0, 0});
        auto roc = roc_curve({pred}, {target}, 101);
        // at threshold 0.5: all positives above, all negatives below
        const auto& mid = roc[50];
        CHECK(mid.tpr == 1.0);
        CHECK(mid.fpr == 0.0);
    }
    SUBCASE("random scores lie on the diagonal within 0.02 at a million pixels") {
        Rng rng(6);
        Tensor pred({1, 1000, 1000});
        Tensor target({1, 1000, 1000});
        for (auto& v : pred.data()) v = rng.uniform(0, 1);
        for (auto& v : target.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        auto roc = roc_curve({pred}, {target}, 256);
        for (const auto& p : roc) CHECK(std::abs(p.tpr - p.fpr) < 0.02);
    }
}

TEST_CASE("threshold sweep") {
    SUBCASE("perfectly separated scores give a wide plateau") {
        Tensor pred({1, 1, 4}, {0.05, 0.1, 0.9, 0.95});
        Tensor target({1, 1, 4}, {0, 0, 1, 1});
        auto sweep = threshold_sweep({pred}, {target}, 256);
        CHECK(sweep.best_accuracy == 1.0);
        CHECK(sweep.best_threshold > 0.1);
        CHECK(sweep.best_threshold <= 0.9);
        // accuracy is 1.0 on (0.1, 0.9], roughly 0.8 of the axis
        CHECK(sweep.plateau_width > 0.7);
        CHECK(sweep.plateau_width < 0.9);
    }
    SUBCASE("monotone relabeling of scores preserves the best accuracy") {
        Rng rng(8);
        Tensor pred({1, 10, 10});
        Tensor target({1, 10, 10});
        for (auto& v : pred.data()) v = rng.uniform(0.1, 0.9);
        for (std::size_t i = 0; i < target.size(); ++i)
            target.data()[i] = pred.data()[i] + rng.uniform(-0.3, 0.3) > 0.5 ? 1.0 : 0.0;
        auto base = threshold_sweep({pred}, {target}, 1001);
        Tensor squashed = pred;
        for (auto& v : squashed.data()) v = v * v;  // strictly increasing on [0,1]
        auto mono = threshold_sweep({squashed}, {target}, 1001);
        CHECK(mono.best_accuracy == doctest::Approx(base.best_accuracy).epsilon(5e-3));
    }
    SUBCASE("sweep accuracy at 0.5 matches the direct computation") {
        Rng rng(9);
        Tensor pred = random_tensor(rng, {1, 16, 16}, 0, 1);
        Tensor target({1, 16, 16});
        for (auto& v : target.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        auto sweep = threshold_sweep({pred}, {target}, 3);  // thresholds 0, 0.5, 1
        CHECK(sweep.points[1].first == doctest::Approx(0.5));
        CHECK(sweep.points[1].second == doctest::Approx(accuracy(pred, target, 0.5).accuracy));
    }
}

TEST_CASE("diff map") {
    Tensor target({1, 5, 5});
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) target.at(0, y, x) = x < 2 ? 1.0 : 0.0;

    SUBCASE("identical masks: no mismatches, boundary fraction 1 by convention") {
        auto r = diff_map(target, target);
        CHECK(r.mismatches == 0);
        CHECK(r.boundary_fraction == 1.0);
        for (real v : r.map.data()) CHECK(v == 0.0);
    }
    SUBCASE("accuracy equals one minus the mean diff map") {
        Rng rng(3);
        Tensor pred({1, 5, 5});
        for (auto& v : pred.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        auto r = diff_map(pred, target);
        real mean = 0;
        for (real v : r.map.data()) mean += v;
        mean /= static_cast<real>(r.map.size());
        CHECK(accuracy(pred, target).accuracy == doctest::Approx(1.0 - mean));
        CHECK(r.mismatches == static_cast<std::uint64_t>(mean * 25 + 0.5));
    }
    SUBCASE("mismatch on the boundary column counts as boundary") {
        Tensor pred = target;
        pred.at(0, 2, 2) = 1.0;  // adjacent to the mask edge at x=1
        auto r = diff_map(pred, target);
        CHECK(r.mismatches == 1);
        CHECK(r.boundary_fraction == 1.0);
    }
    SUBCASE("far-away mismatch is not boundary") {
        Tensor pred = target;
        pred.at(0, 2, 4) = 1.0;  // two columns away from the edge
        auto r = diff_map(pred, target);
        CHECK(r.mismatches == 1);
        CHECK(r.boundary_fraction == 0.0);
    }
}

namespace {

Sample colored_sample(real hand_r, real bg_r, int h = 20, int w = 20) {
    Sample s;
    s.image = Tensor({3, h, w});
    s.mask = Tensor({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool hand = x < w / 2;
            s.mask.at(0, y, x) = hand ? 1.0 : 0.0;
            s.image.at(0, y, x) = hand ? hand_r : bg_r;
            s.image.at(1, y, x) = 0.4;
            s.image.at(2, y, x) = 0.4;
        }
    return s;
}

}  // namespace

TEST_CASE("color baseline") {
    SUBCASE("separable colors are classified correctly") {
        std::vector<Sample> train{colored_sample(0.8, 0.2), colored_sample(0.8, 0.2)};
        ColorModel model = color_baseline_fit(train);
        CHECK(model.prior == doctest::Approx(0.5));
        Tensor probs = color_baseline_predict(model, train[0].image);
        CHECK(accuracy(probs, train[0].mask).accuracy == 1.0);
    }
    SUBCASE("identical class colors give posterior near the prior") {
        std::vector<Sample> train{colored_sample(0.5, 0.5)};
        ColorModel model = color_baseline_fit(train);
        Tensor probs = color_baseline_predict(model, train[0].image);
        for (real v : probs.data()) CHECK(v == doctest::Approx(model.prior).epsilon(1e-9));
    }
    SUBCASE("training order does not matter") {
        std::vector<Sample> a{colored_sample(0.8, 0.2), colored_sample(0.6, 0.3)};
        std::vector<Sample> b{a[1], a[0]};
        ColorModel ma = color_baseline_fit(a);
        ColorModel mb = color_baseline_fit(b);
        CHECK(ma.hand_hist == mb.hand_hist);
        CHECK(ma.bg_hist == mb.bg_hist);
        CHECK(ma.prior == mb.prior);
    }
    SUBCASE("histograms are normalized") {
        std::vector<Sample> train{colored_sample(0.8, 0.2)};
        ColorModel model = color_baseline_fit(train);
        real sh = 0, sb = 0;
        for (real v : model.hand_hist) sh += v;
        for (real v : model.bg_hist) sb += v;
        CHECK(sh == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(sb == doctest::Approx(1.0).epsilon(1e-9));
    }
}
